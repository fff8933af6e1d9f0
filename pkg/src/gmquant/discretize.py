"""Apply schemes to Gaussians and mixtures, with 2-Wasserstein certificates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .distributions import DiscreteDistribution, GaussianComponent, GaussianMixture, GridDiscrete
from .errors import (
    BudgetViolation,
    DimensionMismatch,
    EmptySchemeSet,
    InputError,
    InvalidK,
    NotAligned,
    OffSupport,
)
from .quantize1d import cell_cost
from .schemes import CrossScheme, GridScheme, SchemeEntry, SchemeSet, alignment_check
from .special import normal_interval_mass

ALIGN_TOL = 1e-8
SUPPORT_TOL = 1e-8
KMEANS_MAX_ITER = 1000
DEFAULT_MC_SAMPLES = 100_000

EXACT = "exact"
UPPER_BOUND = "upper_bound"
UNAVAILABLE = "unavailable"


@dataclass(frozen=True)
class W2Certificate:
    """2-Wasserstein error (not squared) and how far it can be trusted.

    ``statistical`` marks values estimated by Monte Carlo; ``std_error`` is
    then the standard error of ``value``.
    """

    value: float
    kind: str
    statistical: bool = False
    std_error: float = 0.0

    def __post_init__(self):
        if self.kind not in (EXACT, UPPER_BOUND, UNAVAILABLE):
            raise ValueError(f"unknown certificate kind {self.kind!r}")
        if self.kind != UNAVAILABLE and not math.isfinite(self.value):
            raise ValueError("certificate value must be finite")

    @property
    def squared(self) -> float:
        return self.value * self.value


@dataclass(frozen=True)
class QuantizationResult:
    discrete: DiscreteDistribution
    certificate: W2Certificate
    per_component_sq_errors: np.ndarray | None = None
    compression_cost: float = 0.0
    grid: GridDiscrete | None = field(default=None, repr=False)

    @property
    def w2(self) -> float:
        return self.certificate.value


# --- grid -----------------------------------------------------------------------------

def _check_aligned(scheme, component: GaussianComponent) -> None:
    if scheme.dim != component.dim:
        raise DimensionMismatch(f"scheme of dimension {scheme.dim} vs distribution of dimension {component.dim}")
    if not alignment_check(scheme.axes, component, ALIGN_TOL):
        raise NotAligned("scheme frame does not diagonalize the component covariance")


def grid_cell_masses(component: GaussianComponent, scheme: GridScheme, strict: bool = False):
    """Per-dimension cell masses of ``component`` on ``scheme`` and the squared
    transport cost of the cell-to-location coupling.

    Returns ``(masses_per_dim, sq_cost)``; the cell mass of a multi-index is
    the product of the per-dimension entries.
    """
    _check_aligned(scheme, component)
    axes = scheme.axes
    m_loc = axes.to_local(component.mean)
    world_var = np.einsum("ji,jk,ki->i", axes.rotation, component.covariance, axes.rotation)
    lam_max = max(float(component.spectral.eigenvalues[0]), 0.0)
    masses = []
    sq = 0.0
    for j, (pts, edges) in enumerate(zip(scheme.points_per_dim, scheme.edges_per_dim)):
        v = world_var[j]
        s = axes.scales[j]
        if v > 1e-10 * lam_max and v > 0:
            sigma = math.sqrt(v) / s
            alpha = (edges - m_loc[j]) / sigma
            masses.append(normal_interval_mass(alpha[:-1], alpha[1:]))
            sq += v * float(np.sum(cell_cost(alpha[:-1], alpha[1:], (pts - m_loc[j]) / sigma)))
        else:
            k = int(np.clip(np.searchsorted(edges, m_loc[j], side="right") - 1, 0, pts.size - 1))
            onehot = np.zeros(pts.size)
            onehot[k] = 1.0
            masses.append(onehot)
            gap = s * (m_loc[j] - pts[k])
            if strict and abs(gap) > SUPPORT_TOL * max(1.0, math.sqrt(lam_max)):
                raise OffSupport(f"grid misses the component's affine support by {abs(gap):.3e} along axis {j}")
            sq += gap * gap
    return masses, sq


def _outer(masses: Sequence[np.ndarray]) -> np.ndarray:
    """Flattened (C-order) outer product of the per-dimension masses."""
    out = np.ones(1)
    for m in masses:
        if m.size > 1:
            out = np.outer(out, m).ravel()
        else:
            out = out * m[0]
    return out


def discretize_gaussian_grid(component: GaussianComponent, scheme: GridScheme, strict: bool = True) -> QuantizationResult:
    """Closed-form quantization of a Gaussian on an aligned grid.

    Cell masses are products of 1D normal masses in the local frame; the
    squared certificate is the per-axis sum of world variances times the 1D
    constrained second moments. Grid cells are the Voronoi cells of the grid
    points, so the certificate is exact.
    """
    masses, sq = grid_cell_masses(component, scheme, strict=strict)
    probs = _outer(masses)
    grid = GridDiscrete(scheme.points_per_dim, scheme.axes.rotation, scheme.axes.scales, scheme.axes.offset, probs)
    disc = DiscreteDistribution(scheme.locations(), probs)
    return QuantizationResult(disc, W2Certificate(math.sqrt(sq), EXACT), np.array([sq]), grid=grid)


# --- cross ----------------------------------------------------------------------------

def _check_whitened(component: GaussianComponent, scheme: CrossScheme) -> None:
    _check_aligned(scheme, component)
    m, c = scheme.axes.local_gaussian(component)
    r = scheme.active
    scale = max(1.0, float(np.max(np.abs(c))) if c.size else 1.0)
    target = np.zeros_like(c)
    target[:r, :r] = np.eye(r)
    if np.max(np.abs(c - target), initial=0.0) > 1e-7 * scale or np.max(np.abs(m), initial=0.0) > 1e-7 * scale:
        raise NotAligned("cross scheme frame must whiten the component (mean at offset, unit variances)")


def _cross_closed_form_1d(scheme: CrossScheme) -> float:
    # active <= 1: regions are intervals, so the region coupling cost is closed form
    if scheme.active == 0:
        return 0.0
    s2 = scheme.axes.scales[0] ** 2
    total = 0.0
    for reg in scheme.regions():
        lo, hi = math.sqrt(reg.shell[0]), math.sqrt(reg.shell[1])
        c = reg.local_location[0]
        if reg.kind == "center":
            total += cell_cost(-hi, hi, 0.0)
        elif reg.sign > 0:
            total += cell_cost(lo, hi, c)
        else:
            total += cell_cost(-hi, -lo, c)
    return s2 * total


def _cross_cost(component, scheme: CrossScheme, locations, mc_samples, seed):
    if scheme.active <= 1:
        return _cross_closed_form_1d(scheme), 0.0, False
    if not mc_samples:
        return math.nan, math.nan, True
    from .oracles import mc_region_coupling_cost

    est = mc_region_coupling_cost(component, scheme, locations, mc_samples, seed)
    return est.mean_sq, est.mean_sq_std_error, True


def discretize_gaussian_cross(component: GaussianComponent, scheme: CrossScheme, *,
                              mc_samples: int | None = DEFAULT_MC_SAMPLES, seed: int = 0) -> QuantizationResult:
    """Quantize a Gaussian on a cross scheme built for it.

    Region masses are chi-square shell masses split evenly over the ``2 r``
    signed sectors. The certificate is the cost of the region-to-location
    coupling, an upper bound on W2: closed form when at most one axis is
    active, else a seeded Monte-Carlo estimate (``mc_samples=None`` disables
    it and the certificate is unavailable).
    """
    _check_whitened(component, scheme)
    regions = scheme.regions()
    probs = np.array([r.probability for r in regions])
    locations = scheme.locations()
    sq, sq_se, statistical = _cross_cost(component, scheme, locations, mc_samples, seed)
    disc = DiscreteDistribution(locations, probs / probs.sum())
    return QuantizationResult(disc, _certificate_from_sq(sq, sq_se, statistical, UPPER_BOUND), np.array([sq]))


def _certificate_from_sq(sq: float, sq_se: float, statistical: bool, kind: str) -> W2Certificate:
    if not math.isfinite(sq):
        return W2Certificate(math.nan, UNAVAILABLE, statistical=statistical)
    value = math.sqrt(max(sq, 0.0))
    se = sq_se / (2.0 * value) if statistical and value > 0 else 0.0
    return W2Certificate(value, kind, statistical=statistical, std_error=se)


# --- mixtures -------------------------------------------------------------------------

def _component_on_scheme(component, scheme, mc_samples, seed):
    """Masses over the scheme's regions and the squared coupling cost."""
    if isinstance(scheme, GridScheme):
        masses, sq = grid_cell_masses(component, scheme)
        return _outer(masses), sq, 0.0, False
    if isinstance(scheme, CrossScheme):
        res = discretize_gaussian_cross(component, scheme, mc_samples=mc_samples, seed=seed)
        sq = res.per_component_sq_errors[0]
        se = 2.0 * res.certificate.value * res.certificate.std_error
        return res.discrete.probabilities, sq, se, res.certificate.statistical
    raise InputError(f"unsupported scheme type {type(scheme).__name__}")


def assign_components(mix: GaussianMixture, scheme_set: SchemeSet) -> list[list[int]]:
    """Component indices handled by each entry: stored member sets first, the
    rest go to the nearest anchor (Euclidean, ties to the lowest index)."""
    if len(scheme_set) == 0:
        raise EmptySchemeSet("scheme set has no entries")
    scheme_set.validate_members(len(mix))
    groups: list[list[int]] = [[] for _ in scheme_set.entries]
    owner = {}
    for k, e in enumerate(scheme_set.entries):
        for i in e.members or ():
            owner[i] = k
    shared = [k for k, e in enumerate(scheme_set.entries) if e.shared]
    anchors = np.stack([scheme_set.entries[k].anchor for k in shared]) if shared else None
    for i, comp in enumerate(mix.components):
        if i in owner:
            groups[owner[i]].append(i)
            continue
        if anchors is None:
            raise EmptySchemeSet(f"no scheme can take component {i}")
        dist = np.linalg.norm(anchors - comp.mean, axis=1)
        groups[shared[int(np.argmin(dist))]].append(i)
    return groups


def weighted_kmeans(atoms: DiscreteDistribution, k: int, max_iter: int = KMEANS_MAX_ITER):
    """Compress ``atoms`` to at most ``k`` locations by weighted Lloyd iterations.

    Starts from the ``k`` heaviest atoms (ties by index) and stops once
    assignments are stable. Returns the compressed distribution and the cost
    ``sqrt(sum_i p_i |c_i - center(i)|^2)`` of the assignment coupling, an
    upper bound on the W2 distance between the two.
    """
    n = atoms.size
    if not 1 <= k <= n:
        raise InvalidK(f"k={k} must lie in [1, {n}]")
    x = atoms.locations
    p = atoms.probabilities
    if k == n:
        return atoms, 0.0
    init = np.argsort(-p, kind="stable")[:k]
    centers = x[init].copy()
    assign = None
    for _ in range(max_iter):
        _, new = cKDTree(centers).query(x)
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        mass = np.bincount(assign, weights=p, minlength=k)
        sums = np.stack([np.bincount(assign, weights=p * x[:, j], minlength=k) for j in range(x.shape[1])], axis=1)
        nz = mass > 0
        centers[nz] = sums[nz] / mass[nz, None]
    mass = np.bincount(assign, weights=p, minlength=k)
    sq = float(np.sum(p * np.sum((x - centers[assign]) ** 2, axis=1)))
    keep = mass > 0
    out = DiscreteDistribution(centers[keep], mass[keep] / mass[keep].sum())
    return out, math.sqrt(sq)


def discretize_mixture(mix: GaussianMixture, schemes, compress: bool = False, *,
                       mc_samples: int | None = DEFAULT_MC_SAMPLES, seed: int = 0) -> QuantizationResult:
    """Quantize a mixture with one shared scheme or a per-mode scheme set.

    With a shared scheme, atom masses add up over components and the
    certificate ``sqrt(sum_i pi_i W_i^2)`` is exact for grids. With a scheme
    set, per-entry atoms are concatenated and the same sum is an upper bound.
    ``compress`` runs weighted k-means on every entry that carries
    per-component schemes, down to the entry budget, and adds the k-means
    transport cost to the certificate.
    """
    if isinstance(mix, GaussianComponent):
        mix = GaussianMixture.single(mix)
    if isinstance(schemes, (GridScheme, CrossScheme)):
        scheme_set = SchemeSet((SchemeEntry((schemes,), schemes.axes.offset),))
        single = True
    elif isinstance(schemes, SchemeSet):
        scheme_set = schemes
        single = False
    else:
        raise InputError(f"expected a scheme or scheme set, got {type(schemes).__name__}")

    groups = assign_components(mix, scheme_set)
    w = mix.weights
    sq_errors = np.zeros(len(mix))
    sq_var = 0.0
    any_statistical = False
    any_cross = False
    blocks: list[tuple[np.ndarray, np.ndarray, SchemeEntry]] = []
    for entry, members in zip(scheme_set.entries, groups):
        if not members:
            continue
        if entry.shared:
            scheme = entry.schemes[0]
            any_cross |= isinstance(scheme, CrossScheme)
            locs = scheme.locations()
            probs = np.zeros(len(locs))
            for i in members:
                m, sq, se, stat = _component_on_scheme(mix.components[i], scheme, mc_samples, seed + i)
                probs += w[i] * m
                sq_errors[i] = sq
                sq_var += (w[i] * se) ** 2
                any_statistical |= stat
        else:
            locs_list, probs_list = [], []
            for i in members:
                scheme = entry.scheme_for(i)
                any_cross |= isinstance(scheme, CrossScheme)
                m, sq, se, stat = _component_on_scheme(mix.components[i], scheme, mc_samples, seed + i)
                locs_list.append(scheme.locations())
                probs_list.append(w[i] * m)
                sq_errors[i] = sq
                sq_var += (w[i] * se) ** 2
                any_statistical |= stat
            locs = np.concatenate(locs_list)
            probs = np.concatenate(probs_list)
        blocks.append((locs, probs, entry))

    total_sq = float(w @ sq_errors)
    used = sum(1 for g in groups if g)
    exact = (not any_cross) and used == 1 and (len(mix) == 1 or blocks[0][2].shared)
    kind = EXACT if exact else UPPER_BOUND
    cert = _certificate_from_sq(total_sq, math.sqrt(sq_var), any_statistical, kind)

    compression_sq = 0.0
    if compress:
        new_blocks = []
        for locs, probs, entry in blocks:
            if not entry.shared and entry.budget is not None and len(locs) > entry.budget:
                if entry.budget < 1:
                    raise BudgetViolation("compression target must be >= 1")
                mass = probs.sum()
                if mass > 0:
                    sub, cost = weighted_kmeans(DiscreteDistribution(locs, probs / mass), int(entry.budget))
                    compression_sq += mass * cost * cost
                    locs, probs = sub.locations, sub.probabilities * mass
            new_blocks.append((locs, probs, entry))
        blocks = new_blocks
        if compression_sq > 0 and cert.kind != UNAVAILABLE:
            cert = W2Certificate(cert.value + math.sqrt(compression_sq), UPPER_BOUND,
                                 cert.statistical, cert.std_error)

    locs = np.concatenate([b[0] for b in blocks])
    probs = np.concatenate([b[1] for b in blocks])
    probs = probs / probs.sum()
    grid = None
    if single and isinstance(schemes, GridScheme):
        ax = schemes.axes
        grid = GridDiscrete(schemes.points_per_dim, ax.rotation, ax.scales, ax.offset, probs)
    return QuantizationResult(DiscreteDistribution(locs, probs), cert, sq_errors,
                              math.sqrt(compression_sq), grid=grid)


def discretize(dist, scheme, compress: bool = False, **kwargs) -> QuantizationResult:
    """Quantize a Gaussian or mixture with a scheme or scheme set."""
    if isinstance(dist, GaussianComponent):
        if isinstance(scheme, GridScheme):
            return discretize_gaussian_grid(dist, scheme)
        if isinstance(scheme, CrossScheme):
            return discretize_gaussian_cross(dist, scheme, **kwargs)
        dist = GaussianMixture.single(dist)
    return discretize_mixture(dist, scheme, compress, **kwargs)
