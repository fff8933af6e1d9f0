"""Automatic scheme construction for Gaussians and Gaussian mixtures."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .distributions import (
    GaussianComponent,
    GaussianMixture,
    log_density_grad_hess,
    mixture_moments,
    spectral,
)
from .errors import BudgetTooSmall, EmptyBudget, InputError, SingularComponent
from .quantize1d import LookupTable1D, default_table
from .schemes import Axes, CrossScheme, GridScheme, SchemeEntry, SchemeSet, alignment_check
from .special import chi2_ppf

EXACT_MAX_DIM = 4
EXACT_MAX_BUDGET = 10_000
MEANSHIFT_STEP_TOL = 1e-8
MEANSHIFT_MAX_ITER = 500
HOMOGENEITY_TOL = 1e-8

__all__ = [
    "LayoutCandidate",
    "ModeCluster",
    "select_layout",
    "generate_scheme_gaussian",
    "cluster_modes",
    "homogeneity_check",
    "largest_remainder",
    "laplace_approximation",
    "generate_scheme_mixture",
    "generate_scheme",
]


@dataclass(frozen=True)
class LayoutCandidate:
    sizes: tuple[int, ...]
    predicted_sq_error: float

    @property
    def size(self) -> int:
        return math.prod(self.sizes)


# --- Algorithm 1: grid layouts ------------------------------------------------------

def _layout_cost(lam, sizes, table) -> float:
    return float(sum(l * table.distortion(n) for l, n in zip(lam, sizes)))


def _key(cost: float, sizes: tuple[int, ...]):
    # minimal cost, then larger product, then lexicographically larger
    return (cost, -math.prod(sizes), tuple(-n for n in sizes))


def _greedy_layout(lam: np.ndarray, budget: int, table: LookupTable1D) -> tuple[int, ...]:
    k = len(lam)
    sizes = [1] * k
    prod = 1
    while True:
        best_gain, best_j = 0.0, -1
        for j in range(k):
            n = sizes[j]
            if prod // n * (n + 1) > budget:
                continue
            gain = lam[j] * (table.distortion(n) - table.distortion(n + 1))
            if gain > best_gain:
                best_gain, best_j = gain, j
            if n == 1:
                # later size-1 dimensions have smaller eigenvalues, hence smaller gains
                break
        if best_j < 0:
            break
        prod = prod // sizes[best_j] * (sizes[best_j] + 1)
        sizes[best_j] += 1
    return tuple(sizes)


def _polish_layout(lam: np.ndarray, sizes: tuple[int, ...], budget: int, table: LookupTable1D) -> tuple[int, ...]:
    """Exchange polish: re-solve every pair and triple of dimensions exactly
    with the other sizes fixed, until no move improves.

    Plain marginal-gain greedy is not optimal under a product budget (for
    eigenvalues (10, 1) and budget 8 it stops at (4, 2) instead of (8, 1)).
    """
    sizes = list(sizes)
    k = len(sizes)
    improved = True
    while improved:
        improved = False
        ones = [j for j in range(k) if sizes[j] == 1]
        active = [j for j in range(k) if sizes[j] > 1] + ones[:1]
        for width in (2, 3):
            for sub in itertools.combinations(active, width):
                cur = tuple(sizes[j] for j in sub)
                rest = math.prod(sizes) // math.prod(cur)
                sub_lam = lam[list(sub)]
                new = _exact_layout(sub_lam, budget // rest, table, cur)
                if _layout_cost(sub_lam, new, table) < _layout_cost(sub_lam, cur, table) - 1e-15:
                    for j, n in zip(sub, new):
                        sizes[j] = n
                    improved = True
            # keep sizes aligned with the eigenvalue order
            sizes = sorted(sizes, reverse=True)
    return tuple(sizes)


def _exact_layout(lam: np.ndarray, budget: int, table: LookupTable1D, incumbent) -> tuple[int, ...]:
    """Enumerate non-increasing size tuples with product <= budget.

    For fixed trailing sizes the leading size is taken as large as the budget
    allows, since distortion decreases in ``n``.
    """
    k = len(lam)
    best_sizes = incumbent
    best_key = _key(_layout_cost(lam, incumbent, table), incumbent)

    def leaf(tail: list[int], tail_cost: float, prod: int):
        nonlocal best_sizes, best_key
        n1 = budget // prod
        if tail and n1 < tail[0]:
            return
        # cheap bound before touching large table entries
        if tail_cost + lam[0] * table.distortion_lower_bound(n1) > best_key[0]:
            return
        sizes = (n1, *tail)
        key = _key(tail_cost + lam[0] * table.distortion(n1), sizes)
        if key < best_key:
            best_key, best_sizes = key, sizes

    def rec(pos: int, cap: int, prod: int, tail: list[int], tail_cost: float):
        if pos == k:
            leaf(tail, tail_cost, prod)
            return
        n = 1
        while n <= cap and prod * n * n <= budget:
            rec(pos + 1, n, prod * n, tail + [n], tail_cost + lam[pos] * table.distortion(n))
            n += 1

    rec(1, budget, 1, [], 0.0)
    return best_sizes


def select_layout(eigenvalues: Sequence[float], budget: int, table: LookupTable1D | None = None,
                  method: str = "auto") -> LayoutCandidate:
    """Grid sizes per dimension minimizing ``sum_j lam_j * D(n_j)`` subject to
    ``prod_j n_j <= budget``.

    ``method`` is ``"exact"`` (enumeration), ``"greedy"`` (marginal-gain
    allocation with pairwise-exchange polish) or ``"auto"``, which enumerates
    when at most 4 dimensions carry variance and the budget is <= 10^4.
    Zero-eigenvalue dimensions always get one point.
    """
    if budget < 1:
        raise EmptyBudget("support budget must be >= 1")
    table = default_table() if table is None else table
    lam = np.asarray(eigenvalues, dtype=float)
    order = np.argsort(-lam, kind="stable")
    lam_sorted = lam[order]
    k = int(np.count_nonzero(lam_sorted > 0))
    sizes_sorted = [1] * len(lam)
    if k > 0:
        pos = lam_sorted[:k]
        if method not in ("exact", "greedy", "auto"):
            raise ValueError(f"unknown layout method {method!r}")
        greedy = _greedy_layout(pos, budget, table)
        if method == "exact" or (method == "auto" and k <= EXACT_MAX_DIM and budget <= EXACT_MAX_BUDGET):
            chosen = _exact_layout(pos, budget, table, greedy)
        else:
            chosen = _polish_layout(pos, greedy, budget, table)
        sizes_sorted[:k] = chosen
    sizes = [0] * len(lam)
    for slot, j in enumerate(order):
        sizes[j] = sizes_sorted[slot]
    sizes = tuple(int(n) for n in sizes)
    return LayoutCandidate(sizes, _layout_cost(lam, sizes, table))


def _grid_in_basis(mean, basis, variances, budget: int, table: LookupTable1D) -> GridScheme:
    """Grid scheme centered at ``mean`` in frame ``basis`` (columns), with
    per-axis variances, axes ordered by descending variance."""
    variances = np.maximum(np.asarray(variances, dtype=float), 0.0)
    order = np.argsort(-variances, kind="stable")
    var = variances[order]
    rot = np.asarray(basis, dtype=float)[:, order]
    layout = select_layout(var, budget, table)
    scales = np.where(var > 0, np.sqrt(var), 1.0)
    points = tuple(table.get(n).locations for n in layout.sizes)
    return GridScheme(points, Axes(rot, scales, mean))


def _cross_for(mean, basis, variances, budget: int) -> CrossScheme:
    variances = np.maximum(np.asarray(variances, dtype=float), 0.0)
    order = np.argsort(-variances, kind="stable")
    var = variances[order]
    rot = np.asarray(basis, dtype=float)[:, order]
    r = int(np.count_nonzero(var > 0))
    scales = np.where(var > 0, np.sqrt(var), 1.0)
    axes = Axes(rot, scales, mean)
    shells = budget // (2 * r) if r else 0
    center = shells == 0 or budget - 2 * r * shells >= 1
    intervals = shells + int(center)
    thresholds = chi2_ppf(np.arange(1, intervals) / intervals, max(r, 1)) if r else []
    return CrossScheme(axes, thresholds, include_center=center, active=r)


def generate_scheme_gaussian(component: GaussianComponent, budget: int, configuration: str = "grid",
                             table: LookupTable1D | None = None):
    """Scheme for a single Gaussian with at most ``budget`` support points.

    Grid: the optimal layout in the covariance eigenbasis, scaled by the
    square-root eigenvalues and centered at the mean. Cross: ``2 r`` points
    per shell (``r`` the covariance rank), filled outward, plus a center point
    when the budget leaves room.
    """
    if budget < 1:
        raise EmptyBudget("support budget must be >= 1")
    sp = component.spectral
    if configuration == "grid":
        table = default_table() if table is None else table
        return _grid_in_basis(component.mean, sp.eigenvectors, sp.eigenvalues, budget, table)
    if configuration == "cross":
        return _cross_for(component.mean, sp.eigenvectors, sp.eigenvalues, budget)
    raise InputError(f"unknown configuration {configuration!r}")


# --- Algorithm 2: mixtures ----------------------------------------------------------

@dataclass(frozen=True)
class ModeCluster:
    mode_location: np.ndarray
    member_components: tuple[int, ...]
    cluster_weight: float
    homogeneous: bool
    shared_basis: np.ndarray | None


def homogeneity_check(components: Sequence[GaussianComponent], tol: float = HOMOGENEITY_TOL,
                      weights: Sequence[float] | None = None):
    """Whether the covariances commute pairwise (i.e. share an eigenbasis).

    Returns ``(flag, basis)``; the basis diagonalizes every covariance when
    the flag is set, else it is ``None``.
    """
    covs = [c.covariance for c in components]
    for i, j in itertools.combinations(range(len(covs)), 2):
        a, b = covs[i], covs[j]
        if np.linalg.norm(a @ b - b @ a) > tol * np.linalg.norm(a) * np.linalg.norm(b):
            return False, None
    w = np.ones(len(covs)) / len(covs) if weights is None else np.asarray(weights, dtype=float)
    basis = spectral(np.einsum("i,ijk->jk", w, np.stack(covs))).eigenvectors
    check_tol = max(tol, 1e-8) * 10
    if all(alignment_check(Axes(basis, 1.0, 0.0), c, check_tol) for c in components):
        return True, basis
    # repeated eigenvalues in the average hide the common basis; a generic
    # combination separates them
    coef = 1.0 + np.arange(len(covs)) * (np.sqrt(5.0) - 1.0) / 2.0
    basis = spectral(np.einsum("i,ijk->jk", coef, np.stack(covs))).eigenvectors
    return True, basis


def _pinv_and_logdet(comp: GaussianComponent):
    sp = comp.spectral
    prec = sp.whitening.T @ sp.whitening
    r = sp.rank
    logdet = float(np.sum(np.log(sp.eigenvalues[:r]))) if r else 0.0
    return prec, logdet, r


def _mean_shift(start, means, precs, logw) -> np.ndarray:
    x = np.array(start, dtype=float)
    prec_means = np.einsum("ijk,ik->ij", precs, means)
    for _ in range(MEANSHIFT_MAX_ITER):
        diff = x - means
        maha = np.einsum("ij,ijk,ik->i", diff, precs, diff)
        lw = logw - 0.5 * maha
        w = np.exp(lw - logsumexp(lw))
        a = np.einsum("i,ijk->jk", w, precs)
        b = w @ prec_means
        # x + pinv(a) (b - a x) keeps x fixed along directions with no curvature
        step = np.linalg.pinv(a, rcond=1e-12, hermitian=True) @ (b - a @ x)
        x = x + step
        if np.linalg.norm(step) < MEANSHIFT_STEP_TOL:
            break
    return x


def cluster_modes(mix: GaussianMixture, tol: float | None = None,
                  homogeneity_tol: float = HOMOGENEITY_TOL) -> list[ModeCluster]:
    """Group components by the density mode their mean climbs to.

    Each mean is moved by the Gaussian-mixture mean-shift fixed point
    ``x <- (sum w_i P_i)^+ sum w_i P_i mu_i`` with ``w_i = pi_i N(x; mu_i, S_i)``
    and ``P_i`` the (pseudo-)precision; converged points closer than ``tol``
    share a cluster. The default tolerance is ``1e-2 * sqrt(mean eigenvalue)``
    of the mixture covariance.
    """
    if tol is None:
        _, cov = mixture_moments(mix)
        tol = 1e-2 * math.sqrt(max(np.trace(cov) / mix.dim, 0.0))
    means = mix.means
    parts = [_pinv_and_logdet(c) for c in mix.components]
    precs = np.stack([p[0] for p in parts])
    with np.errstate(divide="ignore"):
        logw = np.log(mix.weights) - 0.5 * np.array([p[1] + p[2] * math.log(2 * math.pi) for p in parts])
    ends = np.stack([_mean_shift(m, means, precs, logw) for m in means])

    groups: list[list[int]] = []
    for i in range(len(mix)):
        for g in groups:
            if np.linalg.norm(ends[i] - ends[g[0]]) <= tol:
                g.append(i)
                break
        else:
            groups.append([i])

    clusters = []
    for g in groups:
        w = mix.weights[g]
        mode = (w @ ends[g]) / w.sum() if w.sum() > 0 else ends[g].mean(axis=0)
        flag, basis = homogeneity_check([mix.components[i] for i in g], homogeneity_tol, w if w.sum() > 0 else None)
        clusters.append(ModeCluster(mode, tuple(g), float(w.sum()), flag, basis))
    return clusters


def largest_remainder(total: int, weights: Sequence[float], minimum: int = 1) -> list[int]:
    """Integer apportionment of ``total`` proportional to ``weights`` with a
    floor of ``minimum`` per share; ties go to the lowest index."""
    w = np.asarray(weights, dtype=float)
    if total < minimum * len(w):
        raise BudgetTooSmall(f"budget {total} cannot give {minimum} to each of {len(w)} shares")
    quota = total * w / w.sum()
    base = np.maximum(np.floor(quota).astype(int), minimum)
    rem = quota - np.floor(quota)
    excess = total - int(base.sum())
    order = sorted(range(len(w)), key=lambda i: (-rem[i], i))
    i = 0
    while excess > 0:
        base[order[i % len(w)]] += 1
        excess -= 1
        i += 1
    # minimum bumps may overshoot: take back from the most over-allocated
    while excess < 0:
        free = [j for j in range(len(w)) if base[j] > minimum]
        j = min(free, key=lambda j: (quota[j] - base[j], -j))
        base[j] -= 1
        excess += 1
    return [int(b) for b in base]


def laplace_approximation(mix: GaussianMixture, mode, basis=None) -> GaussianComponent:
    """Gaussian at ``mode`` with covariance ``(-hess log p(mode))^{-1}``.

    With ``basis``, the covariance is replaced by its diagonal in that basis.
    Falls back to the weighted average of the component covariances when the
    Hessian is unavailable (singular components) or not negative definite.
    """
    mode = np.asarray(mode, dtype=float)
    cov = None
    try:
        _, _, hess = log_density_grad_hess(mix, mode)
        evals = np.linalg.eigvalsh(-hess)
        if evals[0] > 1e-12 * max(evals[-1], 1e-300):
            cov = np.linalg.inv(-hess)
    except SingularComponent:
        pass
    if cov is None:
        cov = np.einsum("i,ijk->jk", mix.weights, mix.covariances)
    cov = 0.5 * (cov + cov.T)
    if basis is not None:
        diag = np.einsum("ji,jk,ki->i", basis, cov, basis)
        cov = (basis * np.maximum(diag, 0.0)) @ basis.T
        cov = 0.5 * (cov + cov.T)
    return GaussianComponent(mode, cov)


def _refine_mode(sub: GaussianMixture, start) -> np.ndarray:
    parts = [_pinv_and_logdet(c) for c in sub.components]
    precs = np.stack([p[0] for p in parts])
    with np.errstate(divide="ignore"):
        logw = np.log(sub.weights) - 0.5 * np.array([p[1] + p[2] * math.log(2 * math.pi) for p in parts])
    return _mean_shift(start, sub.means, precs, logw)


def generate_scheme_mixture(mix: GaussianMixture, budget: int, configuration: str = "grid",
                            per_mode: bool = True, table: LookupTable1D | None = None, *,
                            mode_merge_tol: float | None = None, homogeneity_tol: float = HOMOGENEITY_TOL,
                            allocation: str = "mode") -> SchemeSet:
    """Mode-wise scheme generation for a Gaussian mixture.

    Components are clustered by mode and each cluster receives a budget
    proportional to its weight (largest remainder, at least one point). With
    ``per_mode`` and the grid configuration, homogeneous clusters get a single
    grid built from a Laplace approximation of the cluster's sub-mixture at
    its mode. All other clusters get one scheme per component.

    ``allocation`` selects how per-component budgets are set:

    ``"mode"``
        each component gets ``N_S * pi_i / max_j pi_j`` (its cluster budget
        scaled by weight relative to the heaviest member), so the
        per-component schemes of a mode can be compressed back to ``N_S``.
    ``"split"``
        every component is its own cluster and budgets are apportioned over
        components by weight; they sum to ``budget``.
    """
    if budget < 1:
        raise EmptyBudget("support budget must be >= 1")
    if configuration not in ("grid", "cross"):
        raise InputError(f"unknown configuration {configuration!r}")
    table = default_table() if table is None else table
    if len(mix) == 1:
        comp = mix.components[0]
        return SchemeSet((SchemeEntry((generate_scheme_gaussian(comp, budget, configuration, table),),
                                      comp.mean, (0,), budget),))

    if allocation == "split":
        budgets = largest_remainder(budget, mix.weights)
        return SchemeSet(tuple(
            SchemeEntry((generate_scheme_gaussian(c, n, configuration, table),), c.mean, (i,), n)
            for i, (c, n) in enumerate(zip(mix.components, budgets))))
    if allocation != "mode":
        raise InputError(f"unknown allocation {allocation!r}")

    clusters = cluster_modes(mix, mode_merge_tol, homogeneity_tol)
    if budget < len(clusters):
        raise BudgetTooSmall(f"budget {budget} smaller than the number of modes {len(clusters)}")
    cluster_budgets = largest_remainder(budget, [c.cluster_weight for c in clusters])

    entries = []
    for cl, n_s in zip(clusters, cluster_budgets):
        members = cl.member_components
        if len(members) == 1:
            comp = mix.components[members[0]]
            scheme = generate_scheme_gaussian(comp, n_s, configuration, table)
            entries.append(SchemeEntry((scheme,), cl.mode_location, members, n_s))
        elif per_mode and configuration == "grid" and cl.homogeneous:
            sub = mix.subset(members)
            mode = _refine_mode(sub, cl.mode_location)
            local = laplace_approximation(sub, mode, cl.shared_basis)
            variances = np.einsum("ji,jk,ki->i", cl.shared_basis, local.covariance, cl.shared_basis)
            scheme = _grid_in_basis(mode, cl.shared_basis, variances, n_s, table)
            entries.append(SchemeEntry((scheme,), mode, members, n_s))
        else:
            w = mix.weights[list(members)]
            top = w.max()
            schemes = []
            for i, wi in zip(members, w):
                n_i = max(1, int(round(n_s * wi / top))) if top > 0 else 1
                schemes.append(generate_scheme_gaussian(mix.components[i], n_i, configuration, table))
            entries.append(SchemeEntry(tuple(schemes), cl.mode_location, members, n_s))
    return SchemeSet(tuple(entries))


def generate_scheme(dist, budget: int, configuration: str = "grid", per_mode: bool = True,
                    table: LookupTable1D | None = None, **kwargs):
    """Scheme for a :class:`GaussianComponent` or :class:`GaussianMixture`."""
    if isinstance(dist, GaussianComponent):
        return generate_scheme_gaussian(dist, budget, configuration, table)
    return generate_scheme_mixture(dist, budget, configuration, per_mode, table, **kwargs)
