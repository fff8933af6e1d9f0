"""Gaussian components, mixtures and finite discrete distributions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import (
    DimensionMismatch,
    IndefiniteBeyondTolerance,
    InputError,
    NonSymmetric,
    SingularComponent,
)

SYM_TOL = 1e-10
NEG_EIG_TOL = 1e-10
RANK_TOL = 1e-10
EIG_GROUP_TOL = 1e-9
WEIGHT_TOL = 1e-9


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SpectralDecomposition:
    """Canonical eigendecomposition ``cov = V diag(lam) V^T``.

    Eigenvalues are descending and clamped to zero below the rank tolerance.
    """

    eigenvectors: np.ndarray
    eigenvalues: np.ndarray
    rank: int

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)

    @cached_property
    def sqrt_eigenvalues(self) -> np.ndarray:
        return _frozen(np.sqrt(self.eigenvalues))

    @cached_property
    def whitening(self) -> np.ndarray:
        """``diag(lam)^{-1/2} V^T`` restricted to the nonzero-eigenvalue block
        (shape ``rank x d``)."""
        r = self.rank
        return _frozen(self.eigenvectors[:, :r].T / self.sqrt_eigenvalues[:r, None])

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T

    def sqrt_factor(self) -> np.ndarray:
        """``L`` with ``L L^T = cov`` (valid for singular covariances)."""
        return self.eigenvectors * self.sqrt_eigenvalues


def _canonical_block(vecs: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal basis of ``span(vecs)``.

    Gram-Schmidt over the columns of the (basis-independent) projector, in
    coordinate order, keeping the first ``k`` independent directions.
    """
    d, k = vecs.shape
    proj = vecs @ vecs.T
    basis = []
    for i in range(d):
        v = proj[:, i].copy()
        for b in basis:
            v -= (b @ v) * b
        nv = np.linalg.norm(v)
        if nv > 1e-6:
            basis.append(v / nv)
            if len(basis) == k:
                break
    if len(basis) < k:  # pragma: no cover - projector always has rank k
        return vecs
    return np.column_stack(basis)


def spectral(covariance) -> SpectralDecomposition:
    """Canonical symmetric eigendecomposition with degenerate-rank handling.

    Eigenvalues are sorted descending; numerically equal groups get a
    deterministic basis; each eigenvector is signed so its largest-magnitude
    entry is positive. Negative eigenvalues within ``1e-10 * lam_max`` are
    clamped to zero and eigenvalues at or below ``1e-10 * lam_max`` count as
    zero.
    """
    cov = np.asarray(covariance, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise DimensionMismatch(f"covariance must be square, got shape {cov.shape}")
    norm = np.linalg.norm(cov)
    if np.linalg.norm(cov - cov.T) > SYM_TOL * max(norm, 1e-300) and norm > 0:
        raise NonSymmetric("covariance is not symmetric")
    d = cov.shape[0]
    sym = 0.5 * (cov + cov.T)
    lam, vec = np.linalg.eigh(sym)
    order = np.argsort(-lam, kind="stable")
    lam, vec = lam[order], vec[:, order]
    lam_max = max(float(lam[0]), 0.0) if d else 0.0
    if d and lam[-1] < -NEG_EIG_TOL * lam_max - (0.0 if lam_max > 0 else 1e-300):
        raise IndefiniteBeyondTolerance(f"covariance has eigenvalue {lam[-1]:.3e} < 0")
    lam = np.where(lam <= RANK_TOL * lam_max, 0.0, lam)
    rank = int(np.count_nonzero(lam))

    # deterministic basis within groups of numerically equal eigenvalues
    gap = EIG_GROUP_TOL * lam_max if lam_max > 0 else 0.0
    start = 0
    for i in range(1, d + 1):
        if i == d or abs(lam[i] - lam[i - 1]) > gap:
            if i - start > 1:
                vec[:, start:i] = _canonical_block(vec[:, start:i])
            start = i
    if lam_max == 0.0:
        vec = np.eye(d)
    idx = np.argmax(np.abs(vec), axis=0)
    signs = np.sign(vec[idx, np.arange(d)])
    signs[signs == 0] = 1.0
    vec = vec * signs
    return SpectralDecomposition(_frozen(vec), _frozen(lam), rank)


@dataclass(frozen=True)
class GaussianComponent:
    """Multivariate normal ``N(mean, covariance)``; the covariance may be
    singular."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.array(self.mean, dtype=float))
        cov = np.atleast_2d(np.array(self.covariance, dtype=float))
        if mean.ndim != 1:
            raise DimensionMismatch("mean must be a vector")
        if cov.shape != (mean.size, mean.size):
            raise DimensionMismatch(f"covariance shape {cov.shape} does not match mean of size {mean.size}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise InputError("mean and covariance must be finite")
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "covariance", _frozen(cov))
        _ = self.spectral  # validates

    @property
    def dim(self) -> int:
        return self.mean.size

    @cached_property
    def spectral(self) -> SpectralDecomposition:
        return spectral(self.covariance)

    @property
    def is_singular(self) -> bool:
        return self.spectral.rank < self.dim

    def log_density_grad_hess(self, x):
        if self.is_singular:
            raise SingularComponent("log-density of a singular Gaussian is undefined")
        sp = self.spectral
        x = np.asarray(x, dtype=float)
        z = sp.whitening @ (x - self.mean)
        logdet = float(np.sum(np.log(sp.eigenvalues)))
        logp = -0.5 * (z @ z + logdet + self.dim * np.log(2.0 * np.pi))
        prec = sp.whitening.T @ sp.whitening
        grad = -prec @ (x - self.mean)
        return logp, grad, -prec

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        z = rng.standard_normal((size, self.dim))
        return self.mean + z @ self.spectral.sqrt_factor().T


@dataclass(frozen=True)
class GaussianMixture:
    """``sum_i weights[i] * N(mean_i, cov_i)`` with a shared dimension."""

    weights: np.ndarray
    components: tuple[GaussianComponent, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        w = np.atleast_1d(np.array(self.weights, dtype=float))
        if len(comps) == 0:
            raise InputError("mixture needs at least one component")
        if w.shape != (len(comps),):
            raise DimensionMismatch(f"{w.size} weights for {len(comps)} components")
        if np.any(w < 0) or abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise InputError("weights must be nonnegative and sum to 1")
        d = comps[0].dim
        if any(c.dim != d for c in comps):
            raise DimensionMismatch("components have different dimensions")
        object.__setattr__(self, "weights", _frozen(w))
        object.__setattr__(self, "components", comps)

    @classmethod
    def from_arrays(cls, weights, means, covariances) -> "GaussianMixture":
        return cls(weights, tuple(GaussianComponent(m, c) for m, c in zip(means, covariances)))

    @classmethod
    def single(cls, component: GaussianComponent) -> "GaussianMixture":
        return cls(np.ones(1), (component,))

    @property
    def dim(self) -> int:
        return self.components[0].dim

    def __len__(self) -> int:
        return len(self.components)

    @property
    def means(self) -> np.ndarray:
        return np.stack([c.mean for c in self.components])

    @property
    def covariances(self) -> np.ndarray:
        return np.stack([c.covariance for c in self.components])

    def subset(self, indices: Sequence[int]) -> "GaussianMixture":
        w = self.weights[list(indices)]
        return GaussianMixture(w / w.sum(), tuple(self.components[i] for i in indices))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` points: categorical component labels, then affine
        maps of standard normals through each spectral square root."""
        labels = rng.choice(len(self), size=size, p=self.weights)
        z = rng.standard_normal((size, self.dim))
        out = np.empty_like(z)
        for i, comp in enumerate(self.components):
            sel = labels == i
            out[sel] = comp.mean + z[sel] @ comp.spectral.sqrt_factor().T
        return out


def mixture_moments(mix: GaussianMixture) -> tuple[np.ndarray, np.ndarray]:
    w = mix.weights
    means = mix.means
    mean = w @ means
    second = np.einsum("i,ijk->jk", w, mix.covariances + np.einsum("ij,ik->ijk", means, means))
    cov = second - np.outer(mean, mean)
    return mean, 0.5 * (cov + cov.T)


def log_density_grad_hess(mix: GaussianMixture, x) -> tuple[float, np.ndarray, np.ndarray]:
    """Log-density of the mixture with its gradient and Hessian at ``x``.

    Uses responsibilities ``r_i``: ``grad = sum r_i g_i`` and
    ``hess = sum r_i (H_i + g_i g_i^T) - grad grad^T``.
    """
    if isinstance(mix, GaussianComponent):
        mix = GaussianMixture.single(mix)
    x = np.asarray(x, dtype=float)
    if x.shape != (mix.dim,):
        raise DimensionMismatch(f"point of shape {x.shape} for dimension {mix.dim}")
    parts = [c.log_density_grad_hess(x) for c in mix.components]
    with np.errstate(divide="ignore"):
        logw = np.log(mix.weights)
    logs = np.array([p[0] for p in parts]) + logw
    logp = float(logsumexp(logs))
    r = np.exp(logs - logp)
    grads = np.stack([p[1] for p in parts])
    grad = r @ grads
    hess = np.einsum("i,ijk->jk", r, np.stack([p[2] for p in parts]) + np.einsum("ij,ik->ijk", grads, grads))
    hess -= np.outer(grad, grad)
    return logp, grad, 0.5 * (hess + hess.T)


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finite atomic distribution ``sum_i probs[i] * delta(locations[i])``."""

    locations: np.ndarray
    probabilities: np.ndarray

    def __post_init__(self):
        loc = np.array(self.locations, dtype=float)
        if loc.ndim == 1:
            loc = loc[:, None]
        p = np.atleast_1d(np.array(self.probabilities, dtype=float))
        if loc.ndim != 2 or loc.shape[0] != p.size:
            raise DimensionMismatch(f"{p.size} probabilities for locations of shape {loc.shape}")
        if np.any(p < 0) or abs(p.sum() - 1.0) > WEIGHT_TOL:
            raise InputError(f"probabilities must be nonnegative and sum to 1 (sum={p.sum()!r})")
        object.__setattr__(self, "locations", _frozen(loc))
        object.__setattr__(self, "probabilities", _frozen(p))

    @property
    def size(self) -> int:
        return self.probabilities.size

    @property
    def dim(self) -> int:
        return self.locations.shape[1]

    def mean(self) -> np.ndarray:
        return self.probabilities @ self.locations

    def pruned(self, threshold: float = 1e-15) -> tuple["DiscreteDistribution", float]:
        """Drop atoms below ``threshold`` and renormalize; returns the dropped
        mass alongside the new distribution."""
        keep = self.probabilities >= threshold
        if keep.all() or not keep.any():
            return self, 0.0
        dropped = float(self.probabilities[~keep].sum())
        p = self.probabilities[keep]
        return DiscreteDistribution(self.locations[keep], p / p.sum()), dropped


def cartesian_product(arrays) -> np.ndarray:
    """Rows of the Cartesian product in C order (last factor fastest).

    Works for any number of factors, unlike ``meshgrid`` which is capped by
    numpy's maximum array rank.
    """
    sizes = [len(a) for a in arrays]
    total = math.prod(sizes)
    out = np.empty((total, len(arrays)))
    inner = total
    for j, a in enumerate(arrays):
        inner //= sizes[j]
        out[:, j] = np.tile(np.repeat(np.asarray(a, dtype=float), inner), total // (inner * sizes[j]))
    return out


@dataclass(frozen=True)
class GridDiscrete:
    """Factored encoding of a grid-supported discrete distribution.

    Locations are ``offset + rotation @ (scales * u)`` for ``u`` in the
    Cartesian product of ``points_per_dim``; ``probabilities`` is indexed by
    the flattened (C-order) multi-index.
    """

    points_per_dim: tuple[np.ndarray, ...]
    rotation: np.ndarray
    scales: np.ndarray
    offset: np.ndarray
    probabilities: np.ndarray = field(repr=False)

    def to_discrete(self) -> DiscreteDistribution:
        local = cartesian_product(self.points_per_dim)
        world = self.offset + (local * self.scales) @ self.rotation.T
        return DiscreteDistribution(world, self.probabilities.ravel())
