"""Independent numerical oracles: quadrature and seeded Monte Carlo.

These never share code paths with the closed forms they are used to check.
Random streams come from numpy's Philox counter-based generator; sample
blocks draw from child seeds spawned off one ``SeedSequence`` so results
replay bit-for-bit for a fixed seed and block size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.spatial import cKDTree

from .distributions import GaussianComponent, GaussianMixture
from .errors import InvalidInterval

TRUNCATION = 12.0
BLOCK = 200_000
RNG_NAME = "numpy.random.Philox"


@dataclass(frozen=True)
class McEstimate:
    value: float
    std_error: float
    samples: int
    seed: int

    def within(self, target: float, sigmas: float = 4.0) -> bool:
        return abs(self.value - target) <= sigmas * self.std_error


@dataclass(frozen=True)
class CostEstimate:
    """Root-mean-square transport cost estimate, keeping the squared mean."""

    value: float
    std_error: float
    mean_sq: float
    mean_sq_std_error: float
    samples: int
    seed: int

    def as_estimate(self) -> McEstimate:
        return McEstimate(self.value, self.std_error, self.samples, self.seed)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def _blocks(samples: int, seed: int):
    n_blocks = -(-samples // BLOCK)
    children = np.random.SeedSequence(seed).spawn(n_blocks)
    for b, child in enumerate(children):
        size = min(BLOCK, samples - b * BLOCK)
        yield np.random.Generator(np.random.Philox(child)), size


def sample_mixture(mix, samples: int, seed: int) -> np.ndarray:
    if isinstance(mix, GaussianComponent):
        mix = GaussianMixture.single(mix)
    return np.concatenate([mix.sample(rng, size) for rng, size in _blocks(samples, seed)])


def _phi(x: float) -> float:
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def quadrature_cell_cost(a: float, b: float, c: float) -> float:
    """``int_a^b (x - c)^2 phi(x) dx`` by adaptive quadrature, infinite ends
    truncated at +-12."""
    if a > b:
        raise InvalidInterval(f"{a} > {b}")
    lo = max(a, -TRUNCATION)
    hi = min(b, TRUNCATION)
    if lo >= hi:
        return 0.0
    pts = [p for p in (c, 0.0) if lo < p < hi]
    val, _ = integrate.quad(lambda x: (x - c) ** 2 * _phi(x), lo, hi, epsabs=1e-13, epsrel=1e-12,
                            limit=200, points=pts or None)
    return val


def quadrature_cell_moment(a: float, b: float, c: float, power: int) -> float:
    """``int_a^b (x - c)^power phi(x) dx`` (``power`` 0 gives the cell mass)."""
    lo = max(a, -TRUNCATION)
    hi = min(b, TRUNCATION)
    if lo >= hi:
        return 0.0
    pts = [p for p in (c, 0.0) if lo < p < hi]
    val, _ = integrate.quad(lambda x: (x - c) ** power * _phi(x), lo, hi, epsabs=1e-14, epsrel=1e-12,
                            limit=200, points=pts or None)
    return val


def _cost_estimate(sq_sum: float, sq2_sum: float, n: int, seed: int) -> CostEstimate:
    mean = sq_sum / n
    var = max(sq2_sum / n - mean * mean, 0.0) * n / max(n - 1, 1)
    se_mean = math.sqrt(var / n)
    value = math.sqrt(mean)
    se = se_mean / (2.0 * value) if value > 0 else 0.0
    return CostEstimate(value, se, mean, se_mean, n, seed)


def mc_coupling_cost(mix, locations, samples: int = 1_000_000, seed: int = 0) -> CostEstimate:
    """Estimate ``sqrt(E min_i |X - c_i|^2)`` for ``X`` drawn from ``mix``.

    This is the Voronoi-coupling cost to the given locations, which lower
    bounds the W2 distance from ``mix`` to any distribution on them.
    """
    if samples < 1000:
        raise ValueError("need at least 1000 samples")
    if isinstance(mix, GaussianComponent):
        mix = GaussianMixture.single(mix)
    tree = cKDTree(np.atleast_2d(np.asarray(locations, dtype=float)))
    s1 = s2 = 0.0
    for rng, size in _blocks(samples, seed):
        x = mix.sample(rng, size)
        d, _ = tree.query(x)
        d2 = d * d
        s1 += float(d2.sum())
        s2 += float((d2 * d2).sum())
    return _cost_estimate(s1, s2, samples, seed)


def mc_region_coupling_cost(component: GaussianComponent, scheme, locations, samples: int = 100_000,
                            seed: int = 0) -> CostEstimate:
    """Estimate the cost of transporting each sample to its own region's
    location (the coupling behind a scheme's certificate)."""
    locations = np.asarray(locations, dtype=float)
    s1 = s2 = 0.0
    for rng, size in _blocks(samples, seed):
        x = component.sample(rng, size)
        idx = scheme.region_index(x)
        d2 = np.sum((x - locations[idx]) ** 2, axis=1)
        s1 += float(d2.sum())
        s2 += float((d2 * d2).sum())
    return _cost_estimate(s1, s2, samples, seed)


def mc_region_prob(component, predicate: Callable[[np.ndarray], np.ndarray], samples: int = 1_000_000,
                   seed: int = 0) -> McEstimate:
    """Binomial estimate of ``P(predicate(X))`` with standard error
    ``sqrt(p (1 - p) / n)``."""
    if samples < 1000:
        raise ValueError("need at least 1000 samples")
    hits = 0
    for rng, size in _blocks(samples, seed):
        x = (component if isinstance(component, GaussianMixture) else GaussianMixture.single(component)).sample(rng, size)
        hits += int(np.count_nonzero(predicate(x)))
    p = hits / samples
    return McEstimate(p, math.sqrt(max(p * (1 - p), 0.0) / samples), samples, seed)


def mc_cell_counts(component, region_index: Callable[[np.ndarray], np.ndarray], n_regions: int,
                   samples: int = 1_000_000, seed: int = 0) -> np.ndarray:
    """Sample counts per region for a flat region-index function."""
    counts = np.zeros(n_regions, dtype=np.int64)
    mix = component if isinstance(component, GaussianMixture) else GaussianMixture.single(component)
    for rng, size in _blocks(samples, seed):
        counts += np.bincount(region_index(mix.sample(rng, size)), minlength=n_regions)
    return counts
