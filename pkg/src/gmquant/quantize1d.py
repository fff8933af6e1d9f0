"""Optimal quantization of the one-dimensional standard normal.

The kernel behind grid generation: for ``n`` points it returns the stationary
(Lloyd-Max) quantizer of N(0, 1) together with its squared 2-Wasserstein
distortion, and caches these in a :class:`LookupTable1D` that can be
persisted as JSON.
"""

from __future__ import annotations

import bisect
import datetime as _dt
import json
import math
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import solve_banded

from .errors import BudgetTooSmall, CorruptTable, InvalidInterval, NonConvergence
from .special import normal_interval_mass, std_normal_pdf, std_normal_ppf

TABLE_VERSION = 1
LLOYD_TOL = 1e-12
MAX_ITER = 100_000

__all__ = [
    "Quantizer1D",
    "LookupTable1D",
    "cell_prob",
    "cell_cost",
    "conditional_mean",
    "midpoint_edges",
    "optimal_quantizer",
    "build_table",
    "save_table",
    "load_table",
    "default_table",
]


def _check_interval(a, b):
    if np.any(np.asarray(a) > np.asarray(b)):
        raise InvalidInterval(f"interval lower end exceeds upper end: {a} > {b}")


def cell_prob(a, b):
    """Mass of N(0, 1) on ``[a, b]``; ends may be infinite. Vectorized."""
    _check_interval(a, b)
    out = normal_interval_mass(a, b)
    return float(out) if np.ndim(out) == 0 else out


def _xphi(x):
    # x * phi(x) with the limit 0 at +-inf
    x = np.asarray(x, dtype=float)
    fin = np.isfinite(x)
    return np.where(fin, np.where(fin, x, 0.0) * std_normal_pdf(np.where(fin, x, 0.0)), 0.0)


def _phi_diff(a, b):
    """``phi(a) - phi(b)`` without cancellation for narrow cells."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    both_inf = np.isinf(a) & np.isinf(b)
    a_ = np.where(both_inf, 0.0, a)
    b_ = np.where(both_inf, 0.0, b)
    with np.errstate(invalid="ignore", over="ignore"):
        left = -std_normal_pdf(a_) * np.expm1(0.5 * (a_ * a_ - b_ * b_))
        right = std_normal_pdf(b_) * np.expm1(0.5 * (b_ * b_ - a_ * a_))
    out = np.where(np.abs(a_) <= np.abs(b_), left, right)
    return np.where(both_inf, 0.0, out)


def cell_cost(a, b, c):
    """Constrained second moment ``int_a^b (x - c)^2 dN(0,1)(x)``.

    Closed form ``(1 + c^2) P + (a - 2c) phi(a) - (b - 2c) phi(b)`` with
    ``P = Phi(b) - Phi(a)`` and ``x phi(x) -> 0`` at infinity.
    """
    _check_interval(a, b)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    p = normal_interval_mass(a, b)
    # (a - 2c) phi(a) - (b - 2c) phi(b) = a phi(a) - b phi(b) - 2c (phi(a) - phi(b))
    out = (1.0 + c * c) * p + _xphi(a) - _xphi(b) - 2.0 * c * _phi_diff(a, b)
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


def conditional_mean(a, b):
    """E[X | a <= X <= b] for X ~ N(0, 1)."""
    p = normal_interval_mass(a, b)
    return _phi_diff(a, b) / p


def midpoint_edges(locations) -> np.ndarray:
    """Voronoi edges of sorted 1D locations, with infinite outer ends."""
    loc = np.asarray(locations, dtype=float)
    return np.concatenate(([-np.inf], 0.5 * (loc[:-1] + loc[1:]), [np.inf]))


@dataclass(frozen=True)
class Quantizer1D:
    """Stationary quantizer of N(0, 1): sorted locations, Voronoi edges and
    squared W2 distortion."""

    locations: np.ndarray
    distortion: float
    edges: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        loc = np.array(self.locations, dtype=float)
        loc.setflags(write=False)
        edges = midpoint_edges(loc)
        edges.setflags(write=False)
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "distortion", float(self.distortion))

    @property
    def n(self) -> int:
        return len(self.locations)

    @property
    def probabilities(self) -> np.ndarray:
        return normal_interval_mass(self.edges[:-1], self.edges[1:])

    def check(self, tol: float = 1e-9) -> None:
        """Raise :class:`CorruptTable` if any structural invariant fails."""
        loc = self.locations
        if loc.ndim != 1 or loc.size < 1 or not np.all(np.isfinite(loc)):
            raise CorruptTable("locations must be a finite non-empty vector")
        if np.any(np.diff(loc) <= 0):
            raise CorruptTable("locations must be strictly ascending")
        if np.max(np.abs(loc + loc[::-1])) > tol:
            raise CorruptTable(f"quantizer n={self.n} is not symmetric")
        means = conditional_mean(self.edges[:-1], self.edges[1:])
        if np.max(np.abs(means - loc)) > tol:
            raise CorruptTable(f"quantizer n={self.n} is not stationary")
        d = float(np.sum(cell_cost(self.edges[:-1], self.edges[1:], loc)))
        if not abs(d - self.distortion) <= tol:
            raise CorruptTable(f"quantizer n={self.n} distortion mismatch")


def _newton_system(c):
    e = midpoint_edges(c)
    a, b = e[:-1], e[1:]
    p = normal_interval_mass(a, b)
    g = _phi_diff(a, b) / p
    f = c - g
    fa = np.where(np.isfinite(a), std_normal_pdf(np.where(np.isfinite(a), a, 0.0)), 0.0)
    fb = np.where(np.isfinite(b), std_normal_pdf(np.where(np.isfinite(b), b, 0.0)), 0.0)
    a0 = np.where(np.isfinite(a), a, 0.0)
    b0 = np.where(np.isfinite(b), b, 0.0)
    dga = fa * (g - a0) / p
    dgb = fb * (b0 - g) / p
    n = len(c)
    ab = np.zeros((3, n))
    ab[1] = 1.0 - 0.5 * (dga + dgb)
    ab[0, 1:] = -0.5 * dgb[:-1]  # d f_i / d c_{i+1}
    ab[2, :-1] = -0.5 * dga[1:]  # d f_{i+1} / d c_i
    return f, ab


def _symmetrize(c):
    return 0.5 * (c - c[::-1])


def _residual(c):
    e = midpoint_edges(c)
    return c - conditional_mean(e[:-1], e[1:])


def optimal_quantizer(n: int, tol: float = LLOYD_TOL, max_iter: int = MAX_ITER) -> Quantizer1D:
    """Optimal ``n``-point quantizer of the standard normal.

    Seeds at the normal quantiles ``Phi^{-1}((i - 1/2) / n)``, runs Lloyd
    fixed-point sweeps and switches to a damped tridiagonal Newton solve of
    the stationarity equations once a Newton step reduces the residual. The
    result satisfies ``max |c_i - E[X | cell_i]| <= tol``.
    """
    n = int(n)
    if n < 1:
        raise BudgetTooSmall("quantizer size must be >= 1")
    if n == 1:
        return Quantizer1D(np.zeros(1), 1.0)

    c = _symmetrize(std_normal_ppf((np.arange(n) + 0.5) / n))
    res = _residual(c)
    err = np.max(np.abs(res))
    it = 0
    while err > tol:
        if it >= max_iter:
            raise NonConvergence(f"optimal_quantizer({n}) did not converge, residual {err:.3e}")
        it += 1
        f, ab = _newton_system(c)
        step = solve_banded((1, 1), ab, -f)
        t = 1.0
        accepted = False
        while t > 1e-4:
            trial = _symmetrize(c + t * step)
            if np.all(np.diff(trial) > 0):
                r = _residual(trial)
                e = np.max(np.abs(r))
                if e < err:
                    c, res, err, accepted = trial, r, e, True
                    break
            t *= 0.5
        if not accepted:
            # Lloyd sweep: always monotone in distortion
            c = _symmetrize(c - res)
            res = _residual(c)
            new_err = np.max(np.abs(res))
            if new_err >= err and err <= 10 * tol:
                # rounding floor reached
                break
            err = new_err
    edges = midpoint_edges(c)
    distortion = float(np.sum(cell_cost(edges[:-1], edges[1:], c)))
    return Quantizer1D(c, distortion)


class LookupTable1D:
    """Optimal 1D quantizers for ``n = 1 ... n_max``, extended on demand.

    Lookups beyond ``n_max`` are computed and memoized under a lock, so
    concurrent readers either see a complete entry or compute it themselves.
    """

    def __init__(self, entries: dict[int, Quantizer1D] | None = None, *, tolerance: float = LLOYD_TOL,
                 built: str | None = None):
        self._entries: dict[int, Quantizer1D] = dict(entries or {})
        self.tolerance = tolerance
        self.built = built or _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        self._lock = threading.Lock()
        self._n_max = max(self._entries, default=0)
        self._keys = sorted(self._entries)

    @property
    def n_max(self) -> int:
        return self._n_max

    def __contains__(self, n: int) -> bool:
        return n in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, n: int) -> Quantizer1D:
        q = self._entries.get(n)
        if q is None:
            q = optimal_quantizer(n, tol=self.tolerance)
            with self._lock:
                if n not in self._entries:
                    bisect.insort(self._keys, n)
                    self._n_max = max(self._n_max, n)
                q = self._entries.setdefault(n, q)
        return q

    __getitem__ = get

    def distortion(self, n: int) -> float:
        return self.get(n).distortion

    def distortion_lower_bound(self, n: int) -> float:
        """Cheap lower bound on ``distortion(n)`` that never computes a new
        entry.

        Uses that ``n^2 D(n)`` increases with ``n``: any cached ``m <= n`` gives
        ``D(n) >= m^2 D(m) / n^2`` (and ``m = 1`` gives ``1 / n^2``).
        """
        q = self._entries.get(n)
        if q is not None:
            return q.distortion
        i = bisect.bisect_right(self._keys, n) - 1
        c = 1.0
        if i >= 0:
            m = self._keys[i]
            c = max(c, m * m * self._entries[m].distortion)
        return c / (n * n)

    def distortions(self, n_max: int) -> np.ndarray:
        """Array ``D`` with ``D[k]`` the distortion of the k-point quantizer
        (``D[0]`` is unused and set to +inf)."""
        out = np.empty(n_max + 1)
        out[0] = np.inf
        for k in range(1, n_max + 1):
            out[k] = self.distortion(k)
        return out

    def items(self):
        return sorted(self._entries.items())

    def check(self) -> None:
        prev = np.inf
        for n, q in self.items():
            if q.n != n:
                raise CorruptTable(f"entry {n} holds {q.n} locations")
            q.check()
            if n - 1 in self._entries and not q.distortion < prev:
                raise CorruptTable(f"distortion not decreasing at n={n}")
            prev = q.distortion


def build_table(n_max: int, tol: float = LLOYD_TOL) -> LookupTable1D:
    if n_max < 1:
        raise BudgetTooSmall("n_max must be >= 1")
    entries = {n: optimal_quantizer(n, tol=tol) for n in range(1, n_max + 1)}
    return LookupTable1D(entries, tolerance=tol)


def table_to_json(table: LookupTable1D) -> dict:
    return {
        "version": TABLE_VERSION,
        "tolerance": table.tolerance,
        "built": table.built,
        "n_max": table.n_max,
        "entries": {
            str(n): {"locations": q.locations.tolist(), "distortion": q.distortion}
            for n, q in table.items()
        },
    }


def table_from_json(obj: dict, verify: bool = True) -> LookupTable1D:
    try:
        if obj.get("version") != TABLE_VERSION:
            raise CorruptTable(f"unsupported table version {obj.get('version')!r}")
        entries = {
            int(k): Quantizer1D(np.asarray(v["locations"], dtype=float), float(v["distortion"]))
            for k, v in obj["entries"].items()
        }
        table = LookupTable1D(entries, tolerance=float(obj.get("tolerance", LLOYD_TOL)),
                              built=obj.get("built"))
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        if isinstance(exc, CorruptTable):
            raise
        raise CorruptTable(f"malformed table: {exc}") from exc
    if verify:
        table.check()
    return table


def save_table(table: LookupTable1D, path) -> None:
    Path(path).write_text(json.dumps(table_to_json(table)))


def load_table(path, verify: bool = True) -> LookupTable1D:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CorruptTable(f"table file is not valid JSON: {exc}") from exc
    return table_from_json(obj, verify=verify)


_default_table: LookupTable1D | None = None
_default_lock = threading.Lock()


def default_table() -> LookupTable1D:
    """Process-wide table: loaded from ``$GMQ_TABLE_PATH`` if set, else an
    empty table filled on demand."""
    global _default_table
    with _default_lock:
        if _default_table is None:
            path = os.environ.get("GMQ_TABLE_PATH")
            if path and os.path.exists(path):
                _default_table = load_table(path)
            else:
                _default_table = LookupTable1D()
        return _default_table


def asymptotic_distortion(n: int) -> float:
    """Zador-type leading-order distortion ``pi sqrt(3) / (2 n^2)``."""
    return math.pi * math.sqrt(3.0) / (2.0 * n * n)
