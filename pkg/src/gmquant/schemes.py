"""Quantization schemes: reference frames, grids, crosses and per-mode sets.

A scheme is a pair (regions, locations). Grids are Cartesian products of 1D
Voronoi partitions in a local frame; crosses combine Mahalanobis shells with
signed dominant-axis sectors. Both admit closed-form Gaussian cell masses
when the frame diagonalizes the covariance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy.special import gammaln

from .distributions import GaussianComponent, cartesian_product
from .errors import DimensionMismatch, IndexOutOfRange, InputError, InvalidThresholds, ParseError
from .quantize1d import midpoint_edges
from .special import chi2_cdf, chi2_sf

ORTHO_TOL = 1e-8


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Axes:
    """Affine reference frame: world ``x = offset + rotation @ (scales * u)``."""

    rotation: np.ndarray
    scales: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        rot = np.atleast_2d(np.array(self.rotation, dtype=float))
        d = rot.shape[0]
        scales = np.broadcast_to(np.array(self.scales, dtype=float), (d,))
        offset = np.broadcast_to(np.array(self.offset, dtype=float), (d,))
        if rot.shape != (d, d):
            raise DimensionMismatch(f"rotation must be square, got {rot.shape}")
        if np.linalg.norm(rot.T @ rot - np.eye(d)) > ORTHO_TOL:
            raise InputError("rotation is not orthogonal")
        if np.any(scales <= 0) or not np.all(np.isfinite(scales)):
            raise InputError("scales must be positive and finite")
        object.__setattr__(self, "rotation", _frozen(rot))
        object.__setattr__(self, "scales", _frozen(scales))
        object.__setattr__(self, "offset", _frozen(offset))

    @classmethod
    def identity(cls, d: int) -> "Axes":
        return cls(np.eye(d), np.ones(d), np.zeros(d))

    @property
    def dim(self) -> int:
        return self.offset.size

    def to_local(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return ((x - self.offset) @ self.rotation) / self.scales

    def to_world(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return self.offset + (u * self.scales) @ self.rotation.T

    def transformed(self, q) -> "Axes":
        """Frame after applying the orthogonal map ``q`` to world space."""
        q = np.asarray(q, dtype=float)
        return Axes(q @ self.rotation, self.scales, q @ self.offset)

    def local_gaussian(self, component: GaussianComponent) -> tuple[np.ndarray, np.ndarray]:
        """Mean and full covariance of ``component`` in local coordinates."""
        m = self.to_local(component.mean)
        c = (self.rotation.T @ component.covariance @ self.rotation) / np.outer(self.scales, self.scales)
        return m, c


def alignment_check(axes: Axes, component: GaussianComponent, tol: float = 1e-8) -> bool:
    """True iff ``rotation^T cov rotation`` is diagonal up to ``tol`` relative
    Frobenius mass."""
    if axes.dim != component.dim:
        raise DimensionMismatch(f"axes of dimension {axes.dim} vs component of dimension {component.dim}")
    cov = component.covariance
    m = axes.rotation.T @ cov @ axes.rotation
    off = m - np.diag(np.diag(m))
    return bool(np.linalg.norm(off) <= tol * np.linalg.norm(cov))


@dataclass(frozen=True)
class GridScheme:
    """Cartesian grid of local points with per-dimension Voronoi edges."""

    points_per_dim: tuple[np.ndarray, ...]
    axes: Axes
    edges_per_dim: tuple[np.ndarray, ...] = field(init=False, repr=False)

    def __post_init__(self):
        pts = tuple(_frozen(np.atleast_1d(p)) for p in self.points_per_dim)
        if len(pts) != self.axes.dim:
            raise DimensionMismatch(f"{len(pts)} point sets for a {self.axes.dim}-dimensional frame")
        for p in pts:
            if p.ndim != 1 or p.size < 1:
                raise InputError("each dimension needs at least one point")
            if np.any(np.diff(p) <= 0):
                raise InputError("grid points must be strictly ascending per dimension")
        object.__setattr__(self, "points_per_dim", pts)
        object.__setattr__(self, "edges_per_dim", tuple(_frozen(midpoint_edges(p)) for p in pts))

    @property
    def dim(self) -> int:
        return self.axes.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(p.size for p in self.points_per_dim)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def local_points(self) -> np.ndarray:
        """All grid points in local coordinates, C-order over multi-indices."""
        return cartesian_product(self.points_per_dim)

    def locations(self) -> np.ndarray:
        return self.axes.to_world(self.local_points())

    def region_index(self, x) -> np.ndarray:
        """Flat index of the cell containing each world point."""
        u = np.atleast_2d(self.axes.to_local(x))
        flat = np.zeros(len(u), dtype=np.int64)
        for j, e in enumerate(self.edges_per_dim):
            if len(e) > 2:
                k = np.clip(np.searchsorted(e, u[:, j], side="right") - 1, 0, len(e) - 2)
                flat = flat * (len(e) - 1) + k
        return flat

    def transformed(self, q) -> "GridScheme":
        return GridScheme(self.points_per_dim, self.axes.transformed(q))


def grid_cell(scheme: GridScheme, multi_index: Sequence[int]):
    """World location of a grid cell and its local per-dimension bounds."""
    idx = tuple(int(i) for i in multi_index)
    if len(idx) != scheme.dim or any(not 0 <= i < n for i, n in zip(idx, scheme.shape)):
        raise IndexOutOfRange(f"index {idx} outside grid of shape {scheme.shape}")
    u = np.array([p[i] for p, i in zip(scheme.points_per_dim, idx)])
    bounds = [(float(e[i]), float(e[i + 1])) for e, i in zip(scheme.edges_per_dim, idx)]
    return scheme.axes.to_world(u), bounds


def chi_shell_mean(lo: float, hi: float, dof: int) -> float:
    """E[R | lo < R^2 <= hi] for R chi-distributed with ``dof`` degrees."""
    ratio = np.sqrt(2.0) * np.exp(gammaln(0.5 * (dof + 1)) - gammaln(0.5 * dof))
    if lo > dof:
        num = chi2_sf(lo, dof + 1) - chi2_sf(hi, dof + 1)
        den = chi2_sf(lo, dof) - chi2_sf(hi, dof)
    else:
        num = chi2_cdf(hi, dof + 1) - chi2_cdf(lo, dof + 1)
        den = chi2_cdf(hi, dof) - chi2_cdf(lo, dof)
    return float(ratio * num / den)


@dataclass(frozen=True)
class CrossRegion:
    kind: str  # "center" or "sector"
    shell: tuple[float, float]  # squared local radius bounds
    axis: int  # -1 for the center
    sign: int
    local_location: np.ndarray
    probability: float  # mass under a standard normal in the local frame


@dataclass(frozen=True)
class CrossScheme:
    """Shells of squared local radius crossed with signed dominant-axis sectors.

    Only the first ``active`` local axes carry mass; the rest (zero-variance
    directions of a degenerate Gaussian) are pinned at local zero. With
    ``include_center`` the innermost ball ``{|u|^2 <= thresholds[0]}`` is a
    single region; every other shell splits into ``2 * active`` sectors.
    """

    axes: Axes
    shell_thresholds: np.ndarray
    include_center: bool = False
    active: int | None = None

    def __post_init__(self):
        th = np.atleast_1d(np.array(self.shell_thresholds, dtype=float))
        if th.ndim != 1 or np.any(th <= 0) or np.any(np.diff(th) <= 0) or not np.all(np.isfinite(th)):
            raise InvalidThresholds("shell thresholds must be positive, finite and strictly ascending")
        active = self.axes.dim if self.active is None else int(self.active)
        if not 0 <= active <= self.axes.dim:
            raise InvalidThresholds(f"active dimension count {active} out of range")
        if active == 0 and not (self.include_center and th.size == 0):
            raise InvalidThresholds("a cross without active axes is a single center point")
        object.__setattr__(self, "shell_thresholds", _frozen(th))
        object.__setattr__(self, "active", active)

    @property
    def dim(self) -> int:
        return self.axes.dim

    @property
    def shell_bounds(self) -> list[tuple[float, float]]:
        b = [0.0, *self.shell_thresholds.tolist(), np.inf]
        return list(zip(b[:-1], b[1:]))

    @property
    def size(self) -> int:
        shells = len(self.shell_bounds) - int(self.include_center)
        return int(self.include_center) + 2 * self.active * shells

    def regions(self) -> list[CrossRegion]:
        return cross_regions(self)

    def locations(self) -> np.ndarray:
        return self.axes.to_world(np.stack([r.local_location for r in self.regions()]))

    def region_index(self, x) -> np.ndarray:
        u = np.atleast_2d(self.axes.to_local(x))[:, : self.active]
        m = np.einsum("ij,ij->i", u, u)
        shell = np.searchsorted(self.shell_thresholds, m, side="left")
        c = int(self.include_center)
        if self.active == 0:
            return np.zeros(len(m), dtype=int)
        j = np.argmax(np.abs(u), axis=1)
        neg = (u[np.arange(len(u)), j] < 0).astype(int)
        sector = c + (shell - c) * 2 * self.active + 2 * j + neg
        if c:
            sector = np.where(shell == 0, 0, sector)
        return sector

    def transformed(self, q) -> "CrossScheme":
        return CrossScheme(self.axes.transformed(q), self.shell_thresholds, self.include_center, self.active)


def cross_regions(scheme: CrossScheme) -> list[CrossRegion]:
    """Partition induced by a cross scheme, with standard-normal masses.

    Sector masses are ``shell mass / (2 * active)`` by symmetry; locations sit
    on the signed axes at the conditional chi mean radius of the shell.
    """
    r = scheme.active
    d = scheme.dim
    out = []
    bounds = scheme.shell_bounds
    if scheme.include_center:
        lo, hi = bounds[0]
        p = float(chi2_cdf(hi, r)) if r else 1.0
        out.append(CrossRegion("center", (lo, hi), -1, 0, _frozen(np.zeros(d)), p))
        bounds = bounds[1:]
    for lo, hi in bounds:
        if lo > r:
            mass = float(chi2_sf(lo, r) - chi2_sf(hi, r))
        else:
            mass = float(chi2_cdf(hi, r) - chi2_cdf(lo, r))
        rad = chi_shell_mean(lo, hi, r) if mass > 0 else np.sqrt(lo)
        for j in range(r):
            for sign in (1, -1):
                u = np.zeros(d)
                u[j] = sign * rad
                out.append(CrossRegion("sector", (lo, hi), j, sign, _frozen(u), mass / (2 * r)))
    return out


Scheme = Union[GridScheme, CrossScheme]


@dataclass(frozen=True)
class SchemeEntry:
    """Schemes attached to one mode.

    ``schemes`` holds either one scheme shared by all members or one scheme
    per member (same order as ``members``). ``budget`` is the mode's support
    budget, used as the compression target.
    """

    schemes: tuple
    anchor: np.ndarray
    members: tuple[int, ...] | None = None
    budget: int | None = None

    def __post_init__(self):
        schemes = tuple(self.schemes) if isinstance(self.schemes, (list, tuple)) else (self.schemes,)
        if not schemes:
            raise InputError("scheme entry without schemes")
        members = None if self.members is None else tuple(int(i) for i in self.members)
        if len(schemes) > 1 and (members is None or len(members) != len(schemes)):
            raise InputError("per-component schemes need one member index per scheme")
        object.__setattr__(self, "schemes", schemes)
        object.__setattr__(self, "anchor", _frozen(self.anchor))
        object.__setattr__(self, "members", members)

    @property
    def shared(self) -> bool:
        return len(self.schemes) == 1

    def scheme_for(self, component_index: int):
        if self.shared:
            return self.schemes[0]
        return self.schemes[self.members.index(component_index)]

    @property
    def size(self) -> int:
        return sum(s.size for s in self.schemes)


@dataclass(frozen=True)
class SchemeSet:
    entries: tuple[SchemeEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def size(self) -> int:
        return sum(e.size for e in self.entries)

    def validate_members(self, n_components: int) -> None:
        sets = [e.members for e in self.entries if e.members is not None]
        if not sets:
            return
        flat = sorted(i for s in sets for i in s)
        if len(sets) == len(self.entries) and flat != list(range(n_components)):
            raise InputError("scheme member sets must partition the mixture components")
        if len(flat) != len(set(flat)) or any(not 0 <= i < n_components for i in flat):
            raise InputError("scheme member sets overlap or reference unknown components")


# --- serialization -----------------------------------------------------------------

def axes_to_json(axes: Axes) -> dict:
    return {"rotation": axes.rotation.tolist(), "scales": axes.scales.tolist(), "offset": axes.offset.tolist()}


def axes_from_json(obj: dict) -> Axes:
    return Axes(np.asarray(obj["rotation"], dtype=float), obj["scales"], obj["offset"])


def scheme_to_json(scheme: Scheme) -> dict:
    if isinstance(scheme, GridScheme):
        return {"type": "grid", "axes": axes_to_json(scheme.axes),
                "points_per_dim": [p.tolist() for p in scheme.points_per_dim]}
    return {"type": "cross", "axes": axes_to_json(scheme.axes),
            "shell_thresholds": scheme.shell_thresholds.tolist(),
            "include_center": bool(scheme.include_center), "active": scheme.active}


def scheme_from_json(obj: dict) -> Scheme:
    try:
        kind = obj["type"]
        axes = axes_from_json(obj["axes"])
        if kind == "grid":
            return GridScheme(tuple(np.asarray(p, dtype=float) for p in obj["points_per_dim"]), axes)
        if kind == "cross":
            return CrossScheme(axes, obj.get("shell_thresholds", []), bool(obj.get("include_center", False)),
                               obj.get("active"))
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed scheme: {exc!r}") from exc
    raise ParseError(f"unknown scheme type {obj.get('type')!r}")


def scheme_set_to_json(ss: SchemeSet) -> list:
    out = []
    for e in ss.entries:
        item = {"anchor": e.anchor.tolist(), "schemes": [scheme_to_json(s) for s in e.schemes]}
        if e.members is not None:
            item["members"] = list(e.members)
        if e.budget is not None:
            item["budget"] = int(e.budget)
        out.append(item)
    return out


def scheme_set_from_json(obj: list) -> SchemeSet:
    try:
        entries = []
        for item in obj:
            if "schemes" in item:
                schemes = tuple(scheme_from_json(s) for s in item["schemes"])
            else:
                schemes = (scheme_from_json(item),)
            anchor = item.get("anchor")
            if anchor is None:
                anchor = schemes[0].axes.offset
            entries.append(SchemeEntry(schemes, anchor, item.get("members"), item.get("budget")))
        return SchemeSet(tuple(entries))
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed scheme set: {exc!r}") from exc


def any_scheme_from_json(obj) -> Scheme | SchemeSet:
    if isinstance(obj, list):
        return scheme_set_from_json(obj)
    if isinstance(obj, dict):
        return scheme_from_json(obj)
    raise ParseError("scheme file must hold an object or a list")


def any_scheme_to_json(s) -> dict | list:
    return scheme_set_to_json(s) if isinstance(s, SchemeSet) else scheme_to_json(s)
