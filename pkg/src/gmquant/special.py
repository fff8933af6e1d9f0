"""Scalar special functions for the standard normal and chi-square laws."""

from __future__ import annotations

import numpy as np
from scipy import special

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def std_normal_cdf(x):
    """Standard normal cdf, evaluated as ``0.5 * erfc(-x / sqrt(2))``.

    The erfc form keeps full relative accuracy in the lower tail; the upper
    tail is handled by :func:`std_normal_sf`.
    """
    return 0.5 * special.erfc(-np.asarray(x, dtype=float) / _SQRT2)


def std_normal_sf(x):
    """Survival function ``1 - Phi(x)`` without cancellation."""
    return 0.5 * special.erfc(np.asarray(x, dtype=float) / _SQRT2)


def std_normal_pdf(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):
        return _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def std_normal_ppf(p):
    return special.ndtri(p)


def chi2_cdf(x, dof: int):
    """Regularized lower incomplete gamma ``P(dof/2, x/2)``."""
    if dof < 1:
        raise ValueError("dof must be >= 1")
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    return special.gammainc(0.5 * dof, 0.5 * x)


def chi2_sf(x, dof: int):
    if dof < 1:
        raise ValueError("dof must be >= 1")
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    return special.gammaincc(0.5 * dof, 0.5 * x)


def chi2_ppf(p, dof: int):
    return 2.0 * special.gammaincinv(0.5 * dof, np.asarray(p, dtype=float))


def normal_interval_mass(a, b):
    """``Phi(b) - Phi(a)`` evaluated on the tail closer to the interval.

    Intervals in the upper half-line are computed from survival functions so
    tiny masses far in the right tail are not lost to cancellation.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    upper = a > 0
    lo = np.where(upper, std_normal_sf(a) - std_normal_sf(b), std_normal_cdf(b) - std_normal_cdf(a))
    return np.maximum(lo, 0.0)
