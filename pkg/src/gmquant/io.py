"""JSON file formats for mixtures, discrete distributions, schemes and reports.

Floats are written with Python's shortest round-trip ``repr`` (at most 17
significant digits), so ``parse(emit(x)) == x`` bit for bit.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .distributions import DiscreteDistribution, GaussianComponent, GaussianMixture
from .errors import GmquantError, ParseError
from .schemes import any_scheme_from_json, any_scheme_to_json


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror or exc}") from exc


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, allow_nan=True))


def mixture_to_json(mix: GaussianMixture) -> dict:
    return {
        "weights": mix.weights.tolist(),
        "components": [{"mean": c.mean.tolist(), "cov": c.covariance.tolist()} for c in mix.components],
    }


def mixture_from_json(obj) -> GaussianMixture:
    """Accepts ``{"weights", "components": [{"mean", "cov"}]}`` or a single
    ``{"mean", "cov"}`` Gaussian."""
    try:
        if "components" not in obj and "mean" in obj:
            return GaussianMixture.single(GaussianComponent(obj["mean"], obj["cov"]))
        comps = tuple(GaussianComponent(c["mean"], c["cov"]) for c in obj["components"])
        return GaussianMixture(np.asarray(obj["weights"], dtype=float), comps)
    except GmquantError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed mixture: {exc!r}") from exc


def discrete_to_json(d: DiscreteDistribution) -> dict:
    return {"locations": d.locations.tolist(), "probs": d.probabilities.tolist()}


def discrete_from_json(obj) -> DiscreteDistribution:
    try:
        return DiscreteDistribution(np.asarray(obj["locations"], dtype=float), np.asarray(obj["probs"], dtype=float))
    except GmquantError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed discrete distribution: {exc!r}") from exc


def load_mixture(path) -> GaussianMixture:
    return mixture_from_json(read_json(path))


def load_discrete(path) -> DiscreteDistribution:
    return discrete_from_json(read_json(path))


def load_scheme(path):
    return any_scheme_from_json(read_json(path))


def save_scheme(scheme, path) -> None:
    write_json(any_scheme_to_json(scheme), path)


def report_to_json(result, timings_ms: dict | None = None, pruned_mass: float = 0.0) -> dict:
    cert = result.certificate
    out = {
        "w2": cert.value,
        "kind": cert.kind,
        "support_size": result.discrete.size,
        "per_component_sq_errors": None if result.per_component_sq_errors is None
        else result.per_component_sq_errors.tolist(),
        "timings_ms": timings_ms or {},
    }
    if cert.statistical:
        out["statistical"] = True
        out["std_error"] = cert.std_error
    if result.compression_cost:
        out["compression_cost"] = result.compression_cost
    if pruned_mass:
        out["pruned_mass"] = pruned_mass
    return out
