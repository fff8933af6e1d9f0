"""Command-line front end.

Exit codes: 0 on success, 2 for input or parse errors, 3 for numerical
errors. Failures print a JSON object ``{"error": code, "message": ...}`` on
stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import benchmark as bench
from .discretize import discretize_mixture
from .errors import GmquantError, InputError, MathError
from .generate import HOMOGENEITY_TOL, generate_scheme_mixture
from .io import (discrete_to_json, load_discrete, load_mixture, load_scheme, report_to_json, save_scheme,
                 write_json)
from .oracles import mc_coupling_cost
from .quantize1d import LookupTable1D, build_table, default_table, load_table, save_table

log = logging.getLogger("gmquant")

EXIT_OK, EXIT_INPUT, EXIT_MATH = 0, 2, 3


def _table(args) -> LookupTable1D:
    path = getattr(args, "table", None) or os.environ.get("GMQ_TABLE_PATH")
    return load_table(path) if path else default_table()


def _scheme_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--size", type=int, required=True, help="requested support size")
    p.add_argument("--configuration", choices=("grid", "cross"), default="grid")
    grp = p.add_mutually_exclusive_group()
    grp.add_argument("--per-mode", dest="per_mode", action="store_true", default=True)
    grp.add_argument("--per-component", dest="per_mode", action="store_false")
    p.add_argument("--mode-merge-tol", type=float, default=None)
    p.add_argument("--homogeneity-tol", type=float, default=HOMOGENEITY_TOL)
    p.add_argument("--allocation", choices=("mode", "split"), default="mode")
    p.add_argument("--table", help="1D lookup table JSON (default: $GMQ_TABLE_PATH)")


def _disc_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--compress", action="store_true")
    p.add_argument("--prune", type=float, default=0.0, help="drop atoms with probability below this")
    p.add_argument("--mc-samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="discrete distribution JSON")
    p.add_argument("--report", help="report JSON (default: stdout)")


def _generate(args, mix):
    return generate_scheme_mixture(mix, args.size, args.configuration, args.per_mode, _table(args),
                                   mode_merge_tol=args.mode_merge_tol, homogeneity_tol=args.homogeneity_tol,
                                   allocation=args.allocation)


def _emit_result(args, result, timings):
    discrete = result.discrete
    pruned = 0.0
    if args.prune > 0:
        discrete, pruned = discrete.pruned(args.prune)
    write_json(discrete_to_json(discrete), args.out)
    report = report_to_json(result, timings, pruned)
    report["support_size"] = discrete.size
    text = json.dumps(report)
    if args.report:
        Path(args.report).write_text(text)
    else:
        print(text)


def cmd_quantize(args) -> int:
    mix = load_mixture(args.dist)
    t0 = time.perf_counter()
    schemes = _generate(args, mix)
    t1 = time.perf_counter()
    result = discretize_mixture(mix, schemes, args.compress, mc_samples=args.mc_samples, seed=args.seed)
    t2 = time.perf_counter()
    if args.scheme_out:
        save_scheme(schemes, args.scheme_out)
    _emit_result(args, result, {"generate": (t1 - t0) * 1e3, "discretize": (t2 - t1) * 1e3})
    return EXIT_OK


def cmd_generate(args) -> int:
    mix = load_mixture(args.dist)
    save_scheme(_generate(args, mix), args.out)
    return EXIT_OK


def cmd_discretize(args) -> int:
    mix = load_mixture(args.dist)
    schemes = load_scheme(args.scheme)
    t0 = time.perf_counter()
    result = discretize_mixture(mix, schemes, args.compress, mc_samples=args.mc_samples, seed=args.seed)
    _emit_result(args, result, {"discretize": (time.perf_counter() - t0) * 1e3})
    return EXIT_OK


def cmd_benchmark(args) -> int:
    suite = bench.BenchmarkSuite.load(args.suite)
    rows, failures = bench.run_benchmark(suite, _table(args), parallel=args.parallel)
    text = bench.rows_to_csv(rows, parallel=args.parallel)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    for name, exc in failures:
        _error(exc, case=name)
    return (EXIT_MATH if any(isinstance(e, ArithmeticError) for _, e in failures) else EXIT_INPUT) if failures \
        else EXIT_OK


def cmd_tables_build(args) -> int:
    if args.max_n < 1:
        raise InputError("--max-n must be >= 1")
    save_table(build_table(args.max_n), args.out)
    return EXIT_OK


def cmd_oracle_w2(args) -> int:
    mix = load_mixture(args.dist)
    disc = load_discrete(args.discrete)
    est = mc_coupling_cost(mix, disc.locations, args.samples, args.seed)
    print(json.dumps({"value": est.value, "std_error": est.std_error, "samples": est.samples,
                      "seed": est.seed, "estimator": "voronoi_coupling"}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gmquant", description="Certified quantization of Gaussian mixtures.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("quantize", help="generate a scheme and discretize in one step")
    p.add_argument("dist", help="mixture JSON")
    _scheme_opts(p)
    _disc_opts(p)
    p.add_argument("--scheme-out", help="also write the generated scheme JSON")
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("generate-scheme", help="write a scheme set for a mixture")
    p.add_argument("dist")
    _scheme_opts(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("discretize", help="apply a saved scheme to a mixture")
    p.add_argument("dist")
    p.add_argument("--scheme", required=True)
    _disc_opts(p)
    p.set_defaults(func=cmd_discretize)

    p = sub.add_parser("benchmark", help="run a benchmark suite and emit CSV")
    p.add_argument("suite")
    p.add_argument("--out")
    p.add_argument("--parallel", action="store_true")
    p.add_argument("--table")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("tables", help="1D lookup table management")
    tsub = p.add_subparsers(dest="tables_command", required=True)
    tb = tsub.add_parser("build")
    tb.add_argument("--max-n", type=int, required=True)
    tb.add_argument("--out", required=True)
    tb.set_defaults(func=cmd_tables_build)

    p = sub.add_parser("oracle", help="Monte-Carlo oracles")
    osub = p.add_subparsers(dest="oracle_command", required=True)
    ow = osub.add_parser("w2", help="Voronoi-coupling estimate of the transport cost to a discrete support")
    ow.add_argument("--dist", required=True)
    ow.add_argument("--discrete", required=True)
    ow.add_argument("--samples", type=int, default=1_000_000)
    ow.add_argument("--seed", type=int, default=0)
    ow.set_defaults(func=cmd_oracle_w2)
    return parser


def _error(exc: Exception, **extra) -> None:
    code = getattr(exc, "code", None) or ("math" if isinstance(exc, ArithmeticError) else "input")
    print(json.dumps({"error": code, "message": str(exc), "type": type(exc).__name__, **extra}), file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (MathError, ArithmeticError, MemoryError) as exc:
        _error(exc)
        return EXIT_MATH
    except (InputError, GmquantError, ValueError, OSError) as exc:
        _error(exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
