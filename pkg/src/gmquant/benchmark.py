"""Error and wall-time sweeps over support sizes, written as CSV."""

from __future__ import annotations

import csv
import io
import logging
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .discretize import discretize_mixture
from .distributions import GaussianMixture
from .errors import GmquantError, InputError
from .generate import generate_scheme_mixture
from .io import mixture_from_json, read_json
from .quantize1d import LookupTable1D, default_table

log = logging.getLogger(__name__)

CSV_COLUMNS = ["case", "name", "size", "w2", "w2_kind", "support", "gen_ms", "disc_ms", "total_ms"]


@dataclass
class BenchmarkCase:
    name: str
    mixture: GaussianMixture
    sizes: Sequence[int] = (10, 100, 1000, 10000)
    configuration: str = "grid"
    per_mode: bool = True
    repetitions: int = 1
    seed: int = 0

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        if any(b <= a for a, b in zip(self.sizes, self.sizes[1:])):
            raise InputError(f"case {self.name!r}: sizes must be strictly ascending")
        if self.repetitions < 1:
            raise InputError(f"case {self.name!r}: repetitions must be >= 1")


@dataclass
class BenchmarkSuite:
    cases: list[BenchmarkCase] = field(default_factory=list)

    @classmethod
    def from_json(cls, obj, base: Path | None = None) -> "BenchmarkSuite":
        cases = []
        for item in obj.get("cases", []):
            mix = item["mixture"]
            if isinstance(mix, str):
                path = Path(mix)
                if base is not None and not path.is_absolute():
                    path = base / path
                mix = read_json(path)
            cases.append(BenchmarkCase(
                name=item.get("name", f"case{len(cases)}"),
                mixture=mixture_from_json(mix),
                sizes=item.get("sizes", (10, 100, 1000, 10000)),
                configuration=item.get("configuration", "grid"),
                per_mode=bool(item.get("per_mode", True)),
                repetitions=int(item.get("repetitions", 1)),
                seed=int(item.get("seed", 0)),
            ))
        return cls(cases)

    @classmethod
    def load(cls, path) -> "BenchmarkSuite":
        return cls.from_json(read_json(path), Path(path).parent)


@dataclass
class BenchmarkRow:
    case: int
    name: str
    size: int
    w2: float
    w2_kind: str
    support: int
    gen_ms: float
    disc_ms: float

    @property
    def total_ms(self) -> float:
        return self.gen_ms + self.disc_ms

    def as_list(self) -> list:
        return [self.case, self.name, self.size, repr(self.w2), self.w2_kind, self.support,
                f"{self.gen_ms:.3f}", f"{self.disc_ms:.3f}", f"{self.total_ms:.3f}"]


def run_case(index: int, case: BenchmarkCase, table: LookupTable1D) -> list[BenchmarkRow]:
    rows = []
    for size in case.sizes:
        gen, disc = [], []
        result = None
        for _ in range(case.repetitions):
            t0 = time.perf_counter()
            schemes = generate_scheme_mixture(case.mixture, size, case.configuration, case.per_mode, table)
            t1 = time.perf_counter()
            result = discretize_mixture(case.mixture, schemes, seed=case.seed)
            t2 = time.perf_counter()
            gen.append((t1 - t0) * 1e3)
            disc.append((t2 - t1) * 1e3)
        rows.append(BenchmarkRow(index, case.name, size, result.certificate.value, result.certificate.kind,
                                 result.discrete.size, statistics.median(gen), statistics.median(disc)))
    return rows


def run_benchmark(suite: BenchmarkSuite, table: LookupTable1D | None = None, parallel: bool = False):
    """Run every case; failures are logged and skipped.

    Returns ``(rows, failures)`` with failures as ``(case name, error)``.
    """
    table = default_table() if table is None else table
    failures: list[tuple[str, Exception]] = []

    def guarded(item):
        i, case = item
        try:
            return run_case(i, case, table)
        except (GmquantError, ArithmeticError, ValueError) as exc:
            log.error("case %s failed: %s", case.name, exc)
            failures.append((case.name, exc))
            return []

    items = list(enumerate(suite.cases))
    if parallel:
        with ThreadPoolExecutor() as pool:
            chunks = list(pool.map(guarded, items))
    else:
        chunks = [guarded(it) for it in items]
    rows = [r for chunk in chunks for r in chunk]
    return rows, failures


def rows_to_csv(rows: Sequence[BenchmarkRow], parallel: bool = False) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS + (["comparable"] if parallel else []))
    for r in rows:
        writer.writerow(r.as_list() + (["false"] if parallel else []))
    return buf.getvalue()
