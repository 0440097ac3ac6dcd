"""Check records, CSV emission, and the machine-readable run summary.

Every pass/fail is computed from numbers that are also written to CSV, so a
report can be re-derived from the raw files. CSV rows are written in a
canonical order with shortest round-trip float formatting, which makes runs
with the same seed byte-identical.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

__all__ = ["CheckResult", "RunReport", "write_csv", "write_summary", "fmt"]


def fmt(value) -> str:
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    return str(value)


def _jsonable(value):
    if isinstance(value, float) and (math.isinf(value) or math.isnan(value)):
        return fmt(value)
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


@dataclass(frozen=True)
class CheckResult:
    """One acceptance line: observed value against its benchmark."""

    name: str
    status: str  # "pass" | "fail" | "skip"
    observed: Optional[float] = None
    benchmark: Optional[float] = None
    se: Optional[float] = None
    tolerance: Optional[float] = None
    note: str = ""

    def line(self) -> str:
        parts = [f"[{self.status.upper():4}] {self.name}"]
        if self.observed is not None:
            parts.append(f"observed={fmt(self.observed)}")
        if self.benchmark is not None:
            parts.append(f"benchmark={fmt(self.benchmark)}")
        if self.se is not None:
            parts.append(f"se={fmt(self.se)}")
        if self.tolerance is not None:
            parts.append(f"tol={fmt(self.tolerance)}")
        if self.note:
            parts.append(self.note)
        return "  ".join(parts)


def check_z(name: str, observed: float, benchmark: float, se: float, sigmas: float, note: str = "") -> CheckResult:
    """Benchmark agreement within ``sigmas`` standard errors."""
    ok = abs(observed - benchmark) <= sigmas * se
    return CheckResult(name, "pass" if ok else "fail", observed, benchmark, se, sigmas, note)


def check_bound(name: str, observed: float, limit: float, below: bool = True, note: str = "") -> CheckResult:
    ok = observed <= limit if below else observed >= limit
    return CheckResult(name, "pass" if ok else "fail", observed, limit, None, None, note)


@dataclass
class RunReport:
    experiment: str
    checks: list[CheckResult] = field(default_factory=list)
    csv_files: list[str] = field(default_factory=list)
    details: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    def add(self, check: CheckResult) -> CheckResult:
        self.checks.append(check)
        return check

    @property
    def passed(self) -> bool:
        return all(c.status != "fail" for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "passed": self.passed,
            "checks": [
                {
                    "name": c.name,
                    "status": c.status,
                    "observed": _jsonable(c.observed),
                    "benchmark": _jsonable(c.benchmark),
                    "se": _jsonable(c.se),
                    "tolerance": _jsonable(c.tolerance),
                    "note": c.note,
                }
                for c in self.checks
            ],
            "csv_files": self.csv_files,
            "details": _jsonable(self.details),
            "wall_clock_s": round(self.wall_clock, 3),
        }


def write_csv(path: Path, header: list[str], rows: list[tuple]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def write_summary(path: Path, reports: list[RunReport], config_echo: dict, versions: dict) -> dict:
    summary = {
        "config": _jsonable(config_echo),
        "versions": versions,
        "experiments": [r.to_dict() for r in reports],
        "all_passed": all(r.passed for r in reports),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def versions_dict() -> dict:
    import numpy
    import scipy

    from . import __version__

    return {"bbmlab": __version__, "numpy": numpy.__version__, "scipy": scipy.__version__}
