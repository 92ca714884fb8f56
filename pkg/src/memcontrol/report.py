"""Pass/fail report rows and their CSV/JSON files."""

from __future__ import annotations

import csv
import io
import json
import math
import platform
from dataclasses import dataclass
from pathlib import Path

HEADER = ["scenario", "metric", "value", "tol", "pass"]


@dataclass(frozen=True)
class ReportRow:
    """One checked metric. ``passed`` iff ``value <= tol`` (``tol = inf`` marks a recorded value)."""

    scenario: str
    metric: str
    value: float
    tol: float
    passed: bool

    @classmethod
    def check(cls, scenario: str, metric: str, value: float, tol: float = math.inf) -> "ReportRow":
        value = float(value)
        return cls(scenario, metric, value, float(tol), bool(math.isfinite(value) and value <= tol) or tol == math.inf)

    @classmethod
    def at_least(cls, scenario: str, metric: str, value: float, bound: float) -> "ReportRow":
        """Row for a lower bound, stored as the shortfall ``bound - value`` against tolerance 0."""
        return cls.check(scenario, metric, float(bound) - float(value), 0.0)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADER)
    for r in rows:
        writer.writerow([r.scenario, r.metric, _fmt(r.value), _fmt(r.tol), "true" if r.passed else "false"])
    return buf.getvalue()


def rows_from_csv(text: str) -> list[ReportRow]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != HEADER:
        raise ValueError(f"unexpected header {reader.fieldnames}")
    return [ReportRow(r["scenario"], r["metric"], float(r["value"]), float(r["tol"]), r["pass"] == "true") for r in reader]


def versions() -> dict:
    from importlib import metadata

    out = {"python": platform.python_version()}
    for name in ("memcontrol", "numpy", "scipy", "click"):
        out[name] = metadata.version(name)
    return out


def emit_report(rows, formats, directory, meta: dict | None = None) -> list[Path]:
    """Write ``report.csv`` and/or ``summary.json`` into ``directory``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    rows = list(rows)
    if "csv" in formats:
        path = out / "report.csv"
        path.write_text(rows_to_csv(rows))
        written.append(path)
    if "json" in formats:
        summary = dict(meta or {})
        summary["all_pass"] = all(r.passed for r in rows)
        summary["rows"] = [
            {"scenario": r.scenario, "metric": r.metric, "value": r.value, "tol": r.tol, "pass": r.passed} for r in rows
        ]
        summary.setdefault("versions", versions())
        path = out / "summary.json"
        # infinite tolerances become the string "inf"
        path.write_text(json.dumps(summary, indent=2, default=str).replace("Infinity", '"inf"'))
        written.append(path)
    return written
