"""CSV tables and the JSON summary written for every suite run."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from .suites import SuiteResult


def _cell(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if hasattr(v, "item"):
        return _cell(v.item())
    return v


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if hasattr(v, "item"):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def write_table(rows: list, path: Path, seed: int, config_hash: str) -> None:
    cols = ["seed", "config_hash"]
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            full = {"seed": seed, "config_hash": config_hash, **r}
            w.writerow([_cell(full.get(c, "")) for c in cols])


def emit_report(result: SuiteResult, out_dir, extra: dict | None = None) -> Path:
    """Write one CSV per table plus report.json; returns the JSON path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, rows in result.tables.items():
        write_table(rows, out / f"{name}.csv", result.seed, result.config_hash)
    summary = {
        "suite": result.suite,
        "config_hash": result.config_hash,
        "seed": result.seed,
        "pass": result.passed,
        "metrics": result.metrics,
        "failures": result.failures,
        "notes": result.notes,
        "tables": sorted(result.tables),
    }
    if extra:
        summary.update(extra)
    path = out / "report.json"
    path.write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
