"""CSV / JSON emission and read-back of benchmark records.

Each run gets ``run_<id>.csv`` (header ``step,estimate,flagged``) and all runs
share one ``summary.json``. Floats are written with 17 significant digits so
read-back is bitwise exact.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import UsageError
from .experiments import BenchConfig, RunRecord

SUMMARY_NAME = "summary.json"


def _fmt(x: float) -> str:
    return "%.17g" % x


def csv_name(record: RunRecord) -> str:
    return f"run_{record.config.run_id}.csv"


def write_run_csv(record: RunRecord, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write("step,estimate,flagged\n")
        for t, (v, f) in enumerate(zip(record.per_step_estimates, record.flagged)):
            fh.write(f"{t},{_fmt(v)},{int(f)}\n")
    return path


def summary_entry(record: RunRecord) -> dict:
    return {
        "run_id": record.config.run_id,
        "csv": csv_name(record),
        "config": record.config.to_dict(),
        "final_estimate": float(record.final_estimate),
        "ground_truth": float(record.ground_truth),
        "ln_N": float(record.ln_N),
        "flagged_steps": int(np.sum(record.flagged)),
        "wall_time_seconds": float(record.wall_time_seconds),
    }


def write_records(records, output_dir) -> list[Path]:
    """Write one CSV per record plus ``summary.json``; returns all paths."""
    records = list(records)
    if not records:
        raise UsageError("no records to write")
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [write_run_csv(r, out / csv_name(r)) for r in records]
    summary = out / SUMMARY_NAME
    summary.write_text(json.dumps({"runs": [summary_entry(r) for r in records]}, indent=2) + "\n")
    return paths + [summary]


def read_run_csv(path):
    """Returns ``(estimates, flagged)`` arrays."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["step", "estimate", "flagged"]:
            raise UsageError(f"unexpected CSV header {header}")
        rows = list(reader)
    estimates = np.array([float(r[1]) for r in rows])
    flagged = np.array([r[2] == "1" for r in rows], dtype=bool)
    return estimates, flagged


def read_summary(path) -> dict:
    return json.loads(Path(path).read_text())


def read_records(output_dir) -> list[RunRecord]:
    out = Path(output_dir)
    records = []
    for entry in read_summary(out / SUMMARY_NAME)["runs"]:
        estimates, flagged = read_run_csv(out / entry["csv"])
        records.append(RunRecord(
            config=BenchConfig.from_dict(entry["config"]),
            per_step_estimates=estimates,
            flagged=flagged,
            final_estimate=entry["final_estimate"],
            ground_truth=entry["ground_truth"],
            ln_N=entry["ln_N"],
            wall_time_seconds=entry["wall_time_seconds"],
        ))
    return records


def write_report(report: dict, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return path
