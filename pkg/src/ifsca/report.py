"""Report documents: one JSON body plus CSV sidecars for curves."""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .dynamics import write_curve_csv

REPORT_SCHEMA = "ifsca.report/1"
CSV_COLUMNS = {"n": "step index", "estimate": "Monte Carlo mean of E(Z_n)", "stderr": "standard error of the mean"}


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_plain(x) for x in v.tolist()]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return v


class Report:
    def __init__(self, config: dict, seed: int):
        self.config = config
        self.seed = seed
        self.tasks = []
        self.curves = {}  # file stem -> (mean, stderr)
        self.timings = {"tasks": []}

    def add_task(self, index: int, kind: str, result: dict, expect: str | None, observed: str | None,
                 seconds: float, curves: dict | None = None) -> None:
        entry = {"index": index, "type": kind, "result": result}
        if observed is not None:
            entry["observed"] = observed
        if expect is not None:
            entry["expect"] = expect
            entry["holds"] = observed == expect
        stems = []
        for name, (mean, se) in (curves or {}).items():
            stem = f"task{index:02d}_{name}"
            self.curves[stem] = (np.asarray(mean), np.asarray(se))
            stems.append(stem + ".csv")
        if stems:
            entry["sidecars"] = stems
        self.tasks.append(entry)
        self.timings["tasks"].append({"index": index, "seconds": seconds})

    @property
    def expectations_hold(self) -> bool:
        return all(t.get("holds", True) for t in self.tasks)

    @property
    def refuted_against_expectation(self) -> bool:
        return any(not t.get("holds", True) for t in self.tasks)

    def body(self) -> dict:
        return _plain({"schema": REPORT_SCHEMA, "seed": self.seed, "config": self.config, "tasks": self.tasks,
                       "csv_columns": CSV_COLUMNS, "all_expectations_hold": self.expectations_hold})

    def document(self) -> dict:
        doc = self.body()
        doc["timings"] = _plain(self.timings)
        return doc

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for stem, (mean, se) in self.curves.items():
            write_curve_csv(out / f"{stem}.csv", mean, se)
        path = out / "report.json"
        path.write_text(dumps(self.document()))
        return path


def dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"


def strip_timings(doc: dict) -> dict:
    """The deterministic part of a report document."""
    return {k: v for k, v in doc.items() if k != "timings"}
