"""Experiment reports: verdicts, fitted constants and CSV-ready series.

Everything except the ``metadata`` key is a pure function of the config and
seed, so two runs produce byte-identical JSON once ``metadata`` is dropped.
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

VERDICTS = ("consistent", "inconsistent", "inconclusive")


def _plain(x):
    """Convert numpy scalars/arrays and non-finite floats to JSON-safe values."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        v = float(x)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


@dataclass
class Constant:
    value: float
    lo: float = math.nan
    hi: float = math.nan

    def to_json(self):
        return {"value": self.value, "ci": [self.lo, self.hi]}


@dataclass
class ExperimentReport:
    """Outcome of one experiment run.

    ``series`` maps column names to equally long lists (one CSV row per
    index); ``constants`` holds fitted values with confidence intervals.
    """

    experiment: str
    config: dict
    seed: int
    series: dict = field(default_factory=dict)
    verdict: str = "inconclusive"
    constants: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    map_hash: str = "nomap"

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")
        lens = {len(v) for v in self.series.values()}
        if len(lens) > 1:
            raise ValueError("series columns have different lengths")

    def to_json_dict(self, timestamp: str | None = None) -> dict:
        d = {
            "experiment": self.experiment,
            "map": self.map_hash,
            "seed": int(self.seed),
            "config": _plain(self.config),
            "verdict": self.verdict,
            "constants": {k: _plain(v.to_json() if isinstance(v, Constant) else v)
                          for k, v in sorted(self.constants.items())},
            "series": _plain(self.series),
            "notes": list(self.notes),
        }
        if timestamp is not None:
            d["metadata"] = {"timestamp": timestamp}
        return d

    def to_json(self, timestamp: str | None = None) -> str:
        return json.dumps(self.to_json_dict(timestamp), indent=1, sort_keys=True)

    @property
    def stem(self) -> str:
        return f"{self.experiment}-{self.map_hash}-{self.seed}"

    def write(self, out_dir) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ts = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        jp = out / f"{self.stem}.json"
        jp.write_text(self.to_json(ts))
        cp = out / f"{self.stem}.csv"
        cols = list(self.series)
        with open(cp, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            n = len(self.series[cols[0]]) if cols else 0
            for i in range(n):
                w.writerow([_csv_cell(self.series[c][i]) for c in cols])
        return jp, cp


def _csv_cell(v):
    v = _plain(v)
    return repr(v) if isinstance(v, float) else v


def strip_metadata(text: str) -> str:
    """Canonical JSON of a report file with the ``metadata`` key removed."""
    d = json.loads(text)
    d.pop("metadata", None)
    return json.dumps(d, indent=1, sort_keys=True)
