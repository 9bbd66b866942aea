"""Run reports: ``report.json`` (full), ``metrics.csv`` (flat) and ``timings.csv``.

Wall-clock timings live only in ``timings.csv`` so that ``report.json`` is a
pure function of (spec, seeds, code version) and repeats are bit-identical.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

METRIC_COLUMNS = ("seed", "k", "Q", "NMI", "AC", "untrained")


def code_version():
    """Package version plus a digest of the package sources."""
    from . import __version__

    h = hashlib.sha256()
    for p in sorted(Path(__file__).parent.glob("*.py")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return f"{__version__}+{h.hexdigest()[:12]}"


@dataclass
class SeedResult:
    seed: int
    k: int
    Q: float
    NMI: float | None = None
    AC: float | None = None
    untrained: bool = False
    loss_trace: list = field(default_factory=list)
    assignment: str | None = None
    sweep: list | None = None


def summarize(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return None
    return {"median": float(np.median(vals)), "best": float(max(vals)), "mean": float(np.mean(vals))}


@dataclass
class RunReport:
    command: str
    spec: dict
    code_version: str
    dataset: dict = field(default_factory=dict)
    seeds: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def summary(self):
        out = {}
        for m in ("Q", "NMI", "AC"):
            s = summarize([r.get(m) for r in self.seeds])
            if s is not None:
                out[m] = s
        return out

    def add_seed(self, result):
        self.seeds.append(asdict(result))

    def to_dict(self):
        d = asdict(self)
        d["summary"] = self.summary
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d.pop("summary", None)
        return cls(**d)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def metric_rows(self):
        return [{c: r.get(c) for c in METRIC_COLUMNS} for r in self.seeds]

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(self.to_json() + "\n")
        write_metrics_csv(out / "metrics.csv", self.metric_rows())


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_metrics_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRIC_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in METRIC_COLUMNS])


def read_metrics_csv(path):
    conv = {"seed": int, "k": int, "Q": float, "NMI": float, "AC": float, "untrained": lambda s: s == "True"}
    with open(path, newline="") as fh:
        return [{c: (None if row[c] == "" else conv[c](row[c])) for c in METRIC_COLUMNS} for row in csv.DictReader(fh)]


def write_table_csv(path, rows, columns=None):
    """Plain CSV of a list of dicts (sweep tables, bench tables, scaling points)."""
    rows = list(rows)
    columns = list(columns or (rows[0].keys() if rows else []))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])


class Timings:
    """Collects ``(phase, seed, seconds)`` rows."""

    def __init__(self):
        self.rows = []

    @contextmanager
    def phase(self, name, seed=None):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.add(name, seed, time.perf_counter() - t0)

    def add(self, name, seed, seconds):
        self.rows.append({"phase": name, "seed": "" if seed is None else seed, "seconds": float(seconds)})

    def write(self, path):
        write_table_csv(path, self.rows, ["phase", "seed", "seconds"])
