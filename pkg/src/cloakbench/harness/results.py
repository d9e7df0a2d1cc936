"""Result tables, acceptance checks and artifact persistence."""
from __future__ import annotations

import csv
import hashlib
import io
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fitting import SlopeFit, slope_fit

COLUMNS = ("sweep_var", "norm_linf", "norm_l2", "n_edges", "solve_residual", "gated", "wall_ms")


def build_id() -> str:
    """Content hash of the package sources (stands in for a commit id)."""
    root = Path(__file__).resolve().parents[1]
    h = hashlib.sha1()
    for p in sorted(root.rglob("*.py")):
        h.update(p.relative_to(root).as_posix().encode())
        h.update(p.read_bytes())
    return h.hexdigest()[:12]


@dataclass
class Row:
    sweep_var: float
    norm_linf: float
    norm_l2: float
    n_edges: int
    solve_residual: float
    gated: bool = True
    wall_ms: float = 0.0

    def __post_init__(self):
        if self.norm_linf < 0 or self.norm_l2 < 0:
            raise ValueError("norms must be non-negative")


@dataclass
class Check:
    name: str
    passed: bool
    detail: str
    informational: bool = False


@dataclass(eq=False)
class ResultTable:
    kind: str
    sweep_name: str = "delta"
    rows: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    fit: SlopeFit | None = None

    def add(self, row: Row):
        self.rows.append(row)

    def column(self, name, gated_only=False):
        rows = [r for r in self.rows if r.gated or not gated_only]
        return np.array([getattr(r, name) for r in rows], float)

    def fit_slope(self, norm: str = "norm_linf") -> SlopeFit | None:
        """Slope of ``log(norm)`` against ``log(sweep_var)`` over gated rows (needs three)."""
        x = self.column("sweep_var", True)
        y = self.column(norm, True)
        if len(x) < 3:
            self.fit = None
            return None
        self.fit = slope_fit(x, y)
        return self.fit

    def check(self, name, passed, detail, informational=False):
        self.checks.append(Check(name, bool(passed), detail, informational))

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if not c.informational)

    def to_csv(self, include_wall: bool = True) -> str:
        buf = io.StringIO()
        for k, v in self.meta.items():
            buf.write(f"# {k}={v}\n")
        buf.write(f"# sweep_var={self.sweep_name}\n")
        cols = COLUMNS if include_wall else COLUMNS[:-1]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.rows:
            vals = [repr(float(r.sweep_var)), repr(float(r.norm_linf)), repr(float(r.norm_l2)),
                    str(int(r.n_edges)), repr(float(r.solve_residual)), "1" if r.gated else "0"]
            if include_wall:
                vals.append(f"{r.wall_ms:.1f}")
            w.writerow(vals)
        return buf.getvalue()

    def report(self) -> str:
        lines = [f"experiment: {self.kind}"]
        lines += [f"{k}: {v}" for k, v in self.meta.items()]
        if self.fit is not None:
            f = self.fit
            lines.append(f"slope: {f.slope:.4f}  (95% band {f.ci95[0]:.4f} .. {f.ci95[1]:.4f})")
            lines.append(f"intercept: {f.intercept:.4f}")
            lines.append(f"r2: {f.r2:.5f}")
        lines += self.notes
        for c in self.checks:
            tag = "INFO" if c.informational else ("PASS" if c.passed else "FAIL")
            lines.append(f"[{tag}] {c.name}: {c.detail}")
        lines.append("overall: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines) + "\n"


class ArtifactWriter:
    """Writes artifacts below ``out`` and keeps ``results.csv`` current after every row."""

    def __init__(self, out, table: ResultTable, config_hash: str):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.table = table
        self.config_hash = config_hash

    def path(self, name) -> str:
        return os.fspath(self.out / name)

    def flush(self):
        with open(self.path("results.csv"), "w") as fh:
            fh.write(self.table.to_csv())

    def text(self, name, text):
        with open(self.path(name), "w") as fh:
            if name.endswith(".csv") and not text.startswith(f"# config_hash={self.config_hash}"):
                fh.write(f"# config_hash={self.config_hash}\n")
            fh.write(text)

    def write_report(self):
        with open(self.path("report.txt"), "w") as fh:
            fh.write(self.table.report())
