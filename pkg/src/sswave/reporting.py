"""Series export and machine-readable run reports.

The CSV schema is fixed: one row per sample with columns

    s,E,q_norm,d,lambda,theta_2..theta_m,alpha_1_1,alpha_minus_1..alpha_minus_m,a,b,R_minus

written with 17 significant digits so doubles round-trip losslessly.  Reports
carry the config echo, one record per check with the measured value and its
tolerance, fitted constants and output paths; they are deterministic for a
fixed config and seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .modulation import MonitorSeries


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def series_header(m: int) -> str:
    cols = ["s", "E", "q_norm", "d", "lambda"]
    cols += [f"theta_{j}" for j in range(2, m + 1)]
    cols += ["alpha_1_1"]
    cols += [f"alpha_minus_{j}" for j in range(1, m + 1)]
    cols += ["a", "b", "R_minus"]
    return ",".join(cols)


def emit_series(series: MonitorSeries, path) -> Path:
    """Write a monitor series as CSV.  Empty series are an error."""
    if len(series) == 0:
        raise ValueError("refusing to write an empty series")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    m = series.m
    lines = [series_header(m)]
    for i in range(len(series)):
        row = [series.s[i], series.E[i], series.q_norm[i], series.d[i], series.lam[i]]
        row += list(series.theta[i])
        row += [series.alpha_1_1[i]]
        row += list(series.alpha_minus[i])
        row += [series.a[i], series.b[i], series.R_minus[i]]
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_series(path) -> dict:
    """Parse an emitted CSV back into named float columns."""
    lines = Path(path).read_text().strip().splitlines()
    names = lines[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    return {name: data[:, i] for i, name in enumerate(names)}


@dataclass
class CheckRecord:
    name: str
    passed: bool
    value: float
    tolerance: float
    note: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        note = f"  ({self.note})" if self.note else ""
        return f"[{status}] {self.name}: value={self.value:.6g} tol={self.tolerance:.6g}{note}"


@dataclass
class RunReport:
    command: str
    config: dict
    checks: list = field(default_factory=list)
    fitted: dict = field(default_factory=dict)
    series_paths: list = field(default_factory=list)
    figure_paths: list = field(default_factory=list)

    def add_check(self, name, passed, value, tolerance, note="") -> "RunReport":
        self.checks.append(CheckRecord(name, bool(passed), float(value),
                                       float(tolerance), note))
        return self

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "config": self.config,
            "passed": self.passed,
            "checks": [vars(c) for c in self.checks],
            "fitted": self.fitted,
            "series": [str(pth) for pth in self.series_paths],
            "figures": [str(pth) for pth in self.figure_paths],
        }

    def text(self) -> str:
        lines = [f"command: {self.command}"]
        lines += [f"  {k} = {v}" for k, v in sorted(self.config.items())]
        lines += [c.line() for c in self.checks]
        for k, v in sorted(self.fitted.items()):
            lines.append(f"fitted {k} = {v:.6g}" if isinstance(v, float) else f"fitted {k} = {v}")
        for pth in self.series_paths:
            lines.append(f"series: {pth}")
        for pth in self.figure_paths:
            lines.append(f"figure: {pth}")
        lines.append("result: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines)

    def write(self, outdir) -> Path:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "report.json").write_text(json.dumps(self.to_dict(), indent=2,
                                                       sort_keys=True) + "\n")
        (outdir / "report.txt").write_text(self.text() + "\n")
        return outdir / "report.json"
