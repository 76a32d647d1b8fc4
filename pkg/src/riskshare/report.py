"""Plain-text reports and CSV tables written by the command line."""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

ALLOCATION_HEADER = ("atom", "X")
RISKS_HEADER = ("agent", "risk", "conjugate certificate")
DIAGNOSTICS_HEADER = ("agent", "admissible", "compatible density id", "witness norm")


def fmt(value) -> str:
    """12 significant digits, '.' separator, independent of locale."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, str):
        return value
    v = float(value)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".12g")


def _write(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_allocation(out_dir, atoms, X, Y):
    n = len(Y)
    header = ALLOCATION_HEADER + tuple(f"X_{i + 1}" for i in range(n))
    rows = [(a, X[j], *(Y[i][j] for i in range(n))) for j, a in enumerate(atoms)]
    _write(Path(out_dir) / "allocation.csv", header, rows)


def write_risks(out_dir, names, risks, certificates):
    _write(Path(out_dir) / "risks.csv", RISKS_HEADER, zip(names, risks, certificates))


def write_diagnostics(out_dir, names, admissible, density_ids, witness_norms):
    _write(Path(out_dir) / "diagnostics.csv", DIAGNOSTICS_HEADER,
           zip(names, admissible, density_ids, witness_norms))


class Report:
    """Structured text: ``[section]`` headers followed by ``key = value`` lines."""

    def __init__(self, command: str):
        self.lines = [f"command = {command}"]

    def section(self, title: str):
        self.lines += ["", f"[{title}]"]

    def item(self, key: str, value):
        if isinstance(value, (list, tuple, np.ndarray)):
            value = "[" + ", ".join(fmt(v) for v in value) + "]"
        else:
            value = fmt(value) if not isinstance(value, str) else value
        self.lines.append(f"{key} = {value}")

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"

    def write(self, out_dir):
        (Path(out_dir) / "report.txt").write_text(self.text(), encoding="utf-8")
