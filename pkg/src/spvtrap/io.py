"""CSV tables, SVG plots and dataset ingestion.

Every CSV starts with ``#`` provenance lines (tool version and config hash)
followed by a single header row; numbers are written with ``%.10g`` so that
identical inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path

import numpy as np

from . import __version__
from .fit import Dataset

__all__ = [
    "DatasetError",
    "DATASET_COLUMNS",
    "write_csv",
    "read_csv",
    "ingest_dataset",
    "save_svg",
]

DATASET_COLUMNS = ("wavelength_nm", "flux_cm2s", "dV_volts", "sigma_volts")


class DatasetError(ValueError):
    """Malformed dataset file; ``problems`` lists (line number, message)."""

    def __init__(self, problems):
        self.problems = list(problems)
        text = "; ".join(f"line {n}: {msg}" for n, msg in self.problems)
        super().__init__(f"invalid dataset ({len(self.problems)} problem(s)): {text}")


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "nan" if math.isnan(v) else f"{v:.10g}"


def write_csv(path, header, rows, provenance: dict | None = None) -> Path:
    """Write rows under ``header``; ``provenance`` entries become leading comments."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    buf.write(f"# spvtrap {__version__}\n")
    for k, v in (provenance or {}).items():
        buf.write(f"# {k}: {v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def read_csv(path):
    """(header, float array) of a file written by :func:`write_csv`."""
    lines = [l for l in Path(path).read_text(encoding="utf-8").splitlines()
             if l and not l.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    rows = [[float(x) for x in r] for r in reader]
    return header, np.array(rows, float).reshape(-1, len(header))


def ingest_dataset(path) -> Dataset:
    """Read a compensation-voltage dataset.

    The header must name the columns ``wavelength_nm, flux_cm2s, dV_volts,
    sigma_volts`` (any order). Rows with unparsable numbers, non-positive
    flux or non-positive uncertainty are collected and reported together by
    line number. Repeated (wavelength, flux) rows are kept as separate
    measurements.
    """
    text = Path(path).read_text(encoding="utf-8")
    reader = csv.reader(io.StringIO(text))
    header = None
    records = []
    problems = []
    for lineno, row in enumerate(reader, start=1):
        if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
            continue
        cells = [c.strip() for c in row]
        if header is None:
            missing = [c for c in DATASET_COLUMNS if c not in cells]
            if missing:
                raise DatasetError([(lineno, f"header lacks columns {missing}")])
            header = {c: cells.index(c) for c in DATASET_COLUMNS}
            continue
        if len(cells) < len(header):
            problems.append((lineno, f"expected {len(header)} fields, got {len(cells)}"))
            continue
        try:
            vals = [float(cells[header[c]]) for c in DATASET_COLUMNS]
        except ValueError as exc:
            problems.append((lineno, f"not a number ({exc})"))
            continue
        if not all(math.isfinite(v) for v in vals):
            problems.append((lineno, "non-finite value"))
        elif vals[1] <= 0:
            problems.append((lineno, f"photon flux must be positive, got {vals[1]:g}"))
        elif vals[3] <= 0:
            problems.append((lineno, f"uncertainty must be positive, got {vals[3]:g}"))
        elif vals[0] <= 0:
            problems.append((lineno, f"wavelength must be positive, got {vals[0]:g}"))
        else:
            records.append(vals)
    if header is None:
        raise DatasetError([(0, "file has no header row")])
    if problems:
        raise DatasetError(problems)
    if not records:
        raise DatasetError([(0, "no data rows")])
    return Dataset.from_records(records)


def save_svg(fig, path, provenance: dict | None = None) -> Path:
    """Save a matplotlib figure as SVG with provenance in a leading XML comment.

    Dates and random element ids are suppressed so reruns produce the same file.
    """
    import matplotlib

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    with matplotlib.rc_context({"svg.hashsalt": "spvtrap", "svg.fonttype": "none"}):
        fig.savefig(buf, format="svg", metadata={"Date": None})
    svg = buf.getvalue()
    note = " ".join(f"{k}={v}" for k, v in (provenance or {}).items())
    comment = f"<!-- spvtrap {__version__} {note} -->\n"
    head, sep, rest = svg.partition("?>\n")
    svg = head + sep + comment + rest if sep else comment + svg
    path.write_text(svg, encoding="utf-8")
    return path
