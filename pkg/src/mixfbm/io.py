"""Deterministic CSV/JSON writers with embedded provenance."""

from __future__ import annotations

import csv
import json
import math
import os
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import __version__

OUTPUT_DIR_ENV = "MIXFBM_OUTPUT_DIR"


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_DIR_ENV, "."))


def provenance(**fields) -> dict:
    """Replay metadata; every output file carries it."""
    out = {"version": __version__}
    out.update(fields)
    return _plain(out)


def _plain(obj):
    """Convert numpy scalars/arrays and non-finite floats to JSON-safe values."""
    if isinstance(obj, Mapping):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def dumps(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"


def write_json(path: Path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj), encoding="utf-8")
    return path


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        x = float(v)
        return "" if math.isnan(x) else repr(x)
    return str(v)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence], meta: Optional[dict] = None) -> Path:
    """RFC-4180 CSV; provenance goes on a leading '# ' comment line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if meta is not None:
            fh.write("# " + json.dumps(_plain(meta), sort_keys=True) + "\r\n")
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def write_gnuplot(path: Path, data: Path, title: str, using: str, xlabel: str, ylabel: str,
                  logscale: str = "") -> Path:
    """Companion gnuplot script for a CSV written by ``write_csv``."""
    lines = [
        "set datafile separator ','",
        "set datafile commentschars '#'",
        "set key autotitle columnhead",
        f"set title '{title}'",
        f"set xlabel '{xlabel}'",
        f"set ylabel '{ylabel}'",
    ]
    if logscale:
        lines.append(f"set logscale {logscale}")
    lines.append(f"plot '{Path(data).name}' using {using} with linespoints")
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
