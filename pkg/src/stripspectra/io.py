"""Persistence helpers: atomic writes, fixed-precision CSV tables, JSON."""

from __future__ import annotations

import csv
import json
import os
import tempfile
from pathlib import Path

import numpy as np

FLOAT_FMT = "{:.17g}"


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_float(v) -> str:
    return FLOAT_FMT.format(float(v))


def write_table(path, header, rows) -> None:
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.size and rows.shape[1] != len(header):
        raise ValueError(f"table has {rows.shape[1]} columns, header has {len(header)}")
    lines = [",".join(header)]
    lines.extend(",".join(format_float(v) for v in row) for row in rows)
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_table(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in r] for r in reader if r]
    return header, np.array(rows, dtype=float).reshape(len(rows), len(header))


def write_dat(path, columns: dict) -> None:
    """Whitespace-separated, gnuplot-ready table with a ``#`` header line."""
    names = list(columns)
    data = np.column_stack([np.asarray(columns[k], dtype=float) for k in names])
    lines = ["# " + " ".join(names)]
    lines.extend(" ".join(format_float(v) for v in row) for row in data)
    atomic_write_text(path, "\n".join(lines) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not np.isfinite(v):
            return repr(v)
        return float(format_float(v))
    return obj


def to_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=False)


def write_json(path, obj) -> None:
    atomic_write_text(path, to_json(obj) + "\n")
