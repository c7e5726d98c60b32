"""Trace and manifest files.

Every file is written to a temporary sibling and renamed into place, so a
reader never sees a partial file. Floats are written with ``%.17g`` (CSV)
or ``repr`` (JSON), both of which round-trip exactly, and nothing
time-dependent is recorded, so identical runs produce identical bytes.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile

import numpy as np

TRACE_COLUMNS = ("t", "r", "residual", "envelope", "dist_to_w", "dist_to_y")


def atomic_write_text(path, text: str):
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return "%.17g" % float(x)


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def jsonable(obj):
    """Convert numpy scalars/arrays and non-finite floats to plain JSON values."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(obj, complex):
        return {"re": jsonable(obj.real), "im": jsonable(obj.imag)}
    return obj


def from_jsonable_float(x):
    if isinstance(x, str) and x in ("inf", "-inf", "nan"):
        return float(x)
    return x


def json_text(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj):
    atomic_write_text(path, json_text(obj))


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def write_trace(path, trajectory, fmt="csv"):
    """Write the trajectory rows as CSV (header ``t,r,residual,envelope,dist_to_w,dist_to_y``) or JSON."""
    rows = trajectory.rows()
    if fmt == "csv":
        atomic_write_text(path, csv_text(TRACE_COLUMNS, rows))
    elif fmt == "json":
        write_json(path, [dict(zip(TRACE_COLUMNS, r)) for r in rows])
    else:
        raise ValueError(f"unknown format {fmt!r}")


def write_table(path, columns, rows, fmt="csv"):
    if fmt == "csv":
        atomic_write_text(path, csv_text(columns, rows))
    else:
        write_json(path, [dict(zip(columns, r)) for r in rows])
