"""CSV / JSON writers.  Floats are written with ``repr`` so reruns are byte-identical."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .grids import CartesianGrid, PolarizationField, radial_profile


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path, columns: dict) -> Path:
    """Write equal-length columns; keys are the header (``name_unit`` style)."""
    path = Path(path)
    names = list(columns)
    cols = [np.asarray(columns[n]).tolist() if not isinstance(columns[n], list) else columns[n] for n in names]
    n = {len(c) for c in cols}
    if len(n) > 1:
        raise ValueError("columns differ in length")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    out = {}
    for i, name in enumerate(header):
        vals = [r[i] for r in body]
        try:
            out[name] = np.array([float(v) for v in vals])
        except ValueError:
            out[name] = np.array(vals)
    return out


def write_json(path, obj) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return path


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def write_snapshot(path, field: PolarizationField) -> Path:
    """One row per active cell: coordinates and P."""
    grid = field.grid
    if isinstance(grid, CartesianGrid):
        act = grid.active
        c = grid.centers[act]
        return write_csv(path, {"x_nm": c[:, 0], "y_nm": c[:, 1], "z_nm": c[:, 2], "P": field.values[act]})
    return write_csv(path, {"r_nm": grid.centers, "P": field.values})


def write_radial_profile(path, field: PolarizationField, edges=None) -> Path:
    r, p = radial_profile(field, edges)
    return write_csv(path, {"r_nm": r, "P_mean": p})
