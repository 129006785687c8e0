"""CSV and JSON artifacts.

JSON reports keep run-dependent data (timestamps, wall time, host) under a
top-level "meta" key so that the rest of the document is reproducible byte
for byte.  CSV floats use 17 significant digits.
"""

from __future__ import annotations

import json
import platform
import time
from importlib import resources
from pathlib import Path

import numpy as np

from .grid import GridSpec
from .solver import action_name

FLOAT_FMT = "%.17g"


def coord_names(d):
    return [f"x{i + 1}" for i in range(d)]


def write_field_csv(path, u, g, mask):
    grid = u.grid
    cols = [grid.points(), u.values.reshape(-1, 1), g.values.reshape(-1, 1)]
    data = np.hstack(cols)
    header = ",".join(coord_names(grid.d) + ["u", "g", "contact"])
    contact = mask.mask.reshape(-1).astype(int)
    fmt = [FLOAT_FMT] * data.shape[1] + ["%d"]
    np.savetxt(path, np.column_stack([data, contact]), fmt=fmt, delimiter=",",
               header=header, comments="")


def write_policy_csv(path, policy):
    grid = policy.grid
    codes = policy.actions.reshape(-1).astype(int)
    names = [action_name(c) for c in range(int(codes.max()) + 1)]
    pts = grid.points()
    with open(path, "w") as fh:
        fh.write(",".join(coord_names(grid.d) + ["code", "action"]) + "\n")
        for row, code in zip(pts, codes):
            fh.write(",".join(FLOAT_FMT % v for v in row) + f",{code},{names[code]}\n")


def write_points_csv(path, points, names):
    points = np.asarray(points, dtype=float).reshape(-1, len(names))
    np.savetxt(path, points, fmt=FLOAT_FMT, delimiter=",", header=",".join(names), comments="")


def write_profile_csv(path, profile):
    """Both branches of the diagonal channel edge as polylines in (x1, x2)."""
    t, s = profile.t, profile.s_star
    rows = []
    for branch, sign in (("upper", 1.0), ("lower", -1.0)):
        x1 = (t + sign * s) / np.sqrt(2.0)
        x2 = (t - sign * s) / np.sqrt(2.0)
        rows.extend((branch, a, b, tt, ss) for a, b, tt, ss in zip(x1, x2, t, s))
    with open(path, "w") as fh:
        fh.write("branch,x1,x2,t,s\n")
        for branch, a, b, tt, ss in rows:
            fh.write(f"{branch}," + ",".join(FLOAT_FMT % v for v in (a, b, tt, ss)) + "\n")


def read_field_csv(path, grid):
    """Contact flags and u from a field CSV written for ``grid``."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[0] != grid.size:
        raise ValueError(f"{path} has {data.shape[0]} rows, expected {grid.size}")
    d = grid.d
    return data[:, d].reshape(grid.shape), data[:, -1].astype(bool).reshape(grid.shape)


def read_policy_csv(path, grid):
    codes = np.loadtxt(path, delimiter=",", skiprows=1, usecols=grid.d, dtype=np.int8, ndmin=1)
    if codes.size != grid.size:
        raise ValueError(f"{path} has {codes.size} rows, expected {grid.size}")
    return codes.reshape(grid.shape)


def grid_to_json(grid):
    return {"lower": list(grid.lower), "upper": list(grid.upper), "h": grid.h, "counts": list(grid.counts)}


def grid_from_json(obj):
    return GridSpec(tuple(obj["lower"]), tuple(obj["upper"]), obj["h"])


def meta(wall_time=None):
    out = {
        "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "python": platform.python_version(),
    }
    if wall_time is not None:
        out["wall_time"] = float(wall_time)
    return out


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    return obj


def write_json(path, payload, run_meta=None):
    doc = dict(_clean(payload))
    doc["meta"] = _clean(run_meta or meta())
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return doc


def strip_meta(doc):
    return {k: v for k, v in doc.items() if k != "meta"}


def load_schema(name):
    text = resources.files("parsearch").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)
