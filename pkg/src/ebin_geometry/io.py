"""Reading and writing ``.mfield`` field files and metric-path files.

A field file is one JSON object::

    {"version": 1, "n": 2, "dims": [64, 64], "cell_measure": 0.000244140625,
     "data": [g11, g12, g22, g11, g12, g22, ...]}

with cells in row-major order and the upper triangle of each cell stored
row by row.  A path file is ``{"version": 1, "times": [...], "fields": [...]}``
with inline field objects.
"""

import json
import math
from pathlib import Path

import numpy as np

from .errors import InvalidInput
from .fields import GridSpec, MetricField, MetricPath, SemiMetricField, TangentField
from .spd_core import sym_dim

__all__ = [
    "field_to_dict",
    "field_from_dict",
    "save_field",
    "load_field",
    "path_to_dict",
    "path_from_dict",
    "save_path",
    "load_path",
]

FORMAT_VERSION = 1
_KINDS = {"metric": MetricField, "semimetric": SemiMetricField, "tangent": TangentField}


def _dump(obj, path):
    text = json.dumps(obj, allow_nan=False, separators=(",", ":"))
    Path(path).write_text(text + "\n")


def _load(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"{path}: not valid JSON ({exc.msg})") from exc


def field_to_dict(field):
    g = field.grid
    return {
        "version": FORMAT_VERSION,
        "n": g.n,
        "dims": list(g.dims),
        "cell_measure": g.cell_measure,
        "data": field.packed().ravel().tolist(),
    }


def field_from_dict(obj, kind="metric"):
    """Build a field from a parsed ``.mfield`` object.

    Parameters
    ----------
    obj : dict
    kind : {"metric", "semimetric", "tangent"}
    """
    if kind not in _KINDS:
        raise InvalidInput(f"unknown field kind {kind!r}")
    if not isinstance(obj, dict):
        raise InvalidInput("field object must be a JSON object")
    missing = {"version", "n", "dims", "cell_measure", "data"} - set(obj)
    if missing:
        raise InvalidInput(f"field object lacks keys {sorted(missing)}")
    if obj["version"] != FORMAT_VERSION:
        raise InvalidInput(f"unsupported field version {obj['version']!r}")
    grid = GridSpec(int(obj["n"]), tuple(obj["dims"]), float(obj["cell_measure"]))
    data = np.asarray(obj["data"], dtype=float)
    expected = grid.n_cells * sym_dim(grid.n)
    if data.ndim != 1 or data.size != expected:
        raise InvalidInput(f"expected {expected} numbers in 'data', got {data.size}")
    if not np.all(np.isfinite(data)):
        raise InvalidInput("field data must be finite")
    return _KINDS[kind].from_packed(grid, data)


def save_field(path, field):
    _dump(field_to_dict(field), path)


def load_field(path, kind="metric"):
    return field_from_dict(_load(path), kind)


def path_to_dict(mpath):
    return {
        "version": FORMAT_VERSION,
        "times": [float(t) for t in mpath.times],
        "fields": [field_to_dict(f) for f in mpath.fields],
    }


def path_from_dict(obj):
    if not isinstance(obj, dict) or obj.get("version") != FORMAT_VERSION:
        raise InvalidInput("path object must have version 1")
    times = obj.get("times")
    fields = obj.get("fields")
    if not isinstance(times, list) or not isinstance(fields, list):
        raise InvalidInput("path object needs 'times' and 'fields' lists")
    if not all(isinstance(t, (int, float)) and math.isfinite(t) for t in times):
        raise InvalidInput("times must be finite numbers")
    return MetricPath(times, [field_from_dict(f) for f in fields])


def save_path(path, mpath):
    _dump(path_to_dict(mpath), path)


def load_path(path):
    return path_from_dict(_load(path))
