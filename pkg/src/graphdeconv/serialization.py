"""JSON helpers. Matrices are written row-major with an explicit storage tag."""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .exceptions import ContractError

SCHEMA_VERSION = 1


def matrix_to_json(M):
    M = np.asarray(M, dtype=float)
    return {"storage": "row_major", "shape": list(M.shape), "data": M.tolist()}


def matrix_from_json(d):
    if isinstance(d, dict):
        if d.get("storage", "row_major") != "row_major":
            raise ContractError(f"unsupported matrix storage {d.get('storage')!r}")
        M = np.asarray(d["data"], dtype=float)
        return M.reshape(d["shape"]) if "shape" in d else M
    return np.asarray(d, dtype=float)


def _clean(obj):
    # json.dumps emits bare NaN/Infinity, which is not JSON; map them to null
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def dumps(obj):
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj):
    path = Path(path)
    try:
        path.write_text(dumps(obj))
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def read_json(path):
    with Path(path).open() as fh:
        return json.load(fh)
