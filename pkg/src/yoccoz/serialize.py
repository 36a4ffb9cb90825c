"""Conversion of report structures to plain JSON-ready values."""

from __future__ import annotations

import dataclasses
import json
import math
from fractions import Fraction

import numpy as np


def plain(obj):
    """Recursively turn numpy scalars/arrays, fractions, tuples and dataclasses into JSON types.

    Non-finite floats become strings so the output stays strict JSON.
    """
    if hasattr(obj, "to_json"):
        return plain(obj.to_json())
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return plain(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def dumps(obj, **kw) -> str:
    return json.dumps(plain(obj), sort_keys=True, **kw)
