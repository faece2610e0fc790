"""JSON checkpoints of named tensors.

Layout (version 1)::

    {"format": "irdrop.params", "version": 1,
     "tensors": [{"name": str, "shape": [int, ...], "data": [float, ...]}, ...]}

``data`` is the row-major buffer. Python's float repr round-trips exactly, so
a load after save is bit-identical.
"""
from __future__ import annotations

from typing import Dict, Mapping

import numpy as np

from ..exceptions import ParseError
from .tensor import Tensor

FORMAT = "irdrop.params"
VERSION = 1


def params_to_dict(params: Mapping[str, Tensor]) -> dict:
    return {
        "format": FORMAT,
        "version": VERSION,
        "tensors": [
            {"name": name, "shape": list(t.shape), "data": t.data.reshape(-1).tolist()}
            for name, t in params.items()
        ],
    }


def params_from_dict(d: dict, requires_grad: bool = True) -> Dict[str, Tensor]:
    if d.get("format") != FORMAT:
        raise ParseError(f"not a parameter checkpoint (format={d.get('format')!r})")
    if d.get("version") != VERSION:
        raise ParseError(f"unsupported checkpoint version {d.get('version')!r}")
    out = {}
    for entry in d["tensors"]:
        data = np.array(entry["data"], dtype=np.float64)
        shape = tuple(entry["shape"])
        if data.size != int(np.prod(shape, dtype=np.int64)):
            raise ParseError(f"tensor {entry['name']!r}: {data.size} values for shape {shape}")
        out[entry["name"]] = Tensor(data.reshape(shape), requires_grad=requires_grad, name=entry["name"])
    return out
