"""Seeded parameter initialisers."""
from __future__ import annotations

import numpy as np

from .tensor import Tensor


def glorot(rng: np.random.Generator, shape, name=None) -> Tensor:
    fan_in, fan_out = shape[0], shape[-1]
    if len(shape) == 4:
        receptive = shape[2] * shape[3]
        fan_in, fan_out = shape[1] * receptive, shape[0] * receptive
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=shape), requires_grad=True, name=name)


def zeros(shape, name=None) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True, name=name)
