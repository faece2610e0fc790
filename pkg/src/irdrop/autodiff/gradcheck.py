"""Central finite-difference gradients, the reference for every backward rule."""
from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .tensor import Tensor


def numerical_grads(loss_fn: Callable[[], Tensor], params: Mapping[str, Tensor], h: float = 1e-5) -> dict:
    """Perturb each parameter entry by +-h and difference ``loss_fn()``."""
    out = {}
    for name, p in params.items():
        g = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn().item()
            flat[i] = orig - h
            down = loss_fn().item()
            flat[i] = orig
            gf[i] = (up - down) / (2 * h)
        out[name] = g
    return out


def analytic_grads(loss_fn: Callable[[], Tensor], params: Mapping[str, Tensor]) -> dict:
    for p in params.values():
        p.grad = None
    loss_fn().backward()
    return {k: (np.zeros_like(p.data) if p.grad is None else p.grad.copy()) for k, p in params.items()}


def max_relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> float:
    """max |a - b| / max(|a|, |b|, floor), the tolerance measure used in tests."""
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def check_gradients(loss_fn, params, h: float = 1e-5, rtol: float = 1e-4, floor: float = 1e-6):
    """Return (ok, worst relative error, per-parameter errors)."""
    ana = analytic_grads(loss_fn, params)
    num = numerical_grads(loss_fn, params, h)
    errs = {k: max_relative_error(ana[k], num[k], floor) for k in params}
    worst = max(errs.values()) if errs else 0.0
    return worst <= rtol, worst, errs
