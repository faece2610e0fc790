"""Differentiable ops on :class:`Tensor`.

Image tensors are NCHW. Segment ops take an integer ``segments`` array that
assigns each row of the input to one of ``n_segments`` output rows; they are
how graph layers gather and scatter over edge lists.
"""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from numpy.lib.stride_tricks import sliding_window_view

from ..exceptions import ShapeError
from .tensor import Tensor, as_tensor, make_result


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    return make_result(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        "add",
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    return make_result(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        "sub",
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    return make_result(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def neg(a) -> Tensor:
    a = as_tensor(a)
    return make_result(-a.data, (a,), lambda g: (-g,), "neg")


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    return make_result(
        a.data @ b.data,
        (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
        "matmul",
    )


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    # np.maximum keeps NaN visible instead of clamping it to 0.
    return make_result(np.maximum(x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def leaky_relu(x, alpha: float = 0.2) -> Tensor:
    x = as_tensor(x)
    slope = np.where(x.data > 0, 1.0, alpha)
    return make_result(x.data * slope, (x,), lambda g: (g * slope,), "leaky_relu")


def abs_(x) -> Tensor:
    x = as_tensor(x)
    s = np.sign(x.data)
    return make_result(np.abs(x.data), (x,), lambda g: (g * s,), "abs")


def dropout(x, p: float, training: bool, seed: int) -> Tensor:
    """Inverted dropout; mask drawn from ``seed`` so reruns are bit-identical."""
    x = as_tensor(x)
    if not 0 <= p < 1:
        raise ShapeError(f"dropout: p must be in [0, 1), got {p}")
    if not training or p == 0:
        return x
    keep = np.random.default_rng(seed).random(x.shape) >= p
    scale = keep / (1.0 - p)
    return make_result(x.data * scale, (x,), lambda g: (g * scale,), "dropout")


def sum_(x, axis: Optional[int] = None) -> Tensor:
    x = as_tensor(x)

    def back(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return make_result(x.data.sum(axis=axis), (x,), back, "sum")


def mean(x, axis: Optional[int] = None) -> Tensor:
    x = as_tensor(x)
    count = x.size if axis is None else x.shape[axis]
    if count == 0:
        raise ShapeError(f"mean: empty reduction over shape {x.shape}")
    return mul(sum_(x, axis), 1.0 / count)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {x.shape} to {shape}") from None
    return make_result(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in tensors]}") from None
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]
    return make_result(out, tensors, lambda g: tuple(np.split(g, cuts, axis=axis)), "concat")


def _segment_matrix(segments: np.ndarray, n_segments: int) -> sp.csr_matrix:
    m = len(segments)
    return sp.csr_matrix((np.ones(m), (segments, np.arange(m))), shape=(n_segments, m))


def _segment_sum_array(values: np.ndarray, segments: np.ndarray, n_segments: int) -> np.ndarray:
    flat = values.reshape(values.shape[0], int(np.prod(values.shape[1:])))
    out = _segment_matrix(segments, n_segments) @ flat
    return np.asarray(out).reshape((n_segments,) + values.shape[1:])


def gather_rows(x, index) -> Tensor:
    """``x[index]`` along axis 0."""
    x = as_tensor(x)
    index = np.asarray(index, dtype=np.int64)
    if index.size and (index.min() < 0 or index.max() >= x.shape[0]):
        raise ShapeError(f"gather_rows: index out of range for {x.shape[0]} rows")
    return make_result(
        x.data[index],
        (x,),
        lambda g: (_segment_sum_array(g, index, x.shape[0]),),
        "gather_rows",
    )


def segment_sum(x, segments, n_segments: int) -> Tensor:
    """Sum rows of ``x`` that share a segment id."""
    x = as_tensor(x)
    segments = np.asarray(segments, dtype=np.int64)
    if segments.shape != (x.shape[0],):
        raise ShapeError(f"segment_sum: {segments.shape} segment ids for {x.shape[0]} rows")
    return make_result(
        _segment_sum_array(x.data, segments, n_segments),
        (x,),
        lambda g: (g[segments],),
        "segment_sum",
    )


def softmax_over_segments(x, segments, n_segments: int) -> Tensor:
    """Softmax of ``x`` within each segment, independently per trailing column."""
    x = as_tensor(x)
    segments = np.asarray(segments, dtype=np.int64)
    if segments.shape != (x.shape[0],):
        raise ShapeError(f"softmax_over_segments: {segments.shape} ids for {x.shape[0]} rows")
    peak = np.full((n_segments,) + x.shape[1:], -np.inf)
    np.maximum.at(peak, segments, x.data)
    ex = np.exp(x.data - peak[segments])
    y = ex / _segment_sum_array(ex, segments, n_segments)[segments]

    def back(g):
        dot = _segment_sum_array(g * y, segments, n_segments)[segments]
        return (y * (g - dot),)

    return make_result(y, (x,), back, "softmax_over_segments")


def conv2d(x, weight, bias=None) -> Tensor:
    """Stride-1 'same' convolution (cross-correlation), odd square kernel."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d: expected NCHW input and OCkk weight, got {x.shape}, {weight.shape}")
    n, c, h, w = x.shape
    o, c_w, k, k2 = weight.shape
    if c != c_w or k != k2 or k % 2 == 0:
        raise ShapeError(f"conv2d: input {x.shape} incompatible with weight {weight.shape}")
    p = k // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))  # n, c, h, w, k, k
    out = np.tensordot(win, weight.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (o,):
            raise ShapeError(f"conv2d: bias shape {bias.shape}, expected {(o,)}")
        out = out + bias.data[None, :, None, None]
        parents.append(bias)

    def back(g):
        gw = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))
        gp = np.pad(g, ((0, 0), (0, 0), (p, p), (p, p)))
        gwin = sliding_window_view(gp, (k, k), axis=(2, 3))  # n, o, h, w, k, k
        flipped = weight.data[:, :, ::-1, ::-1]
        gx = np.tensordot(gwin, flipped, axes=([1, 4, 5], [0, 2, 3])).transpose(0, 3, 1, 2)
        grads = [np.ascontiguousarray(gx), gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    return make_result(np.ascontiguousarray(out), parents, back, "conv2d")


def maxpool2(x) -> Tensor:
    """2x2 max pooling with stride 2; ties route the gradient to the first max."""
    x = as_tensor(x)
    if x.ndim != 4 or x.shape[2] % 2 or x.shape[3] % 2:
        raise ShapeError(f"maxpool2: needs NCHW with even H and W, got {x.shape}")
    n, c, h, w = x.shape
    blocks = x.data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def back(g):
        gb = np.zeros_like(blocks)
        np.put_along_axis(gb, arg[..., None], g[..., None], axis=-1)
        gx = gb.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
        return (gx,)

    return make_result(out, (x,), back, "maxpool2")


def conv_transpose(x, weight, bias=None) -> Tensor:
    """Transposed convolution with kernel size equal to the stride (no overlap).

    ``weight`` is (C_in, C_out, s, s); output spatial size is ``s`` times the input.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4 or weight.shape[0] != x.shape[1] or weight.shape[2] != weight.shape[3]:
        raise ShapeError(f"conv_transpose: input {x.shape} incompatible with weight {weight.shape}")
    n, c, h, w = x.shape
    _, o, s, _ = weight.shape
    t = np.tensordot(x.data, weight.data, axes=([1], [0]))  # n, h, w, o, s, s
    out = t.transpose(0, 3, 1, 4, 2, 5).reshape(n, o, h * s, w * s)
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (o,):
            raise ShapeError(f"conv_transpose: bias shape {bias.shape}, expected {(o,)}")
        out = out + bias.data[None, :, None, None]
        parents.append(bias)

    def back(g):
        gb = g.reshape(n, o, h, s, w, s)
        gx = np.tensordot(gb, weight.data, axes=([1, 3, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
        gw = np.tensordot(x.data, gb, axes=([0, 2, 3], [0, 2, 4]))  # c, o, s, s
        grads = [np.ascontiguousarray(gx), gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    return make_result(np.ascontiguousarray(out), parents, back, "conv_transpose")


def conv_transpose2(x, weight, bias=None) -> Tensor:
    """Stride-2 transposed convolution (2x2 kernel)."""
    if as_tensor(weight).shape[2:] != (2, 2):
        raise ShapeError(f"conv_transpose2: expected 2x2 kernel, got {as_tensor(weight).shape}")
    return conv_transpose(x, weight, bias)
