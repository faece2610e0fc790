"""Minimal reverse-mode autodiff over dense float64 arrays."""
from .checkpoint import params_from_dict, params_to_dict
from .ops import (
    abs_,
    add,
    concat,
    conv2d,
    conv_transpose,
    conv_transpose2,
    dropout,
    gather_rows,
    leaky_relu,
    matmul,
    maxpool2,
    mean,
    mul,
    neg,
    relu,
    reshape,
    segment_sum,
    softmax_over_segments,
    sub,
    sum_,
)
from .init import glorot, zeros
from .optim import Adam, AdamState, adam_step
from .tensor import Node, Tape, Tensor, as_tensor, backward

__all__ = [
    "Adam", "AdamState", "Node", "Tape", "Tensor", "abs_", "adam_step", "add", "as_tensor",
    "backward", "concat", "conv2d", "conv_transpose", "conv_transpose2", "dropout", "gather_rows", "glorot",
    "leaky_relu", "matmul", "maxpool2", "mean", "mul", "neg", "params_from_dict", "params_to_dict",
    "relu", "reshape", "segment_sum", "softmax_over_segments", "sub", "sum_", "zeros",
]
