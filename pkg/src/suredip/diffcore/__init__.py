"""Minimal reverse-mode autodiff over dense float64 tensors."""

from . import sdt1
from .optim import AdamState, adam_step
from .tensor import (
    DimensionError,
    Gradients,
    Graph,
    GraphStateError,
    NonFiniteError,
    Tensor,
    activation,
    add,
    as_tensor,
    backward,
    concat,
    conv2d,
    div,
    dot,
    exp,
    linear_map,
    matvec,
    mul,
    reduce_sum,
    relu,
    reshape,
    sub,
    sumsq,
    upsample2x,
)

__all__ = [
    "AdamState",
    "DimensionError",
    "Gradients",
    "Graph",
    "GraphStateError",
    "NonFiniteError",
    "Tensor",
    "activation",
    "adam_step",
    "add",
    "as_tensor",
    "backward",
    "concat",
    "conv2d",
    "div",
    "dot",
    "exp",
    "linear_map",
    "matvec",
    "mul",
    "reduce_sum",
    "relu",
    "reshape",
    "sdt1",
    "sub",
    "sumsq",
    "upsample2x",
]
