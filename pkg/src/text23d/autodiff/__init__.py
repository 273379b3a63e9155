"""Differentiable computation substrate: tensors, ops, layers, optimizers."""

from . import nn, ops, optim
from .tensor import Tensor, as_tensor, backward, default_dtype, get_default_dtype, no_grad

__all__ = [
    "Tensor",
    "as_tensor",
    "backward",
    "default_dtype",
    "get_default_dtype",
    "no_grad",
    "nn",
    "ops",
    "optim",
]
