"""Pivad autograd module."""

from .tensor import Tensor, as_tensor, is_grad_enabled, no_grad
from .functional import (
    concat,
    conv1d,
    l2_normalize_rows,
    layer_norm,
    logsumexp,
    matmul,
    reduce,
    reduce_max,
    softmax,
    topk_mean,
)
from .gradcheck import GradReport, grad_check

__all__ = [
    "Tensor",
    "as_tensor",
    "is_grad_enabled",
    "no_grad",
    "concat",
    "conv1d",
    "l2_normalize_rows",
    "layer_norm",
    "logsumexp",
    "matmul",
    "reduce",
    "reduce_max",
    "softmax",
    "topk_mean",
    "GradReport",
    "grad_check",
]
