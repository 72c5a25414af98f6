"""
Composite differentiable operations on top of :class:`Tensor`.

All ops take and return tensors; gradient rules are written against the
numpy payloads directly so each op is a single graph node.
"""

from __future__ import annotations

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from pivad.autograd.tensor import Tensor, as_tensor
from pivad.exceptions import DomainError, ShapeError

logger = logging.getLogger(__name__)

REDUCTION_KINDS = ("sum", "mean", "max", "topk_mean")


def _normalize_axis(axis: int, ndim: int) -> int:
    if not -ndim <= axis < ndim:
        raise ShapeError(f"axis {axis} is invalid for a {ndim}-D tensor")
    return axis % ndim


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of ``a[m x k]`` and ``b[k x n]``."""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    x, y = a.data, b.data

    def grad_fn(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return g @ y.T, x.T @ g

    return Tensor._result(x @ y, (a, b), grad_fn, "matmul")


def conv1d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Temporal convolution over the snippet axis.

    Args:
        x: Input of shape ``T x C_in``.
        weight: Kernel of shape ``K x C_in x C_out``.
        bias: Bias of shape ``C_out``.
        stride: Step between windows (>= 1).
        padding: Zero rows added on both ends of the time axis.

    Returns:
        Tensor of shape ``T' x C_out`` with ``T' = (T + 2 padding - K) // stride + 1``.
    """
    if x.ndim != 2 or weight.ndim != 3 or bias.ndim != 1:
        raise ShapeError(
            f"conv1d expects x[T x C_in], w[K x C_in x C_out], b[C_out]; "
            f"got {x.shape}, {weight.shape}, {bias.shape}"
        )
    steps, c_in = x.shape
    kernel, w_in, c_out = weight.shape
    if w_in != c_in or bias.shape[0] != c_out:
        raise ShapeError(f"conv1d channel mismatch: x {x.shape}, w {weight.shape}, b {bias.shape}")
    if stride < 1 or padding < 0:
        raise ShapeError(f"conv1d needs stride >= 1 and padding >= 0, got {stride}, {padding}")
    padded_len = steps + 2 * padding
    if kernel > padded_len:
        raise ShapeError(f"conv1d kernel {kernel} is larger than the padded input length {padded_len}")

    out_len = (padded_len - kernel) // stride + 1
    padded = np.zeros((padded_len, c_in), dtype=np.float64)
    padded[padding : padding + steps] = x.data
    index = np.arange(out_len)[:, None] * stride + np.arange(kernel)[None, :]
    cols = padded[index]  # T' x K x C_in
    w = weight.data
    out = np.tensordot(cols, w, axes=([1, 2], [0, 1])) + bias.data

    def grad_fn(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        grad_w = np.tensordot(cols, g, axes=([0], [0]))
        grad_cols = np.tensordot(g, w, axes=([1], [2]))
        grad_padded = np.zeros_like(padded)
        np.add.at(grad_padded, index, grad_cols)
        return grad_padded[padding : padding + steps], grad_w, g.sum(axis=0)

    return Tensor._result(out, (x, weight, bias), grad_fn, "conv1d")


def reduce_max(x: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    """Maximum along ``axis``; ties resolve to the lowest index."""
    shape = x.shape
    if axis is None:
        flat = x.data.reshape(-1)
        position = int(np.argmax(flat))
        value = np.array(flat[position])
        if keepdims:
            value = value.reshape((1,) * x.ndim)

        def grad_all(g: np.ndarray) -> Tuple[np.ndarray]:
            full = np.zeros(flat.shape, dtype=np.float64)
            full[position] = float(np.sum(g))
            return (full.reshape(shape),)

        return Tensor._result(value, (x,), grad_all, "max")

    axis = _normalize_axis(axis, x.ndim)
    index = np.expand_dims(np.argmax(x.data, axis=axis), axis)
    picked = np.take_along_axis(x.data, index, axis)
    value = picked if keepdims else np.squeeze(picked, axis=axis)

    def grad_fn(g: np.ndarray) -> Tuple[np.ndarray]:
        g = g if keepdims else np.expand_dims(g, axis)
        full = np.zeros(shape, dtype=np.float64)
        np.put_along_axis(full, index, g, axis)
        return (full,)

    return Tensor._result(value, (x,), grad_fn, "max")


def topk_indices(values: np.ndarray, k: int, axis: int = -1) -> np.ndarray:
    """Indices of the ``k`` largest entries along ``axis``, lowest index first on ties."""
    order = np.argsort(-values, axis=axis, kind="stable")
    return np.take(order, np.arange(k), axis=axis)


def topk_mean(x: Tensor, k: int, axis: int = -1) -> Tensor:
    """Mean of the ``k`` largest entries along ``axis``.

    The gradient reaches only the selected entries (1/k each).
    """
    axis = _normalize_axis(axis, x.ndim)
    length = x.shape[axis]
    if not 1 <= k <= length:
        raise ShapeError(f"topk_mean: k={k} must lie in [1, {length}]")
    shape = x.shape
    index = topk_indices(x.data, k, axis=axis)
    picked = np.take_along_axis(x.data, index, axis)

    def grad_fn(g: np.ndarray) -> Tuple[np.ndarray]:
        share = np.broadcast_to(np.expand_dims(g, axis) / k, index.shape)
        full = np.zeros(shape, dtype=np.float64)
        np.put_along_axis(full, index, share, axis)
        return (full,)

    return Tensor._result(picked.mean(axis=axis), (x,), grad_fn, "topk_mean")


def reduce(x: Tensor, axis: Optional[int] = None, kind: str = "sum", k: Optional[int] = None) -> Tensor:
    """Dispatch to one of the supported reductions (sum, mean, max, topk_mean)."""
    if kind == "sum":
        return x.sum(axis=axis)
    if kind == "mean":
        return x.mean(axis=axis)
    if kind == "max":
        return reduce_max(x, axis=axis)
    if kind == "topk_mean":
        if k is None:
            raise ShapeError("topk_mean needs k")
        return topk_mean(x, k, axis=-1 if axis is None else axis)
    raise ValueError(f"unknown reduction '{kind}', expected one of {REDUCTION_KINDS}")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    axis = _normalize_axis(axis, x.ndim)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def grad_fn(g: np.ndarray) -> Tuple[np.ndarray]:
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return Tensor._result(y, (x,), grad_fn, "softmax")


def logsumexp(x: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:
    axis = _normalize_axis(axis, x.ndim)
    peak = x.data.max(axis=axis, keepdims=True)
    e = np.exp(x.data - peak)
    total = e.sum(axis=axis, keepdims=True)
    value = np.log(total) + peak
    weights = e / total

    def grad_fn(g: np.ndarray) -> Tuple[np.ndarray]:
        g = g if keepdims else np.expand_dims(g, axis)
        return (weights * g,)

    return Tensor._result(value if keepdims else np.squeeze(value, axis=axis), (x,), grad_fn, "logsumexp")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise the last axis to zero mean / unit variance, then scale and shift."""
    if eps <= 0.0:
        raise DomainError(f"layer_norm eps must be positive, got {eps}")
    width = x.shape[-1]
    if gamma.shape != (width,) or beta.shape != (width,):
        raise ShapeError(f"layer_norm affine shapes {gamma.shape}, {beta.shape} do not match width {width}")
    centered = x.data - x.data.mean(axis=-1, keepdims=True)
    variance = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(variance + eps)
    normed = centered * inv_std
    scale = gamma.data

    def grad_fn(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        flat_g = g.reshape(-1, width)
        grad_gamma = (flat_g * normed.reshape(-1, width)).sum(axis=0)
        grad_beta = flat_g.sum(axis=0)
        d_normed = g * scale
        grad_x = inv_std * (
            d_normed
            - d_normed.mean(axis=-1, keepdims=True)
            - normed * (d_normed * normed).mean(axis=-1, keepdims=True)
        )
        return grad_x, grad_gamma, grad_beta

    return Tensor._result(normed * scale + beta.data, (x, gamma, beta), grad_fn, "layer_norm")


def l2_normalize_rows(x: Tensor, eps: float = 1e-12) -> Tensor:
    """Divide each row by its L2 norm, clamping the norm at ``eps``.

    Rows whose norm falls below ``eps`` are reported on the module logger.
    """
    if x.ndim != 2:
        raise ShapeError(f"l2_normalize_rows expects a 2-D tensor, got shape {x.shape}")
    norms = np.sqrt((x.data * x.data).sum(axis=1, keepdims=True))
    active = norms > eps
    if not np.all(active):
        logger.warning("cosine similarity: %d zero-norm row(s) clamped at %.0e", int((~active).sum()), eps)
    clamped = np.where(active, norms, eps)
    y = x.data / clamped

    def grad_fn(g: np.ndarray) -> Tuple[np.ndarray]:
        radial = (g * y).sum(axis=1, keepdims=True) * active
        return ((g - y * radial) / clamped,)

    return Tensor._result(y, (x,), grad_fn, "l2_normalize")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not tensors:
        raise ShapeError("concat needs at least one tensor")
    parts: List[Tensor] = [as_tensor(t) for t in tensors]
    axis = _normalize_axis(axis, parts[0].ndim)
    try:
        data = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError:
        raise ShapeError(f"concat shapes are incompatible: {[p.shape for p in parts]}") from None
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def grad_fn(g: np.ndarray) -> List[np.ndarray]:
        return np.split(g, bounds, axis=axis)

    return Tensor._result(data, parts, grad_fn, "concat")
