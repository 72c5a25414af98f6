"""
Parameterized layers built on the autograd tensor.

Parameters are registered with an init rule; ``init_params`` fills them from
a seed. Each parameter draws from its own generator keyed by (seed, full
parameter name), so the values do not depend on construction order.
"""

from __future__ import annotations

import logging
import math
import zlib
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from pivad.autograd import Tensor, concat, conv1d, layer_norm, matmul, softmax
from pivad.exceptions import ConfigError, ShapeError

logger = logging.getLogger(__name__)

INIT_KINDS = ("xavier", "zeros", "ones")


class Module:
    """Container of named parameters and child modules."""

    def __init__(self) -> None:
        self._params: Dict[str, Tensor] = {}
        self._init_rules: Dict[str, Tuple[str, Tuple[int, int]]] = {}
        self._children: Dict[str, Module] = {}

    def add_param(
        self, name: str, shape: Tuple[int, ...], init: str = "xavier", fan: Optional[Tuple[int, int]] = None
    ) -> Tensor:
        if any(size <= 0 for size in shape):
            raise ConfigError(f"parameter '{name}' needs positive dimensions, got {shape}")
        if init not in INIT_KINDS:
            raise ConfigError(f"unknown init '{init}' for parameter '{name}'")
        tensor = Tensor(np.zeros(shape), requires_grad=True, name=name)
        self._params[name] = tensor
        self._init_rules[name] = (init, fan or (shape[0], shape[-1]))
        return tensor

    def add_child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, tensor in self._params.items():
            yield prefix + name, tensor
        for child_name, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{child_name}.")

    def named_init_rules(self, prefix: str = "") -> Iterator[Tuple[str, Tensor, str, Tuple[int, int]]]:
        for name, tensor in self._params.items():
            kind, fan = self._init_rules[name]
            yield prefix + name, tensor, kind, fan
        for child_name, child in self._children.items():
            yield from child.named_init_rules(f"{prefix}{child_name}.")

    def param_dict(self, prefix: str = "") -> Dict[str, Tensor]:
        return dict(self.named_parameters(prefix))

    def parameters(self) -> List[Tensor]:
        return [tensor for _, tensor in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(tensor.size for tensor in self.parameters())

    def zero_grad(self) -> None:
        for tensor in self.parameters():
            tensor.zero_grad()

    def set_trainable(self, flag: bool) -> None:
        for tensor in self.parameters():
            tensor.requires_grad_(flag)

    def zero_(self) -> None:
        for tensor in self.parameters():
            tensor.data[...] = 0.0


def _generator(seed: int, name: str) -> np.random.Generator:
    sequence = np.random.SeedSequence([seed % 2**64, zlib.crc32(name.encode("utf-8"))])
    return np.random.default_rng(sequence)


def init_params(module: Module, seed: int, prefix: str = "") -> Dict[str, Tensor]:
    """Initialise every parameter of ``module`` in place.

    Xavier-uniform weights (bound ``sqrt(6 / (fan_in + fan_out))``), zero biases,
    layer-norm gain 1 and shift 0. Same seed, same values.

    Returns:
        Dict[str, Tensor]: The initialised parameters by full name.
    """
    for name, tensor, kind, (fan_in, fan_out) in module.named_init_rules(prefix):
        if kind == "zeros":
            tensor.data[...] = 0.0
        elif kind == "ones":
            tensor.data[...] = 1.0
        else:
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            tensor.data[...] = _generator(seed, name).uniform(-bound, bound, size=tensor.shape)
        tensor.zero_grad()
    return module.param_dict(prefix)


class LinearLayer(Module):
    """``y = x W + b`` with ``W[in x out]``."""

    def __init__(self, in_dim: int, out_dim: int):
        super().__init__()
        self.in_dim, self.out_dim = in_dim, out_dim
        self.weight = self.add_param("weight", (in_dim, out_dim), "xavier", fan=(in_dim, out_dim))
        self.bias = self.add_param("bias", (out_dim,), "zeros")

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(f"linear layer expects [T x {self.in_dim}], got {x.shape}")
        return matmul(x, self.weight) + self.bias


class Conv1dLayer(Module):
    """Temporal convolution ``C_in -> C_out`` with same-length padding by default."""

    def __init__(self, in_dim: int, out_dim: int, kernel_size: int = 3, stride: int = 1, padding: Optional[int] = None):
        super().__init__()
        self.in_dim, self.out_dim = in_dim, out_dim
        self.stride = stride
        self.padding = kernel_size // 2 if padding is None else padding
        self.weight = self.add_param(
            "weight", (kernel_size, in_dim, out_dim), "xavier", fan=(kernel_size * in_dim, kernel_size * out_dim)
        )
        self.bias = self.add_param("bias", (out_dim,), "zeros")

    def __call__(self, x: Tensor) -> Tensor:
        return conv1d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.gamma = self.add_param("gamma", (dim,), "ones")
        self.beta = self.add_param("beta", (dim,), "zeros")

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta, self.eps)


class MultiHeadSelfAttention(Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        if dim % heads:
            raise ConfigError(f"model dim {dim} is not divisible by {heads} heads")
        self.dim, self.heads = dim, heads
        self.head_dim = dim // heads
        self.q = self.add_child("q", LinearLayer(dim, dim))
        self.k = self.add_child("k", LinearLayer(dim, dim))
        self.v = self.add_child("v", LinearLayer(dim, dim))
        self.o = self.add_child("o", LinearLayer(dim, dim))

    def __call__(self, x: Tensor) -> Tensor:
        queries, keys, values = self.q(x), self.k(x), self.v(x)
        scale = 1.0 / math.sqrt(self.head_dim)
        outputs = []
        for head in range(self.heads):
            cols = slice(head * self.head_dim, (head + 1) * self.head_dim)
            scores = matmul(queries[:, cols], keys[:, cols].T) * scale
            outputs.append(matmul(softmax(scores, axis=-1), values[:, cols]))
        return self.o(concat(outputs, axis=-1))


class FeedForward(Module):
    def __init__(self, dim: int, expansion: int = 2):
        super().__init__()
        self.fc1 = self.add_child("fc1", LinearLayer(dim, dim * expansion))
        self.fc2 = self.add_child("fc2", LinearLayer(dim * expansion, dim))

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(self.fc1(x).gelu())


class TransformerBlock(Module):
    """Pre-norm block: ``x + MHSA(LN(x))`` then ``+ FFN(LN(.))``.

    No positional encoding is applied here; snippet order enters only through
    the features themselves.
    """

    def __init__(self, dim: int, heads: int = 4, ffn_expansion: int = 2):
        super().__init__()
        self.dim = dim
        self.norm1 = self.add_child("norm1", LayerNorm(dim))
        self.attn = self.add_child("attn", MultiHeadSelfAttention(dim, heads))
        self.norm2 = self.add_child("norm2", LayerNorm(dim))
        self.ffn = self.add_child("ffn", FeedForward(dim, ffn_expansion))

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise ShapeError(f"transformer block expects [T x {self.dim}], got {x.shape}")
        hidden = x + self.attn(self.norm1(x))
        return hidden + self.ffn(self.norm2(hidden))

    def zero_residual_branches(self) -> None:
        """Zero the attention and FFN output projections, making the block the identity."""
        for layer in (self.attn.o, self.ffn.fc2):
            layer.weight.data[...] = 0.0
            layer.bias.data[...] = 0.0


def sinusoidal_encoding(steps: int, dim: int) -> np.ndarray:
    """Fixed sine/cosine position table of shape ``steps x dim``."""
    positions = np.arange(steps, dtype=np.float64)[:, None]
    rates = np.exp(-math.log(10000.0) * (np.arange(0, dim, 2, dtype=np.float64) / dim))
    table = np.zeros((steps, dim), dtype=np.float64)
    table[:, 0::2] = np.sin(positions * rates)
    table[:, 1::2] = np.cos(positions * rates[: dim // 2])
    return table
