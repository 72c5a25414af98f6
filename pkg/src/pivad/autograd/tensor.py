"""
Pivad Tensor
Reverse-mode automatic differentiation over float64 numpy arrays.

Every operation that involves a tensor with ``requires_grad`` records its
parents and a gradient rule. ``backward()`` walks the recorded graph in
reverse creation order (``node_id``), which is a valid reverse topological
order because a node is always created after its inputs.
"""

from __future__ import annotations

import itertools
import logging
import threading
from contextlib import contextmanager
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from pivad.exceptions import DomainError, GraphError, ShapeError

logger = logging.getLogger(__name__)

GradFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]
Operand = Union["Tensor", np.ndarray, float, int]

# tanh approximation of GELU: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
GELU_SQRT_2_OVER_PI = 0.7978845608028654
GELU_CUBIC = 0.044715

_node_ids = itertools.count()
_grad_mode = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_grad_mode, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording on the current thread."""
    previous = is_grad_enabled()
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = previous


def broadcast_shape(a: Tuple[int, ...], b: Tuple[int, ...]) -> Tuple[int, ...]:
    try:
        return tuple(np.broadcast_shapes(a, b))
    except ValueError:
        raise ShapeError(f"shapes {a} and {b} are not broadcast-compatible") from None


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def as_tensor(value: Operand) -> "Tensor":
    return value if isinstance(value, Tensor) else Tensor(value)


class Tensor:
    """n-dimensional float64 array with an optional gradient slot.

    Attributes:
        data: Row-major float64 values.
        grad: Gradient buffer of the same shape, or None when the tensor
            does not require grad (leaves that require grad start at zeros).
        requires_grad: Whether gradients are tracked for this tensor.
        node_id: Creation-ordered unique id, used to order the backward pass.
    """

    # make ``ndarray <op> Tensor`` dispatch to the Tensor reflected operator
    __array_priority__ = 1000

    def __init__(self, data: Any, requires_grad: bool = False, name: Optional[str] = None):
        source = data.data if isinstance(data, Tensor) else data
        array = np.array(source, dtype=np.float64)
        if any(size <= 0 for size in array.shape):
            raise ShapeError(f"tensor dimensions must be positive, got shape {array.shape}")
        self.data: np.ndarray = array
        self.requires_grad: bool = requires_grad
        self.grad: Optional[np.ndarray] = np.zeros_like(array) if requires_grad else None
        self.node_id: int = next(_node_ids)
        self.name: Optional[str] = name
        self._parents: Tuple[Tensor, ...] = ()
        self._grad_fn: Optional[GradFn] = None
        self._op: str = "leaf"
        self._released: bool = False

    @classmethod
    def _wrap(cls, array: np.ndarray) -> "Tensor":
        # no copy: op results are always fresh arrays
        out = cls.__new__(cls)
        out.data = np.asarray(array, dtype=np.float64)
        out.requires_grad = False
        out.grad = None
        out.node_id = next(_node_ids)
        out.name = None
        out._parents = ()
        out._grad_fn = None
        out._op = "const"
        out._released = False
        return out

    @staticmethod
    def _result(data: np.ndarray, parents: Sequence["Tensor"], grad_fn: GradFn, op: str) -> "Tensor":
        out = Tensor._wrap(data)
        if is_grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._grad_fn = grad_fn
            out._op = op
        return out

    # *** properties ***
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self._grad_fn is None

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self._op}{label}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data.copy())

    def requires_grad_(self, flag: bool = True) -> "Tensor":
        self.requires_grad = flag
        if flag and self.grad is None:
            self.grad = np.zeros_like(self.data)
        if not flag:
            self.grad = None
        return self

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    # *** backward pass ***
    def _collect_graph(self) -> List["Tensor"]:
        seen: Dict[int, Tensor] = {self.node_id: self}
        stack = [self]
        while stack:
            node = stack.pop()
            for parent in node._parents:
                if parent.requires_grad and parent.node_id not in seen:
                    seen[parent.node_id] = parent
                    stack.append(parent)
        return sorted(seen.values(), key=lambda n: n.node_id, reverse=True)

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``."""
        if self.data.ndim != 0:
            raise GraphError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise GraphError("loss does not depend on any tensor that requires grad")
        if self._released:
            raise GraphError("backward() already ran on this graph; run a new forward pass first")

        pending: Dict[int, np.ndarray] = {self.node_id: np.ones((), dtype=np.float64)}
        for node in self._collect_graph():
            grad = pending.pop(node.node_id, None)
            if grad is None:
                continue
            if node._grad_fn is None:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad += grad
                continue
            node.grad = grad
            for parent, parent_grad in zip(node._parents, node._grad_fn(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                parent_grad = unbroadcast(np.asarray(parent_grad, dtype=np.float64), parent.shape)
                if parent.node_id in pending:
                    pending[parent.node_id] = pending[parent.node_id] + parent_grad
                else:
                    pending[parent.node_id] = parent_grad
        self._released = True

    # *** elementwise arithmetic ***
    def _binary(self, other: Operand, op: str) -> Tuple["Tensor", "Tensor"]:
        other = as_tensor(other)
        broadcast_shape(self.shape, other.shape)
        return self, other

    def __add__(self, other: Operand) -> "Tensor":
        a, b = self._binary(other, "add")
        return Tensor._result(a.data + b.data, (a, b), lambda g: (g, g), "add")

    def __radd__(self, other: Operand) -> "Tensor":
        return as_tensor(other).__add__(self)

    def __sub__(self, other: Operand) -> "Tensor":
        a, b = self._binary(other, "sub")
        return Tensor._result(a.data - b.data, (a, b), lambda g: (g, -g), "sub")

    def __rsub__(self, other: Operand) -> "Tensor":
        return as_tensor(other).__sub__(self)

    def __mul__(self, other: Operand) -> "Tensor":
        a, b = self._binary(other, "mul")
        return Tensor._result(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data), "mul")

    def __rmul__(self, other: Operand) -> "Tensor":
        return as_tensor(other).__mul__(self)

    def __truediv__(self, other: Operand) -> "Tensor":
        a, b = self._binary(other, "div")

        def grad_fn(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
            return g / b.data, -g * a.data / (b.data * b.data)

        return Tensor._result(a.data / b.data, (a, b), grad_fn, "div")

    def __rtruediv__(self, other: Operand) -> "Tensor":
        return as_tensor(other).__truediv__(self)

    def __neg__(self) -> "Tensor":
        return Tensor._result(-self.data, (self,), lambda g: (-g,), "neg")

    def __pow__(self, exponent: float) -> "Tensor":
        if isinstance(exponent, Tensor):
            raise TypeError("only scalar exponents are supported")
        p = float(exponent)
        x = self.data
        return Tensor._result(x**p, (self,), lambda g: (g * p * x ** (p - 1.0),), "pow")

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from pivad.autograd.functional import matmul

        return matmul(self, as_tensor(other))

    # *** unary functions ***
    def exp(self) -> "Tensor":
        y = np.exp(self.data)
        return Tensor._result(y, (self,), lambda g: (g * y,), "exp")

    def log(self) -> "Tensor":
        x = self.data
        if np.any(x <= 0.0):
            raise DomainError(f"log of non-positive input (min={x.min():.6g})")
        return Tensor._result(np.log(x), (self,), lambda g: (g / x,), "log")

    def sqrt(self) -> "Tensor":
        x = self.data
        if np.any(x <= 0.0):
            raise DomainError(f"sqrt of non-positive input (min={x.min():.6g})")
        y = np.sqrt(x)
        return Tensor._result(y, (self,), lambda g: (g * 0.5 / y,), "sqrt")

    def relu(self) -> "Tensor":
        x = self.data
        return Tensor._result(np.maximum(x, 0.0), (self,), lambda g: (g * (x > 0.0),), "relu")

    def gelu(self) -> "Tensor":
        x = self.data
        inner = GELU_SQRT_2_OVER_PI * (x + GELU_CUBIC * x**3)
        t = np.tanh(inner)
        y = 0.5 * x * (1.0 + t)

        def grad_fn(g: np.ndarray) -> Tuple[np.ndarray]:
            d_inner = GELU_SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x)
            return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner),)

        return Tensor._result(y, (self,), grad_fn, "gelu")

    def sigmoid(self) -> "Tensor":
        # tanh form never overflows
        y = 0.5 * (1.0 + np.tanh(0.5 * self.data))
        return Tensor._result(y, (self,), lambda g: (g * y * (1.0 - y),), "sigmoid")

    def tanh(self) -> "Tensor":
        y = np.tanh(self.data)
        return Tensor._result(y, (self,), lambda g: (g * (1.0 - y * y),), "tanh")

    def clip(self, low: float, high: float) -> "Tensor":
        x = self.data
        inside = (x > low) & (x < high)
        return Tensor._result(np.clip(x, low, high), (self,), lambda g: (g * inside,), "clip")

    # *** reductions ***
    def sum(self, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> "Tensor":
        shape = self.shape

        def grad_fn(g: np.ndarray) -> Tuple[np.ndarray]:
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor._result(self.data.sum(axis=axis, keepdims=keepdims), (self,), grad_fn, "sum")

    def mean(self, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.size
        else:
            axes = (axis,) if isinstance(axis, int) else axis
            count = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def max(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        from pivad.autograd.functional import reduce_max

        return reduce_max(self, axis=axis, keepdims=keepdims)

    # *** shape manipulation ***
    def reshape(self, *shape: int) -> "Tensor":
        source = self.shape
        target = shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape
        return Tensor._result(self.data.reshape(target), (self,), lambda g: (g.reshape(source),), "reshape")

    def transpose(self) -> "Tensor":
        if self.ndim != 2:
            raise ShapeError(f"transpose expects a 2-D tensor, got shape {self.shape}")
        return Tensor._result(self.data.T.copy(), (self,), lambda g: (g.T,), "transpose")

    def __getitem__(self, index: Any) -> "Tensor":
        shape = self.shape

        def grad_fn(g: np.ndarray) -> Tuple[np.ndarray]:
            full = np.zeros(shape, dtype=np.float64)
            np.add.at(full, index, g)
            return (full,)

        return Tensor._result(np.array(self.data[index]), (self,), grad_fn, "getitem")
