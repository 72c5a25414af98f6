import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

from pivad.autograd import Tensor
from pivad.entities.entities import AdamSettings
from pivad.exceptions import TrainingError

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """
    One bias-corrected Adam update, applied to ``params`` in place.

    All gradients are checked before any parameter moves.

    Raises:
        TrainingError: If a gradient is non-finite, naming the parameter
    """
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise TrainingError(f"non-finite gradient for parameter '{name}'")
    state.step += 1
    correction1 = 1.0 - beta1**state.step
    correction2 = 1.0 - beta2**state.step
    for name, value in params.items():
        grad = grads[name]
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(value)
            v = state.v[name] = np.zeros_like(value)
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        value -= lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
    return state


class Adam:
    """Adam over a named set of tensors, reading each tensor's ``grad``."""

    def __init__(self, params: Mapping[str, Tensor], lr: float, settings: AdamSettings = AdamSettings()):
        self.params = dict(params)
        self.lr = lr
        self.settings = settings
        self.state = AdamState()

    def zero_grad(self) -> None:
        for tensor in self.params.values():
            tensor.zero_grad()

    def step(self) -> None:
        grads = {
            name: tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
            for name, tensor in self.params.items()
        }
        adam_step(
            {name: tensor.data for name, tensor in self.params.items()},
            grads,
            self.state,
            self.lr,
            self.settings.beta1,
            self.settings.beta2,
            self.settings.eps,
        )
