"""
Finite-difference gradient checking.
"""

from __future__ import annotations

import logging
from typing import Callable, Dict, Mapping, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, model_validator

from pivad.autograd.tensor import Tensor, no_grad
from pivad.exceptions import GradCheckError

logger = logging.getLogger(__name__)

ScalarFn = Callable[[], Tensor]
ParamSet = Union[Mapping[str, Tensor], Sequence[Tensor]]


class GradReport(BaseModel):
    """Outcome of comparing analytic and central-difference gradients.

    Attributes:
        max_relative_error: Worst relative error per checked parameter.
        epsilon: Perturbation used for the central differences.
        threshold: Error bound a check must stay under to pass.
        passed: True when every parameter's worst error is below ``threshold``.
    """

    max_relative_error: Dict[str, float]
    epsilon: float
    threshold: float
    passed: bool

    @model_validator(mode="after")
    def _pass_flag_matches(self) -> "GradReport":
        worst = max(self.max_relative_error.values(), default=0.0)
        if self.passed != (worst < self.threshold):
            raise ValueError("passed flag disagrees with max_relative_error/threshold")
        return self

    @property
    def worst(self) -> float:
        return max(self.max_relative_error.values(), default=0.0)


def _named(params: ParamSet) -> Dict[str, Tensor]:
    if isinstance(params, Mapping):
        return dict(params)
    return {f"param_{i}": p for i, p in enumerate(params)}


def _evaluate(f: ScalarFn) -> float:
    with no_grad():
        value = f().item()
    if not np.isfinite(value):
        raise GradCheckError(f"function under check returned a non-finite value ({value})")
    return value


def grad_check(
    f: ScalarFn,
    params: ParamSet,
    eps: float = 1e-5,
    threshold: float = 1e-4,
    floor: float = 1e-8,
    max_coords: Optional[int] = None,
    seed: int = 0,
) -> GradReport:
    """Compare the analytic gradient of ``f`` with central differences.

    ``f`` must rebuild its graph on every call from the current values of
    ``params``. Relative error per coordinate is
    ``|a - n| / max(|a|, |n|, floor)``.

    Args:
        f: Deterministic zero-argument function returning a scalar tensor.
        params: Tensors (requiring grad) to perturb, named or positional.
        eps: Perturbation size, in (0, 1e-2].
        threshold: Pass bound on the worst relative error.
        floor: Lower bound of the relative-error denominator.
        max_coords: If set, check only this many coordinates per parameter,
            sampled without replacement from a generator seeded with ``seed``.
        seed: Seed of the coordinate sampler.

    Returns:
        GradReport: Per-parameter worst relative error and the pass flag.

    Raises:
        ValueError: If ``eps`` is outside (0, 1e-2].
        GradCheckError: If ``f`` evaluates to a non-finite value.
    """
    if not 0.0 < eps <= 1e-2:
        raise ValueError(f"eps must lie in (0, 1e-2], got {eps}")
    named = _named(params)
    for tensor in named.values():
        tensor.zero_grad()
    loss = f()
    if not np.isfinite(loss.item()):
        raise GradCheckError(f"function under check returned a non-finite value ({loss.item()})")
    loss.backward()

    rng = np.random.default_rng(seed)
    errors: Dict[str, float] = {}
    for name, tensor in named.items():
        analytic = np.zeros_like(tensor.data) if tensor.grad is None else tensor.grad.copy()
        flat = tensor.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        worst = 0.0
        for coord in coords:
            original = flat[coord]
            flat[coord] = original + eps
            upper = _evaluate(f)
            flat[coord] = original - eps
            lower = _evaluate(f)
            flat[coord] = original
            numeric = (upper - lower) / (2.0 * eps)
            exact = analytic.reshape(-1)[coord]
            error = abs(exact - numeric) / max(abs(exact), abs(numeric), floor)
            worst = max(worst, error)
        errors[name] = float(worst)
        logger.debug("grad_check %s: worst relative error %.3e over %d coords", name, worst, coords.size)

    passed = max(errors.values(), default=0.0) < threshold
    return GradReport(max_relative_error=errors, epsilon=eps, threshold=threshold, passed=passed)
