"""
Finite-difference suite over every differentiable op, layer and loss.

Each case builds fresh random inputs from a seeded generator and returns a
scalar function plus the tensors to perturb. Non-scalar outputs are reduced
with a fixed random weighting so every output coordinate matters.
"""

import logging
import zlib
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Tuple

import numpy as np
from pydantic import BaseModel, Field

from pivad.autograd import (
    GradReport,
    Tensor,
    concat,
    conv1d,
    grad_check,
    l2_normalize_rows,
    layer_norm,
    logsumexp,
    matmul,
    reduce_max,
    softmax,
    topk_mean,
)
from pivad.data.dataset import VideoRecord
from pivad.entities.entities import (
    BackboneConfig,
    ForwardMode,
    InductorConfig,
    LossWeights,
    ModalitySpec,
    ModelConfig,
    VideoLabel,
)
from pivad.model.pivad import PiVadModel
from pivad.nn import LinearLayer, TransformerBlock, init_params
from pivad.objectives.losses import (
    LossComputer,
    cosine_sim_matrix,
    l_align,
    l_distill,
    l_infonce_bidirectional,
    l_mil,
    l_pmg,
)

logger = logging.getLogger(__name__)

# attention key biases shift every logit of a softmax row equally: their gradient is exactly zero
ZERO_GRADIENT_SUFFIX = "attn.k.bias"
ZERO_GRADIENT_TOLERANCE = 1e-10

ScalarFn = Callable[[], Tensor]
Built = Tuple[ScalarFn, Dict[str, Tensor]]


@dataclass
class GradCase:
    name: str
    build: Callable[[np.random.Generator], Built]
    floor: float = 1e-8
    max_coords: int = 0  # 0 checks every coordinate


class GradSuiteReport(BaseModel):
    reports: Dict[str, GradReport]
    # largest |gradient| of the zero-gradient parameters, per check
    zero_gradients: Dict[str, float] = Field(default_factory=dict)
    passed: bool

    @property
    def failures(self) -> List[str]:
        return [
            name
            for name, report in self.reports.items()
            if not report.passed or self.zero_gradients.get(name, 0.0) > ZERO_GRADIENT_TOLERANCE
        ]


def _leaf(rng: np.random.Generator, *shape: int, low: float = -1.0, high: float = 1.0) -> Tensor:
    return Tensor(rng.uniform(low, high, size=shape), requires_grad=True)


def _spaced(rng: np.random.Generator, *shape: int) -> Tensor:
    # well-separated values keep max/top-k selections stable under perturbation
    values = rng.permutation(np.linspace(-1.0, 1.0, int(np.prod(shape)))).reshape(shape)
    return Tensor(values, requires_grad=True)


def _weighted(rng: np.random.Generator, shape: Tuple[int, ...]) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, size=shape)


def _unary(
    op: Callable[[Tensor], Tensor], low: float = -1.0, high: float = 1.0
) -> Callable[[np.random.Generator], Built]:
    def build(rng: np.random.Generator) -> Built:
        x = _leaf(rng, 4, 3, low=low, high=high)
        weights = _weighted(rng, (4, 3))
        return (lambda: (op(x) * weights).sum()), {"x": x}

    return build


def _relu_input(rng: np.random.Generator) -> Built:
    signs = rng.choice([-1.0, 1.0], size=(4, 3))
    x = Tensor(signs * rng.uniform(0.2, 1.0, size=(4, 3)), requires_grad=True)
    weights = _weighted(rng, (4, 3))
    return (lambda: (x.relu() * weights).sum()), {"x": x}


def _binary(op: Callable[[Tensor, Tensor], Tensor], positive_b: bool = False) -> Callable[[np.random.Generator], Built]:
    def build(rng: np.random.Generator) -> Built:
        a = _leaf(rng, 4, 3)
        b = _leaf(rng, 3, low=0.5, high=2.0) if positive_b else _leaf(rng, 3)
        weights = _weighted(rng, (4, 3))
        return (lambda: (op(a, b) * weights).sum()), {"a": a, "b": b}

    return build


def _matmul(rng: np.random.Generator) -> Built:
    a, b = _leaf(rng, 3, 4), _leaf(rng, 4, 2)
    weights = _weighted(rng, (3, 2))
    return (lambda: (matmul(a, b) * weights).sum()), {"a": a, "b": b}


def _conv1d(rng: np.random.Generator) -> Built:
    x, w, bias = _leaf(rng, 6, 3), _leaf(rng, 3, 3, 2), _leaf(rng, 2)
    weights = _weighted(rng, (6, 2))
    return (lambda: (conv1d(x, w, bias, stride=1, padding=1) * weights).sum()), {"x": x, "w": w, "bias": bias}


def _reduction(kind: str) -> Callable[[np.random.Generator], Built]:
    def build(rng: np.random.Generator) -> Built:
        x = _spaced(rng, 5, 6)
        weights = _weighted(rng, (5,))
        ops = {
            "sum": lambda: x.sum(axis=1),
            "mean": lambda: x.mean(axis=1),
            "max": lambda: reduce_max(x, axis=1),
            "topk_mean": lambda: topk_mean(x, 2, axis=1),
        }
        op = ops[kind]
        return (lambda: (op() * weights).sum()), {"x": x}

    return build


def _softmax(rng: np.random.Generator) -> Built:
    x = _leaf(rng, 4, 5, low=-3.0, high=3.0)
    weights = _weighted(rng, (4, 5))
    return (lambda: (softmax(x, axis=-1) * weights).sum()), {"x": x}


def _logsumexp(rng: np.random.Generator) -> Built:
    x = _leaf(rng, 4, 5, low=-3.0, high=3.0)
    weights = _weighted(rng, (5,))
    return (lambda: (logsumexp(x, axis=0) * weights).sum()), {"x": x}


def _layer_norm(rng: np.random.Generator) -> Built:
    x, gamma, beta = _leaf(rng, 4, 6), _leaf(rng, 6, low=0.5, high=1.5), _leaf(rng, 6)
    weights = _weighted(rng, (4, 6))
    return (lambda: (layer_norm(x, gamma, beta) * weights).sum()), {"x": x, "gamma": gamma, "beta": beta}


def _l2_normalize(rng: np.random.Generator) -> Built:
    x = _leaf(rng, 4, 5)
    weights = _weighted(rng, (4, 5))
    return (lambda: (l2_normalize_rows(x) * weights).sum()), {"x": x}


def _shape_ops(rng: np.random.Generator) -> Built:
    a, b = _leaf(rng, 4, 3), _leaf(rng, 4, 2)
    weights = _weighted(rng, (2, 5))
    return (lambda: (concat([a, b], axis=1)[1:3, :].T.reshape(5, 2).T * weights).sum()), {"a": a, "b": b}


def _linear(rng: np.random.Generator) -> Built:
    layer = LinearLayer(5, 3)
    init_params(layer, int(rng.integers(2**32)))
    x = _leaf(rng, 4, 5)
    weights = _weighted(rng, (4, 3))
    return (lambda: (layer(x) * weights).sum()), {"x": x, **layer.param_dict()}


def _transformer_block(rng: np.random.Generator) -> Built:
    block = TransformerBlock(8, heads=2, ffn_expansion=2)
    init_params(block, int(rng.integers(2**32)))
    x = _leaf(rng, 4, 8)
    weights = _weighted(rng, (4, 8))
    return (lambda: (block(x) * weights).sum()), {"x": x, **block.param_dict()}


def _pmg_loss(rng: np.random.Generator) -> Built:
    pseudo = {"P": _leaf(rng, 6, 4), "D": _leaf(rng, 6, 3)}
    targets = {"P": rng.uniform(-1, 1, (6, 4)), "D": rng.uniform(-1, 1, (6, 3))}
    return (lambda: l_pmg(pseudo, targets)), pseudo


def _cosine(rng: np.random.Generator) -> Built:
    a, b = _leaf(rng, 4, 8), _leaf(rng, 4, 8)
    weights = _weighted(rng, (4, 4))
    return (lambda: (cosine_sim_matrix(a, b) * weights).sum()), {"a": a, "b": b}


def _infonce(rng: np.random.Generator) -> Built:
    features, aligned = _leaf(rng, 4, 8), _leaf(rng, 4, 8)
    return (lambda: l_infonce_bidirectional(features, aligned, 0.5)), {"features": features, "aligned": aligned}


def _align(rng: np.random.Generator) -> Built:
    features = _leaf(rng, 5, 6)
    aligned = {name: _leaf(rng, 5, 6) for name in ("P", "D", "O")}
    return (lambda: l_align(features, aligned, 0.3)), {"features": features, **aligned}


def _distill(rng: np.random.Generator) -> Built:
    fused = _leaf(rng, 5, 6)
    teacher = rng.uniform(-1, 1, (5, 6))
    return (lambda: l_distill(fused, teacher)), {"fused": fused}


def _mil(rng: np.random.Generator) -> Built:
    logits = [_spaced(rng, 16), _spaced(rng, 16), _spaced(rng, 20)]
    labels = [VideoLabel.NORMAL, VideoLabel.ANOMALOUS, VideoLabel.ANOMALOUS]
    return (lambda: l_mil(logits, labels)), {f"logits_{i}": t for i, t in enumerate(logits)}


def tiny_videos(rng: np.random.Generator, steps: int = 4) -> List[VideoRecord]:
    videos = []
    for index, label in enumerate((VideoLabel.NORMAL, VideoLabel.ANOMALOUS)):
        snippet_labels = np.zeros(steps, dtype=np.int64)
        if label == VideoLabel.ANOMALOUS:
            snippet_labels[1:3] = 1
        videos.append(
            VideoRecord(
                video_id=f"grad_{index}",
                rgb=rng.standard_normal((steps, 8)),
                label=label,
                class_name="class_0" if label else "normal",
                snippet_labels=snippet_labels,
                modalities={"P": rng.standard_normal((steps, 4)), "D": rng.standard_normal((steps, 4))},
            )
        )
    return videos


def composite_model_config(seed: int = 0) -> ModelConfig:
    return ModelConfig(
        backbone=BackboneConfig(
            input_dim=8, hidden_dim=4, num_blocks=3, early_site=1, late_site=2, heads=2, ffn_expansion=1
        ),
        inductor=InductorConfig(
            latent_dim=2, modalities=[ModalitySpec(name="P", dim=4), ModalitySpec(name="D", dim=4)]
        ),
        seed=seed,
    )


def _composite(stage: str) -> Callable[[np.random.Generator], Built]:
    def build(rng: np.random.Generator) -> Built:
        model = PiVadModel.build(composite_model_config(int(rng.integers(2**32))))
        model.teacher_ready = True
        videos = tiny_videos(rng)
        computer = LossComputer(LossWeights(lambda1=0.5, lambda2=2.0, tau=0.5))

        def objective() -> Tensor:
            traces = [model.forward(v, ForwardMode.TRAIN) for v in videos]
            parts = computer.parts(traces, videos, with_mil=stage == "second")
            return computer.second(parts) if stage == "second" else computer.first(parts)

        return objective, model.trainable_parameters()

    return build


GRAD_CASES: List[GradCase] = [
    GradCase("add", _binary(lambda a, b: a + b)),
    GradCase("sub", _binary(lambda a, b: a - b)),
    GradCase("mul", _binary(lambda a, b: a * b)),
    GradCase("div", _binary(lambda a, b: a / b, positive_b=True)),
    GradCase("exp", _unary(lambda x: x.exp())),
    GradCase("log", _unary(lambda x: x.log(), 0.5, 2.0)),
    GradCase("sqrt", _unary(lambda x: x.sqrt(), 0.5, 2.0)),
    GradCase("relu", _relu_input),
    GradCase("gelu", _unary(lambda x: x.gelu(), -3.0, 3.0)),
    GradCase("sigmoid", _unary(lambda x: x.sigmoid(), -3.0, 3.0)),
    GradCase("tanh", _unary(lambda x: x.tanh())),
    GradCase("matmul", _matmul),
    GradCase("conv1d", _conv1d),
    GradCase("sum", _reduction("sum")),
    GradCase("mean", _reduction("mean")),
    GradCase("max", _reduction("max")),
    GradCase("topk_mean", _reduction("topk_mean")),
    GradCase("softmax", _softmax),
    GradCase("logsumexp", _logsumexp),
    GradCase("layer_norm", _layer_norm),
    GradCase("l2_normalize_rows", _l2_normalize),
    GradCase("concat_slice_reshape", _shape_ops),
    GradCase("linear", _linear),
    GradCase("transformer_block", _transformer_block),
    GradCase("l_pmg", _pmg_loss),
    GradCase("cosine_sim_matrix", _cosine),
    GradCase("l_infonce", _infonce),
    GradCase("l_align", _align),
    GradCase("l_distill", _distill),
    GradCase("l_mil", _mil),
    GradCase("l_first", _composite("first")),
    GradCase("l_second", _composite("second")),
]

COMPOSITE_CASES = ("l_first", "l_second")


def run_grad_suite(
    seeds: Iterable[int] = range(10),
    eps: float = 1e-5,
    threshold: float = 1e-4,
    composite_seeds: int = 2,
    cases: Iterable[GradCase] = GRAD_CASES,
) -> GradSuiteReport:
    """
    Run every case for every seed; composite model objectives run on the first ``composite_seeds`` seeds.

    Returns:
        GradSuiteReport: One GradReport per ``case[seed]``
    """
    seeds = list(seeds)
    reports: Dict[str, GradReport] = {}
    zero_gradients: Dict[str, float] = {}
    for case in cases:
        case_seeds = seeds[:composite_seeds] if case.name in COMPOSITE_CASES else seeds
        for seed in case_seeds:
            key = f"{case.name}[{seed}]"
            f, params = case.build(np.random.default_rng([seed, zlib.crc32(case.name.encode("utf-8"))]))
            checked = {name: t for name, t in params.items() if not name.endswith(ZERO_GRADIENT_SUFFIX)}
            zeroed = [t for name, t in params.items() if name.endswith(ZERO_GRADIENT_SUFFIX)]
            for tensor in zeroed:
                tensor.zero_grad()
            report = grad_check(
                f,
                checked,
                eps=eps,
                threshold=threshold,
                floor=case.floor,
                max_coords=case.max_coords or None,
                seed=seed,
            )
            reports[key] = report
            if zeroed:
                zero_gradients[key] = max(float(np.abs(t.grad).max()) if t.grad is not None else 0.0 for t in zeroed)
            if not report.passed or zero_gradients.get(key, 0.0) > ZERO_GRADIENT_TOLERANCE:
                logger.warning("gradient check failed: %s seed %d (worst %.3e)", case.name, seed, report.worst)
    passed = all(
        report.passed and zero_gradients.get(key, 0.0) <= ZERO_GRADIENT_TOLERANCE for key, report in reports.items()
    )
    logger.info("gradient suite: %d checks, %s", len(reports), "all passed" if passed else "FAILURES")
    return GradSuiteReport(reports=reports, zero_gradients=zero_gradients, passed=passed)
