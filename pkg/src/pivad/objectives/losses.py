"""
Training objectives.

Every function returns a scalar Tensor so it can sit in one graph with the
model. Targets (modality ground truth, teacher features) enter as constants.
"""

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Mapping, Optional, Sequence, Union

import numpy as np

from pivad.autograd import Tensor, l2_normalize_rows, logsumexp, matmul, no_grad, topk_mean
from pivad.entities.entities import LossBreakdown, LossWeights, ObjectiveComponents, TopKRule, VideoLabel
from pivad.exceptions import LossError, ShapeError

if TYPE_CHECKING:
    from pivad.data.dataset import VideoRecord
    from pivad.model.pivad import ForwardTrace

logger = logging.getLogger(__name__)

BCE_CLAMP = 1e-7

Term = Union[Tensor, float]


def _constant(value: Union[Tensor, np.ndarray]) -> Tensor:
    return value.detach() if isinstance(value, Tensor) else Tensor(value)


def l_pmg(pseudo: Mapping[str, Tensor], targets: Mapping[str, Union[Tensor, np.ndarray]]) -> Tensor:
    """Sum over modalities of the mean squared reconstruction error of ``ê_j`` against ``e_j``."""
    only_pseudo = sorted(set(pseudo) - set(targets))
    only_targets = sorted(set(targets) - set(pseudo))
    if only_pseudo or only_targets:
        raise LossError(
            f"modality sets differ: generated-only {only_pseudo}, target-only {only_targets}"
        )
    if not pseudo:
        raise LossError("l_pmg needs at least one modality")
    total: Optional[Tensor] = None
    for name, generated in pseudo.items():
        target = _constant(targets[name])
        if generated.shape != target.shape:
            raise ShapeError(f"modality '{name}': generated {generated.shape} vs target {target.shape}")
        diff = generated - target
        term = (diff * diff).mean()
        total = term if total is None else total + term
    return total


def cosine_sim_matrix(a: Tensor, b: Tensor) -> Tensor:
    """Entry ``(i, k)`` is the cosine similarity of row ``a_i`` and row ``b_k``."""
    if a.ndim != 2 or a.shape != b.shape:
        raise ShapeError(f"cosine similarity needs equal T x H inputs, got {a.shape} and {b.shape}")
    return matmul(l2_normalize_rows(a), l2_normalize_rows(b).T)


def l_infonce_bidirectional(features: Tensor, aligned: Tensor, tau: float) -> Tensor:
    """
    Snippet-level InfoNCE in both directions, averaged.

    Positives are same-index snippets. The positive stays in the denominator,
    so each direction is ``mean_i(logsumexp_k(s_ik) - s_ii)`` with ``s = cos / tau``.
    """
    if tau <= 0.0:
        raise LossError(f"temperature must be positive, got {tau}")
    steps = features.shape[0]
    if steps < 2:
        raise LossError("InfoNCE needs T >= 2 snippets (no negatives otherwise)")
    logits = cosine_sim_matrix(features, aligned) * (1.0 / tau)
    positives = (logits * np.eye(steps)).sum(axis=1)
    rows = (logsumexp(logits, axis=1) - positives).mean()
    cols = (logsumexp(logits, axis=0) - positives).mean()
    return (rows + cols) * 0.5


def l_align(features: Tensor, aligned: Mapping[str, Tensor], tau: float) -> Tensor:
    if not aligned:
        raise LossError("l_align needs at least one modality")
    total: Optional[Tensor] = None
    for stream in aligned.values():
        term = l_infonce_bidirectional(features, stream, tau)
        total = term if total is None else total + term
    return total


def l_distill(fused: Tensor, teacher: Union[Tensor, np.ndarray]) -> Tensor:
    """Mean squared distance to the teacher features; no gradient reaches the teacher."""
    target = _constant(teacher)
    if fused.shape != target.shape:
        raise ShapeError(f"distillation shapes differ: student {fused.shape} vs teacher {target.shape}")
    diff = fused - target
    return (diff * diff).mean()


def l_mil(logits: Sequence[Tensor], labels: Sequence[int], k_rule: TopKRule = TopKRule()) -> Tensor:
    """
    Top-k MIL loss averaged over a batch.

    Each video's score is the mean of its ``k`` highest snippet scores, scored
    with binary cross-entropy against the video label.

    Raises:
        LossError: Empty batch, or a batch missing either class
    """
    if not logits:
        raise LossError("MIL batch is empty")
    if len(logits) != len(labels):
        raise LossError(f"{len(logits)} logit series for {len(labels)} labels")
    if VideoLabel.NORMAL not in labels:
        raise LossError("MIL batch has no normal video")
    if VideoLabel.ANOMALOUS not in labels:
        raise LossError("MIL batch has no anomalous video")
    total: Optional[Tensor] = None
    for series, label in zip(logits, labels):
        if series.ndim != 1:
            raise ShapeError(f"MIL expects one logit per snippet, got shape {series.shape}")
        score = topk_mean(series.sigmoid(), k_rule.k(series.shape[0]), axis=0).clip(BCE_CLAMP, 1.0 - BCE_CLAMP)
        term = -score.log() if label == VideoLabel.ANOMALOUS else -(1.0 - score).log()
        total = term if total is None else total + term
    return total * (1.0 / len(logits))


@dataclass
class LossParts:
    l_mil: Term
    l_align: Term
    l_distill: Term
    l_pmg: Term


def _weighted(term: Term, weight: float) -> Term:
    return 0.0 if weight == 0.0 else term * weight


def l_first(parts: LossParts, components: ObjectiveComponents = ObjectiveComponents()) -> Term:
    """Warm-up objective ``l_pmg + l_align + l_distill``; MIL does not take part."""
    return (
        _weighted(parts.l_pmg, float(components.pmg))
        + _weighted(parts.l_align, float(components.align))
        + _weighted(parts.l_distill, float(components.distill))
    )


def l_second(
    parts: LossParts,
    lambda1: float,
    lambda2: float,
    components: ObjectiveComponents = ObjectiveComponents(),
) -> Term:
    """Main objective ``l_mil + lambda1 l_align + lambda2 l_distill + l_pmg`` (PMG unweighted)."""
    return (
        parts.l_mil
        + _weighted(parts.l_align, lambda1 * float(components.align))
        + _weighted(parts.l_distill, lambda2 * float(components.distill))
        + _weighted(parts.l_pmg, float(components.pmg))
    )


def _value(term: Term) -> float:
    return term.item() if isinstance(term, Tensor) else float(term)


def breakdown(parts: LossParts, total: Term) -> LossBreakdown:
    return LossBreakdown(
        l_mil=_value(parts.l_mil),
        l_align=_value(parts.l_align),
        l_distill=_value(parts.l_distill),
        l_pmg=_value(parts.l_pmg),
        total=_value(total),
    )


class LossComputer:
    """
    Batch objective over model forward traces.

    Per video the auxiliary terms are summed over the active inductor sites;
    the batch value is the mean over videos.
    """

    def __init__(self, weights: LossWeights, components: ObjectiveComponents = ObjectiveComponents()):
        self.weights = weights
        self.components = components

    def parts(self, traces: Sequence["ForwardTrace"], videos: Sequence["VideoRecord"], with_mil: bool) -> LossParts:
        """
        Args:
            traces: Train-mode forward traces, one per video
            videos: The videos, carrying modality targets for ``l_pmg``
            with_mil: When False, ``l_mil`` is computed detached (logged only)
        """
        pmg_terms, align_terms, distill_terms = [], [], []
        for trace, video in zip(traces, videos):
            for site, site_trace in trace.sites.items():
                missing = [name for name in site_trace.pseudo if name not in video.modalities]
                if missing:
                    raise LossError(f"video '{video.video_id}': modality targets missing for {missing}")
                pmg_terms.append(l_pmg(site_trace.pseudo, {n: video.modalities[n] for n in site_trace.pseudo}))
                align_terms.append(l_align(site_trace.features, site_trace.aligned, self.weights.tau))
                distill_terms.append(l_distill(site_trace.fused, trace.teacher_features[site]))

        labels = [video.label for video in videos]
        if with_mil:
            mil: Term = l_mil([t.logits for t in traces], labels, self.weights.k_rule)
        else:
            with no_grad():
                mil = l_mil([t.logits.detach() for t in traces], labels, self.weights.k_rule).item()

        count = float(len(traces))
        return LossParts(
            l_mil=mil,
            l_align=_batch_mean(align_terms, count),
            l_distill=_batch_mean(distill_terms, count),
            l_pmg=_batch_mean(pmg_terms, count),
        )

    def first(self, parts: LossParts) -> Term:
        return l_first(parts, self.components)

    def second(self, parts: LossParts) -> Term:
        return l_second(parts, self.weights.lambda1, self.weights.lambda2, self.components)


def _batch_mean(terms: Sequence[Tensor], count: float) -> Term:
    if not terms:
        return 0.0
    total = terms[0]
    for term in terms[1:]:
        total = total + term
    return total * (1.0 / count)

