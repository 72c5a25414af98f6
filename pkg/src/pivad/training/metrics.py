"""
Frame-level anomaly metrics.

Snippet scores are repeated ``frame_factor`` times (16 frames per snippet)
and scored against the equally expanded snippet labels. AUC uses the rank
statistic with mid-rank ties; AP is the precision-weighted recall sum.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Sequence, Union

import numpy as np
from sklearn.metrics import average_precision_score, roc_auc_score

from pivad.data.dataset import VideoRecord
from pivad.entities.entities import FRAMES_PER_SNIPPET, EvalReport, ScoreSeries
from pivad.exceptions import MetricError

logger = logging.getLogger(__name__)

ScoreFn = Callable[[VideoRecord], np.ndarray]


def _check_binary(labels: np.ndarray, what: str) -> None:
    if labels.size == 0:
        raise MetricError(f"{what}: no frames to score")
    positives = int(labels.sum())
    if positives == 0 or positives == labels.size:
        raise MetricError(f"{what}: labels contain a single class")


def roc_auc(labels: np.ndarray, scores: np.ndarray, what: str = "AUC") -> float:
    labels = np.asarray(labels)
    _check_binary(labels, what)
    return float(roc_auc_score(labels, np.asarray(scores, dtype=np.float64)))


def average_precision(labels: np.ndarray, scores: np.ndarray, what: str = "AP") -> float:
    labels = np.asarray(labels)
    _check_binary(labels, what)
    return float(average_precision_score(labels, np.asarray(scores, dtype=np.float64)))


def _score_fn(scorer: Union[ScoreFn, object]) -> ScoreFn:
    method = getattr(scorer, "score_video", None)
    if callable(method):
        return method
    if callable(scorer):
        return scorer
    raise TypeError("scorer must be callable or expose score_video(video)")


def score_videos(scorer: Union[ScoreFn, object], dataset: Sequence[VideoRecord], workers: int = 1) -> List[ScoreSeries]:
    """Score every video, merged in sorted ``video_id`` order whatever the worker count."""
    score = _score_fn(scorer)

    def one(video: VideoRecord) -> ScoreSeries:
        return ScoreSeries(video_id=video.video_id, scores=np.asarray(score(video), dtype=np.float64).tolist())

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, dataset))
    else:
        results = [one(video) for video in dataset]
    return sorted(results, key=lambda series: series.video_id)


def evaluate(
    scorer: Union[ScoreFn, object],
    dataset: Sequence[VideoRecord],
    frame_factor: int = FRAMES_PER_SNIPPET,
    workers: int = 1,
) -> EvalReport:
    """
    Compute AUC, AUC_A, AP, AP_A and class-wise AUC for a scorer.

    Args:
        scorer: A PiVadModel, a Backbone (RGB-only baseline) or any ``video -> scores`` callable
        dataset: Videos carrying snippet labels
        frame_factor: Frames per snippet
        workers: Thread count for per-video forward passes

    Returns:
        EvalReport: Metrics plus per-video score series

    Raises:
        MetricError: Labels absent, or a metric's frames hold a single class
    """
    for video in dataset:
        if video.snippet_labels is None:
            raise MetricError(f"video '{video.video_id}' has no snippet labels")
    by_id = {video.video_id: video for video in dataset}
    series = score_videos(scorer, dataset, workers)

    frame_scores: Dict[str, np.ndarray] = {}
    frame_labels: Dict[str, np.ndarray] = {}
    for item in series:
        video = by_id[item.video_id]
        if len(item.scores) != video.snippets:
            raise MetricError(f"video '{video.video_id}': {len(item.scores)} scores for {video.snippets} snippets")
        frame_scores[item.video_id] = item.frame_scores(frame_factor)
        frame_labels[item.video_id] = np.repeat(video.snippet_labels, frame_factor)

    def gather(ids: Sequence[str]):
        return (
            np.concatenate([frame_labels[i] for i in ids]),
            np.concatenate([frame_scores[i] for i in ids]),
        )

    all_ids = [item.video_id for item in series]
    anomalous_ids = [i for i in all_ids if by_id[i].is_anomalous]
    normal_ids = [i for i in all_ids if not by_id[i].is_anomalous]
    if not anomalous_ids:
        raise MetricError("evaluation set has no anomalous videos")

    labels, scores = gather(all_ids)
    labels_a, scores_a = gather(anomalous_ids)

    class_auc: Dict[str, float] = {}
    for class_name in sorted({by_id[i].class_name for i in anomalous_ids}):
        members = [i for i in anomalous_ids if by_id[i].class_name == class_name]
        class_labels, class_scores = gather(members + normal_ids)
        class_auc[class_name] = roc_auc(class_labels, class_scores, f"class '{class_name}' AUC")

    report = EvalReport(
        auc=roc_auc(labels, scores, "AUC"),
        auc_a=roc_auc(labels_a, scores_a, "AUC_A"),
        ap=average_precision(labels, scores, "AP"),
        ap_a=average_precision(labels_a, scores_a, "AP_A"),
        class_auc=class_auc,
        videos=series,
    )
    logger.info("AUC %.4f  AUC_A %.4f  AP %.4f  AP_A %.4f", report.auc, report.auc_a, report.ap, report.ap_a)
    return report

