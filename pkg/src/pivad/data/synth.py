"""
Synthetic multi-modal anomaly benchmark.

Every video follows a latent scene walk ``z_t`` (Gaussian steps). Anomalous
videos shift ``z_t`` along a unit class direction ``u_c`` inside one window.
Each stream is a fixed projection of ``z`` plus its own view of the shift::

    rgb = z W_rgb + s_rgb * mask * (u_c W_rgb) + noise
    e_j = z W_j   + s_j   * mask * (u_c W_j)   + noise

A small ``s_rgb`` makes the anomaly subtle in RGB and salient in the
modalities. Projections depend only on (seed, stream name) and per-video
draws only on (seed, video_id), so generation order and the set of
configured streams never change the bytes of a given video.
"""

import logging
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np

from pivad.entities.entities import SynthConfig, VideoLabel
from pivad.exceptions import ConfigError
from pivad.utils.utils import ensure_dir, rng_for

from .dataset import NORMAL_CLASS, ManifestEntry, VideoRecord, write_manifest
from .pvf import write_pvf, write_pvl

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.tsv"


class Projections:
    """Shared stream projections and class directions for one config seed."""

    def __init__(self, cfg: SynthConfig):
        scale = 1.0 / np.sqrt(cfg.latent_dim)
        self.rgb = rng_for(cfg.seed, "projection", "rgb").standard_normal((cfg.latent_dim, cfg.rgb_dim)) * scale
        self.modalities: Dict[str, np.ndarray] = {
            spec.name: rng_for(cfg.seed, "projection", spec.name).standard_normal((cfg.latent_dim, spec.dim)) * scale
            for spec in cfg.modalities
        }
        directions = rng_for(cfg.seed, "classes").standard_normal((cfg.num_classes, cfg.latent_dim))
        self.directions = directions / np.linalg.norm(directions, axis=1, keepdims=True)


def class_name_for(index: int, cfg: SynthConfig) -> str:
    return f"class_{index % cfg.num_classes}"


def video_id_for(split: str, label: VideoLabel, index: int) -> str:
    return f"{split}_{label.name.lower()}_{index:04d}"


def _as_stored(values: np.ndarray) -> np.ndarray:
    # the in-memory copy equals what a PVF round-trip returns
    return values.astype(np.float32).astype(np.float64)


def anomaly_window(cfg: SynthConfig, video_id: str) -> Tuple[int, int]:
    rng = rng_for(cfg.seed, video_id, "window")
    length = int(rng.integers(cfg.window_min, cfg.window_max + 1))
    start = int(rng.integers(0, cfg.snippets - length + 1))
    return start, length


def synthesize_video(
    cfg: SynthConfig, split: str, label: VideoLabel, index: int, projections: Projections
) -> VideoRecord:
    video_id = video_id_for(split, label, index)
    steps = cfg.snippets

    walk_rng = rng_for(cfg.seed, video_id, "walk")
    latent = walk_rng.standard_normal(cfg.latent_dim) + np.cumsum(
        cfg.walk_step * walk_rng.standard_normal((steps, cfg.latent_dim)), axis=0
    )

    mask = np.zeros(steps)
    class_name = NORMAL_CLASS
    shift = np.zeros((steps, cfg.latent_dim))
    if label == VideoLabel.ANOMALOUS:
        start, length = anomaly_window(cfg, video_id)
        mask[start : start + length] = 1.0
        class_index = index % cfg.num_classes
        class_name = class_name_for(index, cfg)
        shift = mask[:, None] * projections.directions[class_index][None, :]

    def stream(weights: np.ndarray, strength: float, name: str) -> np.ndarray:
        noise = rng_for(cfg.seed, video_id, "noise", name).standard_normal((steps, weights.shape[1]))
        return _as_stored(latent @ weights + strength * (shift @ weights) + cfg.noise * noise)

    return VideoRecord(
        video_id=video_id,
        rgb=stream(projections.rgb, cfg.rgb_strength, "rgb"),
        label=label,
        class_name=class_name,
        snippet_labels=mask.astype(np.int64),
        modalities={
            spec.name: stream(projections.modalities[spec.name], cfg.strength(spec.name), spec.name)
            for spec in cfg.modalities
        },
    )


def synthesize_split(cfg: SynthConfig, split: str) -> List[VideoRecord]:
    """Generate one split in memory: normals first, then anomalies."""
    if split not in cfg.splits:
        raise ConfigError(f"unknown split '{split}', configured: {sorted(cfg.splits)}")
    if cfg.window_max > cfg.snippets:
        raise ConfigError(f"anomaly window length {cfg.window_max} exceeds T={cfg.snippets}")
    counts = cfg.splits[split]
    projections = Projections(cfg)
    records = [synthesize_video(cfg, split, VideoLabel.NORMAL, i, projections) for i in range(counts.normal)]
    records += [synthesize_video(cfg, split, VideoLabel.ANOMALOUS, i, projections) for i in range(counts.anomalous)]
    return records


def write_split(records: List[VideoRecord], split_dir: Union[str, Path]) -> Path:
    """Write records as PVF/PVL files plus a manifest; returns the manifest path."""
    root = ensure_dir(split_dir)
    entries: List[ManifestEntry] = []
    for record in records:
        rgb_path = f"rgb/{record.video_id}.pvf"
        write_pvf(record.rgb, root / rgb_path)
        label_path = None
        if record.snippet_labels is not None:
            label_path = f"labels/{record.video_id}.pvl"
            write_pvl(record.snippet_labels, root / label_path)
        modality_paths = {}
        for name, values in record.modalities.items():
            modality_paths[name] = f"modalities/{name}/{record.video_id}.pvf"
            write_pvf(values, root / modality_paths[name])
        entries.append(
            ManifestEntry(
                video_id=record.video_id,
                class_name=record.class_name,
                label=record.label,
                rgb_path=rgb_path,
                snippet_label_path=label_path,
                modality_paths=modality_paths,
            )
        )
    return write_manifest(entries, root / MANIFEST_NAME)


def generate_dataset(cfg: SynthConfig, out_dir: Union[str, Path]) -> Dict[str, Path]:
    """
    Generate every configured split under ``out_dir/<split>/``.

    Returns:
        Dict[str, Path]: Manifest path per split
    """
    manifests: Dict[str, Path] = {}
    for split in sorted(cfg.splits):
        records = synthesize_split(cfg, split)
        manifests[split] = write_split(records, Path(out_dir) / split)
        logger.info("generated %s split: %d videos -> %s", split, len(records), manifests[split])
    return manifests
