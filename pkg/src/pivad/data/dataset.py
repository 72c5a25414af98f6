"""
Video records and the manifest-driven loader.

Manifest lines are tab-separated::

    video_id  class_name  label  rgb_path  snippet_label_path|-  name=path ...

Relative paths resolve against the manifest's directory. The same loader
reads synthetic trees and externally produced feature files.
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from pivad.entities.entities import VideoLabel
from pivad.exceptions import DatasetError, PvfError

from .pvf import read_pvf, read_pvl

logger = logging.getLogger(__name__)

NORMAL_CLASS = "normal"
NO_FILE = "-"


@dataclass(frozen=True)
class VideoRecord:
    """One video: RGB snippet features, weak label and optional extras.

    ``rgb`` is ``T x D`` float64; ``modalities`` maps a stream name to ``T x d_j``.
    """

    video_id: str
    rgb: Optional[np.ndarray]
    label: VideoLabel
    class_name: str = NORMAL_CLASS
    snippet_labels: Optional[np.ndarray] = None
    modalities: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        steps = None if self.rgb is None else self.rgb.shape[0]
        if self.rgb is not None and self.rgb.ndim != 2:
            raise DatasetError(f"video '{self.video_id}': rgb must be T x D, got shape {self.rgb.shape}")
        if self.snippet_labels is not None:
            if steps is not None and self.snippet_labels.shape != (steps,):
                raise DatasetError(
                    f"video '{self.video_id}': snippet_labels has shape {self.snippet_labels.shape}, "
                    f"expected ({steps},)"
                )
            has_positive = bool(np.any(self.snippet_labels > 0))
            if has_positive != (self.label == VideoLabel.ANOMALOUS):
                raise DatasetError(
                    f"video '{self.video_id}': label {int(self.label)} disagrees with snippet_labels"
                )
        for name, stream in self.modalities.items():
            if stream.ndim != 2 or (steps is not None and stream.shape[0] != steps):
                raise DatasetError(
                    f"video '{self.video_id}': modality '{name}' has shape {stream.shape}, expected ({steps}, d)"
                )

    @property
    def snippets(self) -> int:
        if self.rgb is not None:
            return int(self.rgb.shape[0])
        if self.snippet_labels is not None:
            return int(self.snippet_labels.shape[0])
        raise DatasetError(f"video '{self.video_id}' carries no snippet-aligned data")

    @property
    def is_anomalous(self) -> bool:
        return self.label == VideoLabel.ANOMALOUS

    def without_modalities(self) -> "VideoRecord":
        return replace(self, modalities={})

    def select_modalities(self, names: Iterable[str]) -> "VideoRecord":
        wanted = set(names)
        return replace(self, modalities={k: v for k, v in self.modalities.items() if k in wanted})


@dataclass
class ManifestEntry:
    video_id: str
    class_name: str
    label: VideoLabel
    rgb_path: str
    snippet_label_path: Optional[str] = None
    modality_paths: Dict[str, str] = field(default_factory=dict)

    def to_line(self) -> str:
        fields = [
            self.video_id,
            self.class_name,
            str(int(self.label)),
            self.rgb_path,
            self.snippet_label_path or NO_FILE,
        ]
        fields.extend(f"{name}={path}" for name, path in self.modality_paths.items())
        return "\t".join(fields)

    @classmethod
    def from_line(cls, line: str, where: str) -> "ManifestEntry":
        fields = line.rstrip("\r\n").split("\t")
        if len(fields) < 5:
            raise DatasetError(f"{where}: expected at least 5 tab-separated fields, got {len(fields)}")
        video_id, class_name, label, rgb_path, label_path = fields[:5]
        if label not in ("0", "1"):
            raise DatasetError(f"{where}: video '{video_id}' field label must be 0 or 1, got '{label}'")
        modality_paths: Dict[str, str] = {}
        for item in fields[5:]:
            name, sep, path = item.partition("=")
            if not sep or not name or not path:
                raise DatasetError(f"{where}: video '{video_id}' has malformed modality entry '{item}'")
            if name in modality_paths:
                raise DatasetError(f"{where}: video '{video_id}' lists modality '{name}' twice")
            modality_paths[name] = path
        return cls(
            video_id=video_id,
            class_name=class_name,
            label=VideoLabel(int(label)),
            rgb_path=rgb_path,
            snippet_label_path=None if label_path == NO_FILE else label_path,
            modality_paths=modality_paths,
        )


def write_manifest(entries: Sequence[ManifestEntry], path: Union[str, Path]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text("".join(entry.to_line() + "\n" for entry in entries), encoding="utf-8")
    return target


def read_manifest(path: Union[str, Path]) -> List[ManifestEntry]:
    source = Path(path)
    if not source.is_file():
        raise DatasetError(f"manifest not found: {source}")
    entries: List[ManifestEntry] = []
    seen = set()
    for number, line in enumerate(source.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        entry = ManifestEntry.from_line(line, f"{source}:{number}")
        if entry.video_id in seen:
            raise DatasetError(f"{source}:{number}: duplicate video '{entry.video_id}'")
        seen.add(entry.video_id)
        entries.append(entry)
    return entries


def _load_matrix(base: Path, relative: str, video_id: str, field_name: str) -> np.ndarray:
    try:
        return read_pvf(base / relative).data
    except FileNotFoundError:
        raise DatasetError(f"video '{video_id}': {field_name} file missing: {base / relative}") from None
    except PvfError as exc:
        raise DatasetError(f"video '{video_id}': {field_name}: {exc}") from exc


def load_dataset(
    manifest_path: Union[str, Path],
    require_modalities: bool = True,
    modalities: Optional[Sequence[str]] = None,
    rgb_dim: Optional[int] = None,
    modality_dims: Optional[Mapping[str, int]] = None,
) -> List[VideoRecord]:
    """
    Load every video a manifest references.

    Args:
        manifest_path: Path to ``manifest.tsv``
        require_modalities: When False, missing modality files are skipped (inference)
        modalities: Streams to load; all listed in the manifest when None
        rgb_dim: Expected D, checked when given
        modality_dims: Expected d_j per stream, checked when given

    Returns:
        List[VideoRecord]: Records in manifest order

    Raises:
        DatasetError: On any manifest/file/shape mismatch, naming the video and field
    """
    manifest = Path(manifest_path)
    base = manifest.parent
    records: List[VideoRecord] = []
    for entry in read_manifest(manifest):
        rgb = _load_matrix(base, entry.rgb_path, entry.video_id, "rgb")
        if rgb_dim is not None and rgb.shape[1] != rgb_dim:
            raise DatasetError(f"video '{entry.video_id}': rgb has D={rgb.shape[1]}, expected {rgb_dim}")

        snippet_labels = None
        if entry.snippet_label_path is not None:
            try:
                snippet_labels = read_pvl(base / entry.snippet_label_path)
            except FileNotFoundError:
                raise DatasetError(f"video '{entry.video_id}': snippet_labels file missing") from None
            except PvfError as exc:
                raise DatasetError(f"video '{entry.video_id}': snippet_labels: {exc}") from exc

        names = list(entry.modality_paths) if modalities is None else list(modalities)
        streams: Dict[str, np.ndarray] = {}
        for name in names:
            relative = entry.modality_paths.get(name)
            if relative is None or not (base / relative).is_file():
                if require_modalities:
                    raise DatasetError(f"video '{entry.video_id}': modality '{name}' file missing")
                continue
            stream = _load_matrix(base, relative, entry.video_id, f"modality '{name}'")
            expected = (modality_dims or {}).get(name)
            if expected is not None and stream.shape[1] != expected:
                raise DatasetError(
                    f"video '{entry.video_id}': modality '{name}' has d={stream.shape[1]}, expected {expected}"
                )
            streams[name] = stream

        records.append(
            VideoRecord(
                video_id=entry.video_id,
                rgb=rgb,
                label=entry.label,
                class_name=entry.class_name,
                snippet_labels=snippet_labels,
                modalities=streams,
            )
        )
    logger.info("loaded %d videos from %s", len(records), manifest)
    return records


def split_by_label(records: Sequence[VideoRecord]) -> Tuple[List[VideoRecord], List[VideoRecord]]:
    normals = [r for r in records if not r.is_anomalous]
    anomalies = [r for r in records if r.is_anomalous]
    return normals, anomalies
