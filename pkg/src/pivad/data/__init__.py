"""Pivad data module."""

from .dataset import ManifestEntry, VideoRecord, load_dataset, read_manifest, split_by_label, write_manifest
from .pvf import decode_pvf, encode_pvf, read_pvf, read_pvl, write_pvf, write_pvl
from .synth import MANIFEST_NAME, Projections, generate_dataset, synthesize_split, write_split

__all__ = [
    "ManifestEntry",
    "VideoRecord",
    "load_dataset",
    "read_manifest",
    "split_by_label",
    "write_manifest",
    "decode_pvf",
    "encode_pvf",
    "read_pvf",
    "read_pvl",
    "write_pvf",
    "write_pvl",
    "MANIFEST_NAME",
    "Projections",
    "generate_dataset",
    "synthesize_split",
    "write_split",
]
