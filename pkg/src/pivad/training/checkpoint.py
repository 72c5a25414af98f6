"""
PVCK checkpoints.

Layout (little-endian)::

    b"PVCK" | u32 version | 32-byte config digest
    u32 meta length | canonical JSON meta (kind, config, stage, optimizer step)
    u32 block count | blocks

    block: u16 name length | UTF-8 name | u8 ndim | u32 dims... | float64 payload | u32 CRC-32

Parameters are stored at 64 bits, so a round-trip is bit-exact. Adam moments
travel as ``adam.m.<param>`` / ``adam.v.<param>`` blocks.
"""

import json
import logging
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from pivad.entities.entities import BackboneConfig, ModelConfig, StageFlag
from pivad.exceptions import CheckpointError, CorruptBlockError, DigestMismatchError
from pivad.model.backbone import Backbone
from pivad.model.pivad import PiVadModel

from .optim import AdamState

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"PVCK"
CHECKPOINT_VERSION = 1
DIGEST_SIZE = 32
ADAM_M = "adam.m."
ADAM_V = "adam.v."

KIND_TEACHER = "teacher"
KIND_PIVAD = "pivad"

PathLike = Union[str, Path]


@dataclass
class Checkpoint:
    digest: bytes
    meta: Dict[str, Any]
    blocks: Dict[str, np.ndarray] = field(default_factory=dict)


def encode_checkpoint(checkpoint: Checkpoint) -> bytes:
    if len(checkpoint.digest) != DIGEST_SIZE:
        raise CheckpointError(f"config digest must be {DIGEST_SIZE} bytes")
    meta = json.dumps(checkpoint.meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    out = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION), checkpoint.digest]
    out += [struct.pack("<I", len(meta)), meta, struct.pack("<I", len(checkpoint.blocks))]
    for name, values in checkpoint.blocks.items():
        encoded = name.encode("utf-8")
        array = np.ascontiguousarray(values, dtype="<f8")
        payload = array.tobytes()
        out += [
            struct.pack("<H", len(encoded)),
            encoded,
            struct.pack("<B", array.ndim),
            struct.pack(f"<{array.ndim}I", *array.shape),
            payload,
            struct.pack("<I", zlib.crc32(payload)),
        ]
    return b"".join(out)


class _Reader:
    def __init__(self, payload: bytes):
        self.payload = payload
        self.offset = 0

    def take(self, size: int, block: str, what: str) -> bytes:
        end = self.offset + size
        if end > len(self.payload):
            raise CorruptBlockError(block, f"truncated while reading {what}")
        chunk = self.payload[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str, block: str, what: str) -> Tuple[int, ...]:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), block, what))


def decode_checkpoint(payload: bytes) -> Checkpoint:
    reader = _Reader(payload)
    if reader.take(4, "header", "magic") != CHECKPOINT_MAGIC:
        raise CheckpointError("not a PVCK checkpoint (bad magic)")
    (version,) = reader.unpack("<I", "header", "version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    digest = reader.take(DIGEST_SIZE, "header", "digest")
    (meta_size,) = reader.unpack("<I", "meta", "length")
    try:
        meta = json.loads(reader.take(meta_size, "meta", "payload").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptBlockError("meta", f"invalid JSON: {exc}") from exc

    (count,) = reader.unpack("<I", "blocks", "count")
    blocks: Dict[str, np.ndarray] = {}
    for index in range(count):
        label = f"#{index}"
        (name_size,) = reader.unpack("<H", label, "name length")
        try:
            name = reader.take(name_size, label, "name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptBlockError(label, "name is not UTF-8") from exc
        (ndim,) = reader.unpack("<B", name, "rank")
        shape = reader.unpack(f"<{ndim}I", name, "dims")
        size = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        data = reader.take(8 * size, name, "payload")
        (crc,) = reader.unpack("<I", name, "checksum")
        if zlib.crc32(data) != crc:
            raise CorruptBlockError(name, "checksum mismatch")
        blocks[name] = np.frombuffer(data, dtype="<f8").astype(np.float64).reshape(shape)
    if reader.offset != len(payload):
        raise CorruptBlockError("trailer", f"{len(payload) - reader.offset} unexpected trailing bytes")
    return Checkpoint(digest=digest, meta=meta, blocks=blocks)


def read_checkpoint(path: PathLike, expected_digest: Optional[bytes] = None) -> Checkpoint:
    source = Path(path)
    if not source.is_file():
        raise CheckpointError(f"checkpoint not found: {source}")
    checkpoint = decode_checkpoint(source.read_bytes())
    if expected_digest is not None and checkpoint.digest != expected_digest:
        raise DigestMismatchError(f"{source}: checkpoint was written for a different model configuration")
    return checkpoint


def _optimizer_blocks(state: Optional[AdamState]) -> Dict[str, np.ndarray]:
    if state is None:
        return {}
    blocks = {ADAM_M + name: m for name, m in state.m.items()}
    blocks.update({ADAM_V + name: v for name, v in state.v.items()})
    return blocks


def _restore_params(target: Dict[str, Any], blocks: Dict[str, np.ndarray], source: str) -> None:
    for name, tensor in target.items():
        if name not in blocks:
            raise CorruptBlockError(name, f"missing from {source}")
        if blocks[name].shape != tensor.shape:
            raise CorruptBlockError(name, f"shape {blocks[name].shape}, model expects {tensor.shape}")
        tensor.data[...] = blocks[name]


def _restore_optimizer(meta: Dict[str, Any], blocks: Dict[str, np.ndarray]) -> AdamState:
    state = AdamState(step=int(meta.get("optimizer_step", 0)))
    for name, values in blocks.items():
        if name.startswith(ADAM_M):
            state.m[name[len(ADAM_M) :]] = values.copy()
        elif name.startswith(ADAM_V):
            state.v[name[len(ADAM_V) :]] = values.copy()
    return state


def save_teacher(backbone: Backbone, path: PathLike, state: Optional[AdamState] = None) -> Path:
    blocks = {name: t.data for name, t in backbone.named_parameters()}
    blocks.update(_optimizer_blocks(state))
    checkpoint = Checkpoint(
        digest=backbone.config.digest(),
        meta={
            "kind": KIND_TEACHER,
            "config": backbone.config.model_dump(mode="json"),
            "stage": StageFlag.PRETRAINED.value,
            "optimizer_step": state.step if state else 0,
        },
        blocks=blocks,
    )
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_bytes(encode_checkpoint(checkpoint))
    logger.info("teacher checkpoint written to %s", target)
    return target


def load_teacher(path: PathLike, expected: Optional[BackboneConfig] = None) -> Backbone:
    checkpoint = read_checkpoint(path, expected.digest() if expected is not None else None)
    if checkpoint.meta.get("kind") != KIND_TEACHER:
        raise CheckpointError(f"{path}: expected a teacher checkpoint, found kind '{checkpoint.meta.get('kind')}'")
    config = BackboneConfig.model_validate(checkpoint.meta["config"])
    if config.digest() != checkpoint.digest:
        raise DigestMismatchError(f"{path}: stored configuration does not match the stored digest")
    backbone = Backbone(config)
    _restore_params(backbone.param_dict(), checkpoint.blocks, str(path))
    return backbone


def save_checkpoint(model: PiVadModel, path: PathLike, state: Optional[AdamState] = None) -> Path:
    """Write every model parameter (teacher included), the stage flag and optimizer state."""
    blocks = {name: t.data for name, t in model.named_parameters()}
    blocks.update(_optimizer_blocks(state))
    checkpoint = Checkpoint(
        digest=model.config.digest(),
        meta={
            "kind": KIND_PIVAD,
            "config": model.config.model_dump(mode="json"),
            "stage": model.stage.value,
            "teacher_ready": model.teacher_ready,
            "optimizer_step": state.step if state else 0,
        },
        blocks=blocks,
    )
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_bytes(encode_checkpoint(checkpoint))
    logger.info("checkpoint written to %s (stage=%s)", target, model.stage.value)
    return target


def load_checkpoint(path: PathLike, expected: Optional[ModelConfig] = None) -> Tuple[PiVadModel, AdamState]:
    """
    Rebuild a PiVadModel from a checkpoint.

    Args:
        path: Checkpoint file
        expected: When given, its digest must match the stored one

    Raises:
        DigestMismatchError: Different architecture
        CorruptBlockError: Truncated or damaged content, naming the block
    """
    checkpoint = read_checkpoint(path, expected.digest() if expected is not None else None)
    if checkpoint.meta.get("kind") != KIND_PIVAD:
        raise CheckpointError(f"{path}: expected a model checkpoint, found kind '{checkpoint.meta.get('kind')}'")
    config = ModelConfig.model_validate(checkpoint.meta["config"])
    if config.digest() != checkpoint.digest:
        raise DigestMismatchError(f"{path}: stored configuration does not match the stored digest")
    model = PiVadModel(config)
    _restore_params(model.param_dict(), checkpoint.blocks, str(path))
    model.stage = StageFlag(checkpoint.meta.get("stage", StageFlag.INITIATED.value))
    model.teacher_ready = bool(checkpoint.meta.get("teacher_ready", False))
    return model, _restore_optimizer(checkpoint.meta, checkpoint.blocks)
