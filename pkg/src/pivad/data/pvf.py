"""
PVF / PVL feature-file codecs.

PVF: ``b"PVF1"``, u32 T, u32 D (little-endian), then T*D float32 LE row-major.
PVL: ``b"PVL1"``, u32 T, then T bytes each 0 or 1.

Matrices are promoted to float64 on read.
"""

import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np

from pivad.autograd import Tensor
from pivad.exceptions import BadMagicError, DimensionOverflowError, PvfError, TruncatedPayloadError

logger = logging.getLogger(__name__)

PVF_MAGIC = b"PVF1"
PVL_MAGIC = b"PVL1"
MAX_ELEMENTS = 2**28

_PVF_HEADER = struct.Struct("<4sII")
_PVL_HEADER = struct.Struct("<4sI")

PathLike = Union[str, Path]


def encode_pvf(matrix: Union[np.ndarray, Tensor]) -> bytes:
    values = matrix.data if isinstance(matrix, Tensor) else np.asarray(matrix, dtype=np.float64)
    if values.ndim != 2:
        raise PvfError(f"PVF stores 2-D matrices, got shape {values.shape}")
    rows, cols = values.shape
    if rows == 0 or cols == 0 or rows * cols > MAX_ELEMENTS:
        raise DimensionOverflowError(f"PVF dimensions {rows}x{cols} out of range")
    stored = values.astype("<f4")
    if not np.all(np.isfinite(stored)):
        raise PvfError("PVF values must be finite and representable as float32")
    return _PVF_HEADER.pack(PVF_MAGIC, rows, cols) + stored.tobytes(order="C")


def decode_pvf(payload: bytes, source: str = "<bytes>") -> np.ndarray:
    if len(payload) < 4 or payload[:4] != PVF_MAGIC:
        raise BadMagicError(f"{source}: expected magic {PVF_MAGIC!r}, found {payload[:4]!r}")
    if len(payload) < _PVF_HEADER.size:
        raise TruncatedPayloadError(f"{source}: header needs {_PVF_HEADER.size} bytes, file has {len(payload)}")
    _, rows, cols = _PVF_HEADER.unpack_from(payload)
    if rows == 0 or cols == 0 or rows * cols > MAX_ELEMENTS:
        raise DimensionOverflowError(f"{source}: declared dimensions {rows}x{cols} out of range")
    expected = _PVF_HEADER.size + 4 * rows * cols
    if len(payload) < expected:
        held = (len(payload) - _PVF_HEADER.size) // 4
        raise TruncatedPayloadError(
            f"{source}: declared {rows}x{cols} needs {rows * cols} floats, payload holds {held}"
        )
    if len(payload) > expected:
        raise PvfError(f"{source}: {len(payload) - expected} trailing bytes after payload")
    values = np.frombuffer(payload, dtype="<f4", count=rows * cols, offset=_PVF_HEADER.size)
    return values.astype(np.float64).reshape(rows, cols)


def write_pvf(matrix: Union[np.ndarray, Tensor], path: PathLike) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_bytes(encode_pvf(matrix))
    return target


def read_pvf(path: PathLike) -> Tensor:
    """Read a PVF file into a constant float64 tensor."""
    source = Path(path)
    return Tensor(decode_pvf(source.read_bytes(), str(source)))


def encode_pvl(labels: np.ndarray) -> bytes:
    values = np.asarray(labels)
    if values.ndim != 1 or values.size == 0:
        raise PvfError(f"PVL stores a non-empty label vector, got shape {values.shape}")
    if values.size > MAX_ELEMENTS:
        raise DimensionOverflowError(f"PVL length {values.size} out of range")
    if not np.all((values == 0) | (values == 1)):
        raise PvfError("PVL labels must be 0 or 1")
    return _PVL_HEADER.pack(PVL_MAGIC, values.size) + values.astype(np.uint8).tobytes()


def decode_pvl(payload: bytes, source: str = "<bytes>") -> np.ndarray:
    if len(payload) < 4 or payload[:4] != PVL_MAGIC:
        raise BadMagicError(f"{source}: expected magic {PVL_MAGIC!r}, found {payload[:4]!r}")
    if len(payload) < _PVL_HEADER.size:
        raise TruncatedPayloadError(f"{source}: header needs {_PVL_HEADER.size} bytes, file has {len(payload)}")
    _, steps = _PVL_HEADER.unpack_from(payload)
    if steps == 0 or steps > MAX_ELEMENTS:
        raise DimensionOverflowError(f"{source}: declared length {steps} out of range")
    expected = _PVL_HEADER.size + steps
    if len(payload) < expected:
        held = len(payload) - _PVL_HEADER.size
        raise TruncatedPayloadError(f"{source}: declared {steps} labels, payload holds {held}")
    if len(payload) > expected:
        raise PvfError(f"{source}: {len(payload) - expected} trailing bytes after payload")
    labels = np.frombuffer(payload, dtype=np.uint8, count=steps, offset=_PVL_HEADER.size)
    if np.any(labels > 1):
        raise PvfError(f"{source}: label bytes must be 0 or 1")
    return labels.astype(np.int64)


def write_pvl(labels: np.ndarray, path: PathLike) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_bytes(encode_pvl(labels))
    return target


def read_pvl(path: PathLike) -> np.ndarray:
    source = Path(path)
    return decode_pvl(source.read_bytes(), str(source))
