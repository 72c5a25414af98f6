import hashlib
import logging
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def setup_logging(level: Union[str, int] = "INFO") -> None:
    """Configure the root logger once for command-line runs."""
    if isinstance(level, str):
        numeric = logging.getLevelName(level.upper())
        if not isinstance(numeric, int):
            raise ValueError(f"unknown log level '{level}'")
        level = numeric
    root = logging.getLogger()
    if not root.handlers:
        logging.basicConfig(format=LOG_FORMAT)
    root.setLevel(level)


def derive_seed(*parts: object) -> int:
    """Stable 64-bit seed from arbitrary parts (seed, stage, video id, ...).

    Independent of ``PYTHONHASHSEED`` and of call order.
    """
    digest = hashlib.blake2b("\x1f".join(repr(p) for p in parts).encode("utf-8"), digest_size=8)
    return int.from_bytes(digest.digest(), "little")


def rng_for(*parts: object) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*parts))


def ensure_dir(path: Union[str, Path]) -> Path:
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def format_float(value: float) -> str:
    # 17 significant digits round-trip every float64
    return "%.17g" % value


def write_lines(path: Union[str, Path], lines: Iterable[str], header: Optional[str] = None) -> Path:
    target = Path(path)
    ensure_dir(target.parent)
    with target.open("w", encoding="utf-8", newline="\n") as handle:
        if header is not None:
            handle.write(header + "\n")
        for line in lines:
            handle.write(line + "\n")
    logger.debug("wrote %s", target)
    return target
