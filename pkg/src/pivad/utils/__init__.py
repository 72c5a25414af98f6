"""Pivad utilities module."""

from .config_utils import apply_overrides, build_config, load_config, write_effective_config
from .utils import derive_seed, ensure_dir, format_float, rng_for, setup_logging, write_lines

__all__ = [
    "apply_overrides",
    "build_config",
    "load_config",
    "write_effective_config",
    "derive_seed",
    "ensure_dir",
    "format_float",
    "rng_for",
    "setup_logging",
    "write_lines",
]
