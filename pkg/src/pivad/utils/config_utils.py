"""
Pivad configuration utilities.

Config files are TOML. Flag overrides use dotted keys (``train.loss_weights.tau``)
and are applied on top of the parsed file before validation.
"""

import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from pydantic import ValidationError

from pivad.entities.entities import PivadConfig
from pivad.exceptions import ConfigError

from .utils import ensure_dir

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

EFFECTIVE_CONFIG_NAME = "effective_config.json"


def _validation_message(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        location = ".".join(str(piece) for piece in item["loc"]) or "<root>"
        parts.append(f"{location}: {item['msg']}")
    return "; ".join(parts)


def build_config(data: Mapping[str, Any]) -> PivadConfig:
    """
    Validate a raw mapping into a PivadConfig.

    Raises:
        ConfigError: If any field violates its constraints
    """
    try:
        return PivadConfig.model_validate(dict(data))
    except ValidationError as exc:
        raise ConfigError(f"invalid configuration: {_validation_message(exc)}") from exc


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    source = Path(path)
    try:
        with source.open("rb") as handle:
            return tomllib.load(handle)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {source}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {source} is not valid TOML: {exc}") from exc


def set_dotted(data: Dict[str, Any], dotted_key: str, value: Any) -> None:
    node = data
    keys = dotted_key.split(".")
    for key in keys[:-1]:
        child = node.setdefault(key, {})
        if not isinstance(child, dict):
            raise ConfigError(f"cannot override '{dotted_key}': '{key}' is not a table")
        node = child
    node[keys[-1]] = value


def load_config(path: Optional[Union[str, Path]] = None, overrides: Optional[Mapping[str, Any]] = None) -> PivadConfig:
    """
    Load the effective configuration: defaults, then the file, then overrides.

    Args:
        path: Optional TOML file
        overrides: Dotted-key values applied after the file is parsed

    Returns:
        PivadConfig: The validated configuration
    """
    data: Dict[str, Any] = read_config_file(path) if path is not None else {}
    for key, value in (overrides or {}).items():
        if value is not None:
            set_dotted(data, key, value)
    config = build_config(data)
    logger.debug("configuration loaded from %s with %d overrides", path or "<defaults>", len(overrides or {}))
    return config


def apply_overrides(config: PivadConfig, overrides: Mapping[str, Any]) -> PivadConfig:
    data = config.model_dump(mode="json")
    for key, value in overrides.items():
        if value is not None:
            set_dotted(data, key, value)
    return build_config(data)


def write_effective_config(config: PivadConfig, out_dir: Union[str, Path]) -> Path:
    target = ensure_dir(out_dir) / EFFECTIVE_CONFIG_NAME
    payload = json.dumps(config.model_dump(mode="json"), indent=2, sort_keys=True)
    target.write_text(payload + "\n", encoding="utf-8")
    return target
