"""Pivad exception hierarchy.

Validation-style errors also derive from ``ValueError`` so callers that only
know the builtin keep working.
"""


class PivadError(Exception):
    """Base class for every error raised by pivad."""


# tensor-core
class ShapeError(PivadError, ValueError):
    """Incompatible tensor shapes."""


class DomainError(PivadError, ValueError):
    """Operation evaluated outside its mathematical domain (log/sqrt of <= 0)."""


class GraphError(PivadError, RuntimeError):
    """Misuse of the computation graph (non-scalar backward, double backward)."""


class GradCheckError(PivadError, ValueError):
    """The function under gradient check produced a non-finite value."""


# configuration / model
class ConfigError(PivadError, ValueError):
    """Invalid configuration value."""


class ModalityError(PivadError, KeyError):
    """Unconfigured modality requested, or a required modality stream is missing."""

    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class LossError(PivadError, ValueError):
    """Loss inputs violate the loss contract."""


# data
class DatasetError(PivadError, ValueError):
    """Manifest or feature-file content does not match expectations."""


class PvfError(DatasetError):
    """Malformed PVF/PVL feature file."""


class BadMagicError(PvfError):
    pass


class TruncatedPayloadError(PvfError):
    pass


class DimensionOverflowError(PvfError):
    pass


# training / evaluation
class CheckpointError(PivadError, ValueError):
    """Checkpoint could not be read or does not match the expected model."""


class DigestMismatchError(CheckpointError):
    pass


class CorruptBlockError(CheckpointError):
    def __init__(self, block: str, reason: str):
        super().__init__(f"corrupt checkpoint block '{block}': {reason}")
        self.block = block


class TrainingError(PivadError, RuntimeError):
    """A training stage cannot run with the given model/dataset/config."""


class MetricError(PivadError, ValueError):
    """Evaluation inputs are insufficient to compute a metric."""
