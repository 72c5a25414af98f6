"""Pivad model module."""

from .backbone import Backbone
from .inductor import (
    CrossModalInductor,
    PolyModalInductor,
    PseudoModalityGenerator,
    SiteTrace,
    modality_activations,
)
from .pivad import SITE_NAMES, ForwardTrace, PiVadModel, param_count

__all__ = [
    "Backbone",
    "CrossModalInductor",
    "PolyModalInductor",
    "PseudoModalityGenerator",
    "SiteTrace",
    "modality_activations",
    "SITE_NAMES",
    "ForwardTrace",
    "PiVadModel",
    "param_count",
]
