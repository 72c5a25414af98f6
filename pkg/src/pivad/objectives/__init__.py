"""Pivad objectives module."""

from .losses import (
    LossComputer,
    LossParts,
    breakdown,
    cosine_sim_matrix,
    l_align,
    l_distill,
    l_first,
    l_infonce_bidirectional,
    l_mil,
    l_pmg,
    l_second,
)

__all__ = [
    "LossComputer",
    "LossParts",
    "breakdown",
    "cosine_sim_matrix",
    "l_align",
    "l_distill",
    "l_first",
    "l_infonce_bidirectional",
    "l_mil",
    "l_pmg",
    "l_second",
]
