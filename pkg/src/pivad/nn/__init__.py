"""Pivad layers module."""

from .layers import (
    Conv1dLayer,
    FeedForward,
    LayerNorm,
    LinearLayer,
    Module,
    MultiHeadSelfAttention,
    TransformerBlock,
    init_params,
    sinusoidal_encoding,
)

__all__ = [
    "Conv1dLayer",
    "FeedForward",
    "LayerNorm",
    "LinearLayer",
    "Module",
    "MultiHeadSelfAttention",
    "TransformerBlock",
    "init_params",
    "sinusoidal_encoding",
]
