"""
Poly-modal Inductor: pseudo-modality generation (PMG) and cross-modal induction (CMI).

One inductor sits at each tapped backbone block. PMG turns the block output
``F*`` into one pseudo embedding per configured modality through a shared
encoder and per-modality translator/decoder pairs. CMI projects each stream to
the backbone width, fuses the concatenation and refines it through a block
stack with ``F*`` added back between blocks.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from pivad.autograd import Tensor, concat
from pivad.entities.entities import BackboneConfig, InductorConfig
from pivad.exceptions import ModalityError, ShapeError
from pivad.nn import Conv1dLayer, LinearLayer, Module, TransformerBlock, sinusoidal_encoding

logger = logging.getLogger(__name__)

ACTIVATION_EPS = 1e-12


class PseudoModalityGenerator(Module):
    def __init__(self, hidden_dim: int, config: InductorConfig):
        super().__init__()
        self.modality_names = config.modality_names
        self.encoder = self.add_child("encoder", Conv1dLayer(hidden_dim, config.latent_dim, config.kernel_size))
        self.translators: Dict[str, LinearLayer] = {}
        self.decoders: Dict[str, Conv1dLayer] = {}
        for spec in config.modalities:
            self.translators[spec.name] = self.add_child(
                f"translator.{spec.name}", LinearLayer(config.latent_dim, config.latent_dim)
            )
            self.decoders[spec.name] = self.add_child(
                f"decoder.{spec.name}", Conv1dLayer(config.latent_dim, spec.dim, config.kernel_size)
            )

    def __call__(self, features: Tensor, names: Optional[Sequence[str]] = None) -> Dict[str, Tensor]:
        wanted = list(self.modality_names if names is None else names)
        unknown = [name for name in wanted if name not in self.decoders]
        if unknown:
            raise ModalityError(f"unconfigured modalities requested: {unknown}")
        latent = self.encoder(features).gelu()
        return {name: self.decoders[name](self.translators[name](latent)) for name in wanted}


class CrossModalInductor(Module):
    def __init__(self, backbone: BackboneConfig, config: InductorConfig):
        super().__init__()
        hidden = backbone.hidden_dim
        self.modality_names = config.modality_names
        self.positional_encoding = config.positional_encoding
        self.align: Dict[str, LinearLayer] = {
            spec.name: self.add_child(f"align.{spec.name}", LinearLayer(spec.dim, hidden)) for spec in config.modalities
        }
        self.fusion = self.add_child("fusion", LinearLayer(len(config.modalities) * hidden, hidden))
        self.blocks: List[TransformerBlock] = [
            self.add_child(f"blocks.{i}", TransformerBlock(hidden, backbone.heads, backbone.ffn_expansion))
            for i in range(config.cmi_blocks)
        ]

    def __call__(self, streams: Mapping[str, Tensor], features: Tensor):
        """
        Fuse modality streams into ``F*_M``.

        Args:
            streams: One ``T x d_j`` tensor per configured modality
            features: The tapped block output ``F*`` (``T x H``)

        Returns:
            Tuple[Tensor, Dict[str, Tensor]]: ``F*_M`` and the aligned embeddings ``a_j``

        Raises:
            ModalityError: If any configured stream is missing
        """
        missing = [name for name in self.modality_names if name not in streams]
        if missing:
            raise ModalityError(f"missing modality streams: {missing}")
        aligned = {name: self.align[name](streams[name]) for name in self.modality_names}
        fused = self.fusion(concat([aligned[name] for name in self.modality_names], axis=-1))
        if self.positional_encoding == "sinusoidal":
            fused = fused + sinusoidal_encoding(*fused.shape)
        last = len(self.blocks) - 1
        for index, block in enumerate(self.blocks):
            fused = block(fused)
            if index < last:
                fused = fused + features
        return fused, aligned


def modality_activations(aligned: Mapping[str, Tensor], names: Sequence[str]) -> np.ndarray:
    """``T x N`` table: per-snippet row norms of ``a_j``, L2-normalised across modalities."""
    norms = np.stack([np.linalg.norm(aligned[name].data, axis=1) for name in names], axis=1)
    totals = np.linalg.norm(norms, axis=1, keepdims=True)
    return norms / np.maximum(totals, ACTIVATION_EPS)


@dataclass
class SiteTrace:
    """Everything one inductor site produced for one video."""

    block: int
    features: Tensor  # F*
    streams: Dict[str, Tensor]  # what CMI consumed (pseudo or real)
    pseudo: Dict[str, Tensor] = field(default_factory=dict)  # PMG output, empty when PMG was bypassed
    aligned: Dict[str, Tensor] = field(default_factory=dict)
    fused: Optional[Tensor] = None  # F*_M
    activations: Optional[np.ndarray] = None  # T x N

    @property
    def mean_activation(self) -> np.ndarray:
        if self.activations is None:
            raise ShapeError("site has no activations recorded")
        return self.activations.mean(axis=0)


class PolyModalInductor(Module):
    def __init__(self, backbone: BackboneConfig, config: InductorConfig):
        super().__init__()
        self.modality_names = config.modality_names
        self.pmg = self.add_child("pmg", PseudoModalityGenerator(backbone.hidden_dim, config))
        self.cmi = self.add_child("cmi", CrossModalInductor(backbone, config))

    def __call__(
        self,
        block: int,
        features: Tensor,
        real_streams: Optional[Mapping[str, Tensor]] = None,
        run_pmg: bool = True,
    ) -> SiteTrace:
        """Feed CMI with ``real_streams`` when given, otherwise with PMG output."""
        pseudo = self.pmg(features) if run_pmg or real_streams is None else {}
        streams = dict(real_streams) if real_streams is not None else pseudo
        fused, aligned = self.cmi(streams, features)
        return SiteTrace(
            block=block,
            features=features,
            streams=streams,
            pseudo=pseudo,
            aligned=aligned,
            fused=fused,
            activations=modality_activations(aligned, self.modality_names),
        )
