import hashlib
import json
import math
from enum import Enum, IntEnum
from typing import Any, Dict, List, Literal, Optional, Tuple, TypedDict

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

DEFAULT_MODALITIES = ("P", "D", "M", "O", "txt")  # pose, depth, panoptic masks, optical flow, text
FRAMES_PER_SNIPPET = 16


def canonical_digest(payload: Dict[str, Any]) -> bytes:
    """SHA-256 of canonical (sorted, compact) JSON, 32 bytes."""
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).digest()


class RunnerEvent(TypedDict):
    type: str
    source: str  # Runner ID that emitted the event
    timestamp: float
    data: Dict[str, Any]  # Event payload


class LossBreakdown(TypedDict):
    l_mil: float
    l_align: float
    l_distill: float
    l_pmg: float
    total: float


class RunnerStatus(str, Enum):
    """Lifecycle of a training runner."""

    INITIATED = "initiated"  # Runner created, no stage started
    WORKING = "working"  # A stage is optimizing
    WAITING = "waiting"  # Between stages
    COMPLETED = "completed"  # Last requested stage finished
    ERROR = "error"  # A stage aborted


class StageFlag(str, Enum):
    """How far a set of parameters has been trained. Stored in checkpoints."""

    INITIATED = "initiated"
    PRETRAINED = "pretrained"  # Teacher backbone after MIL pretraining
    WARMED_UP = "warmed_up"  # Student + PI after the first (warm-up) step
    TRAINED = "trained"  # Student + PI after the second (main) step


class ModalitySource(str, Enum):
    """Which streams feed CMI: PMG outputs or ground-truth modality embeddings."""

    PSEUDO = "pseudo"
    REAL = "real"


class SiteSelection(str, Enum):
    EARLY = "early"
    LATE = "late"
    BOTH = "both"

    def active_sites(self) -> Tuple[str, ...]:
        if self is SiteSelection.BOTH:
            return ("early", "late")
        return (self.value,)


class ForwardMode(str, Enum):
    TRAIN = "train"
    INFER = "infer"


class VideoLabel(IntEnum):
    NORMAL = 0
    ANOMALOUS = 1


class ModalitySpec(BaseModel):
    """One auxiliary modality stream and its embedding width."""

    name: str
    dim: int = Field(32, gt=0)


def _default_modalities() -> List[ModalitySpec]:
    return [ModalitySpec(name=name, dim=32) for name in DEFAULT_MODALITIES]


class BackboneConfig(BaseModel):
    """Shared architecture of the teacher and student backbones.

    Blocks are numbered from 1. A PI site ``i`` reads the output of block ``i``
    and its fused output feeds block ``i + 1``.
    """

    input_dim: int = Field(64, gt=0)
    hidden_dim: int = Field(64, gt=0)
    num_blocks: int = Field(4, gt=1)
    early_site: int = 1
    late_site: int = 3
    heads: int = Field(4, gt=0)
    ffn_expansion: int = Field(2, gt=0)

    @model_validator(mode="after")
    def _check_sites(self) -> "BackboneConfig":
        if not 1 <= self.early_site < self.late_site <= self.num_blocks - 1:
            raise ValueError(
                f"PI sites must satisfy 1 <= early < late <= num_blocks - 1, "
                f"got early={self.early_site}, late={self.late_site}, num_blocks={self.num_blocks}"
            )
        if self.hidden_dim % self.heads:
            raise ValueError(f"hidden_dim {self.hidden_dim} is not divisible by heads {self.heads}")
        return self

    def site_blocks(self) -> Dict[str, int]:
        return {"early": self.early_site, "late": self.late_site}

    def digest(self) -> bytes:
        return canonical_digest({"backbone": self.model_dump(mode="json")})


class InductorConfig(BaseModel):
    """Poly-modal Inductor (PMG + CMI) hyperparameters, shared by both sites."""

    latent_dim: int = Field(16, gt=0)
    kernel_size: int = Field(3, gt=0)
    cmi_blocks: int = Field(2, ge=2)
    positional_encoding: Literal["none", "sinusoidal"] = "none"
    modalities: List[ModalitySpec] = Field(default_factory=_default_modalities)

    @field_validator("modalities")
    @classmethod
    def _unique_names(cls, value: List[ModalitySpec]) -> List[ModalitySpec]:
        names = [m.name for m in value]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate modality names: {names}")
        return value

    @property
    def modality_names(self) -> List[str]:
        return [m.name for m in self.modalities]

    @property
    def modality_dims(self) -> Dict[str, int]:
        return {m.name: m.dim for m in self.modalities}


class ModelConfig(BaseModel):
    backbone: BackboneConfig = Field(default_factory=BackboneConfig)
    inductor: InductorConfig = Field(default_factory=InductorConfig)
    seed: int = 0  # parameter initialisation seed

    def digest(self) -> bytes:
        """SHA-256 of the architecture (init seed excluded), 32 bytes."""
        return canonical_digest(
            {"backbone": self.backbone.model_dump(mode="json"), "inductor": self.inductor.model_dump(mode="json")}
        )


class TopKRule(BaseModel):
    """MIL top-k selector: ``k = min(T, T // divisor + offset)``."""

    divisor: int = Field(16, gt=0)
    offset: int = Field(1, ge=1)

    def k(self, steps: int) -> int:
        return min(steps, steps // self.divisor + self.offset)


class LossWeights(BaseModel):
    lambda1: float = Field(1.0, ge=0.0)  # alignment weight in the main stage
    lambda2: float = Field(1.0, ge=0.0)  # distillation weight in the main stage
    tau: float = Field(0.07, gt=0.0)  # InfoNCE temperature
    k_rule: TopKRule = Field(default_factory=TopKRule)

    @field_validator("lambda1", "lambda2", "tau")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("loss weights must be finite")
        return value


class ObjectiveComponents(BaseModel):
    """Which auxiliary terms contribute to the objective (component ablation)."""

    pmg: bool = True
    align: bool = True
    distill: bool = True


class StageEpochs(BaseModel):
    pretrain: int = Field(30, ge=1)
    warmup: int = Field(10, ge=1)
    main: int = Field(50, ge=1)


class StageRates(BaseModel):
    pretrain: float = Field(1e-3, gt=0.0)
    warmup: float = Field(1e-3, gt=0.0)
    main: float = Field(1e-4, gt=0.0)


class AdamSettings(BaseModel):
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    eps: float = Field(1e-8, gt=0.0)


class BatchComposition(BaseModel):
    normals: int = Field(4, ge=1)
    anomalies: int = Field(4, ge=1)


class TrainConfig(BaseModel):
    epochs: StageEpochs = Field(default_factory=StageEpochs)
    learning_rates: StageRates = Field(default_factory=StageRates)
    adam: AdamSettings = Field(default_factory=AdamSettings)
    batch: BatchComposition = Field(default_factory=BatchComposition)
    loss_weights: LossWeights = Field(default_factory=LossWeights)
    components: ObjectiveComponents = Field(default_factory=ObjectiveComponents)
    modality_source: ModalitySource = ModalitySource.PSEUDO
    sites: SiteSelection = SiteSelection.BOTH
    seed: int = 0
    frame_factor: int = Field(FRAMES_PER_SNIPPET, gt=0)
    eval_workers: int = Field(1, ge=1)
    show_progress: bool = True


class SplitCounts(BaseModel):
    normal: int = Field(0, ge=0)
    anomalous: int = Field(0, ge=0)


def _default_splits() -> Dict[str, SplitCounts]:
    return {"train": SplitCounts(normal=20, anomalous=20), "test": SplitCounts(normal=10, anomalous=10)}


class SynthConfig(BaseModel):
    """Synthetic multi-modal anomaly benchmark.

    A latent scene walk ``z_t`` is projected into RGB and into every modality
    stream. Inside anomaly windows ``z_t`` is shifted along a per-class
    direction; each stream sees that shift scaled by its own strength.
    """

    splits: Dict[str, SplitCounts] = Field(default_factory=_default_splits)
    snippets: int = Field(32, gt=0)  # T
    rgb_dim: int = Field(64, gt=0)  # D
    modalities: List[ModalitySpec] = Field(default_factory=_default_modalities)
    latent_dim: int = Field(8, gt=0)  # m
    modality_strengths: Dict[str, float] = Field(default_factory=dict)  # s_j, missing names -> default_strength
    default_strength: float = Field(1.0, ge=0.0)
    rgb_strength: float = Field(0.2, ge=0.0)  # s_rgb
    noise: float = Field(0.1, ge=0.0)  # sigma
    walk_step: float = Field(0.3, ge=0.0)
    window_min: int = Field(4, ge=1)
    window_max: int = Field(12, ge=1)
    num_classes: int = Field(3, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def _check_windows_and_strengths(self) -> "SynthConfig":
        if self.window_min > self.window_max:
            raise ValueError(f"window_min {self.window_min} exceeds window_max {self.window_max}")
        if self.window_max > self.snippets:
            raise ValueError(f"anomaly window length {self.window_max} exceeds T={self.snippets}")
        known = {m.name for m in self.modalities}
        for name, strength in self.modality_strengths.items():
            if name not in known:
                raise ValueError(f"strength given for unknown modality '{name}'")
            if not math.isfinite(strength) or strength < 0.0:
                raise ValueError(f"strength of '{name}' must be finite and >= 0, got {strength}")
        return self

    def strength(self, name: str) -> float:
        return self.modality_strengths.get(name, self.default_strength)


class PivadConfig(BaseModel):
    """Root configuration, one table per concern."""

    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    synth: SynthConfig = Field(default_factory=SynthConfig)
    log_level: str = "INFO"

    @model_validator(mode="after")
    def _model_fits_data(self) -> "PivadConfig":
        if self.synth.rgb_dim != self.model.backbone.input_dim:
            raise ValueError(
                f"synth.rgb_dim {self.synth.rgb_dim} != model.backbone.input_dim {self.model.backbone.input_dim}"
            )
        available = {m.name: m.dim for m in self.synth.modalities}
        for spec in self.model.inductor.modalities:
            if available.get(spec.name, spec.dim) != spec.dim:
                raise ValueError(
                    f"modality '{spec.name}' has dim {spec.dim} in the model but {available[spec.name]} in synth"
                )
        return self


class ScoreSeries(BaseModel):
    """Per-snippet anomaly scores in [0, 1] for one video."""

    video_id: str
    scores: List[float]

    def frame_scores(self, factor: int = FRAMES_PER_SNIPPET) -> np.ndarray:
        return np.repeat(np.asarray(self.scores, dtype=np.float64), factor)


class EvalReport(BaseModel):
    auc: float = Field(ge=0.0, le=1.0)
    auc_a: float = Field(ge=0.0, le=1.0)  # restricted to frames of anomalous videos
    ap: float = Field(ge=0.0, le=1.0)
    ap_a: float = Field(ge=0.0, le=1.0)
    class_auc: Dict[str, float] = Field(default_factory=dict)
    videos: List[ScoreSeries] = Field(default_factory=list)

    def to_json(self) -> str:
        return self.model_dump_json(indent=2)


class ParamCount(BaseModel):
    components: Dict[str, int]
    total: int
    inference_total: Optional[int] = None  # student + PI sites, teacher excluded

    @model_validator(mode="after")
    def _total_is_sum(self) -> "ParamCount":
        if self.total != sum(self.components.values()):
            raise ValueError("total must equal the sum of component counts")
        return self
