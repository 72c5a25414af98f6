"""Pivad entities module."""

from .base_runner import PivadBaseRunner
from .entities import (
    DEFAULT_MODALITIES,
    FRAMES_PER_SNIPPET,
    AdamSettings,
    BackboneConfig,
    BatchComposition,
    EvalReport,
    ForwardMode,
    InductorConfig,
    LossBreakdown,
    LossWeights,
    ModalitySource,
    ModalitySpec,
    ModelConfig,
    ObjectiveComponents,
    ParamCount,
    PivadConfig,
    RunnerEvent,
    RunnerStatus,
    ScoreSeries,
    SiteSelection,
    SplitCounts,
    StageEpochs,
    StageFlag,
    StageRates,
    SynthConfig,
    TopKRule,
    TrainConfig,
    VideoLabel,
)

__all__ = [
    "PivadBaseRunner",
    "DEFAULT_MODALITIES",
    "FRAMES_PER_SNIPPET",
    "AdamSettings",
    "BackboneConfig",
    "BatchComposition",
    "EvalReport",
    "ForwardMode",
    "InductorConfig",
    "LossBreakdown",
    "LossWeights",
    "ModalitySource",
    "ModalitySpec",
    "ModelConfig",
    "ObjectiveComponents",
    "ParamCount",
    "PivadConfig",
    "RunnerEvent",
    "RunnerStatus",
    "ScoreSeries",
    "SiteSelection",
    "SplitCounts",
    "StageEpochs",
    "StageFlag",
    "StageRates",
    "SynthConfig",
    "TopKRule",
    "TrainConfig",
    "VideoLabel",
]
