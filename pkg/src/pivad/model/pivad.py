"""
The full teacher/student graph.

The student backbone hands the output of block ``i`` (an active inductor
site) to that site's PolyModalInductor; the fused ``F*_M`` becomes the input
of block ``i + 1``. The frozen teacher runs alongside in train mode only,
exposing its block outputs at the same depths for distillation.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from pivad.autograd import Tensor, no_grad
from pivad.data.dataset import VideoRecord
from pivad.entities.entities import (
    ForwardMode,
    ModalitySource,
    ModelConfig,
    ParamCount,
    ScoreSeries,
    SiteSelection,
    StageFlag,
)
from pivad.exceptions import ModalityError, TrainingError
from pivad.nn import Module, init_params

from .backbone import Backbone
from .inductor import PolyModalInductor, SiteTrace

logger = logging.getLogger(__name__)

SITE_NAMES = ("early", "late")
TEACHER_PREFIX = "teacher."


@dataclass
class ForwardTrace:
    mode: ForwardMode
    modality_source: ModalitySource
    block_features: List[Tensor]  # student, one per block
    sites: Dict[str, SiteTrace]  # active sites only
    logits: Tensor
    scores: np.ndarray
    teacher_features: Dict[str, Tensor] = field(default_factory=dict)  # train mode only

    def mean_activations(self) -> Dict[str, np.ndarray]:
        return {site: trace.mean_activation for site, trace in self.sites.items()}


class PiVadModel(Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.teacher = self.add_child("teacher", Backbone(config.backbone))
        self.student = self.add_child("student", Backbone(config.backbone))
        self.inductors: Dict[str, PolyModalInductor] = {
            site: self.add_child(f"pi_{site}", PolyModalInductor(config.backbone, config.inductor))
            for site in SITE_NAMES
        }
        self.teacher.set_trainable(False)
        self.teacher_ready = False
        self.stage = StageFlag.INITIATED
        # inference defaults used by score_video
        self.modality_source = ModalitySource.PSEUDO
        self.sites = SiteSelection.BOTH

    @classmethod
    def build(cls, config: ModelConfig) -> "PiVadModel":
        model = cls(config)
        init_params(model, config.seed)
        return model

    @property
    def modality_names(self) -> List[str]:
        return self.config.inductor.modality_names

    def load_teacher(self, teacher: Backbone) -> None:
        """Copy pretrained backbone weights into the frozen teacher."""
        if teacher.config != self.config.backbone:
            raise TrainingError("teacher backbone architecture differs from the model's backbone config")
        targets = self.teacher.param_dict()
        for name, tensor in teacher.named_parameters():
            targets[name].data[...] = tensor.data
        self.teacher_ready = True
        logger.debug("teacher loaded (%d parameters)", self.teacher.num_parameters())

    def trainable_parameters(self) -> Dict[str, Tensor]:
        return {name: t for name, t in self.named_parameters() if not name.startswith(TEACHER_PREFIX)}

    def _real_streams(self, video: VideoRecord) -> Dict[str, Tensor]:
        missing = [name for name in self.modality_names if name not in video.modalities]
        if missing:
            raise ModalityError(f"video '{video.video_id}': real modality source needs streams {missing}")
        return {name: Tensor(video.modalities[name]) for name in self.modality_names}

    def forward(
        self,
        video: VideoRecord,
        mode: ForwardMode = ForwardMode.INFER,
        modality_source: ModalitySource = ModalitySource.PSEUDO,
        sites: SiteSelection = SiteSelection.BOTH,
    ) -> ForwardTrace:
        """
        Run the student with its inductor sites, plus the teacher in train mode.

        Args:
            video: The video to score; only RGB is read in pseudo mode
            mode: TRAIN records the graph and exposes teacher features; INFER runs under no_grad
            modality_source: PSEUDO feeds PMG output to CMI, REAL feeds the video's streams
            sites: Which inductor sites inject; the others are skipped

        Raises:
            ModalityError: RGB missing, or a stream missing in real mode
            TrainingError: Train mode before a teacher was loaded
        """
        if video.rgb is None:
            raise ModalityError(f"video '{video.video_id}': RGB stream missing")
        if mode is ForwardMode.TRAIN and not self.teacher_ready:
            raise TrainingError("no pretrained teacher loaded; run teacher pretraining first")

        real = self._real_streams(video) if modality_source is ModalitySource.REAL else None
        site_blocks = self.config.backbone.site_blocks()
        active = {site_blocks[site]: site for site in sites.active_sites()}
        traces: Dict[str, SiteTrace] = {}

        def inject(block: int, hidden: Tensor) -> Tensor:
            site = active.get(block)
            if site is None:
                return hidden
            trace = self.inductors[site](block, hidden, real, run_pmg=mode is ForwardMode.TRAIN)
            traces[site] = trace
            return trace.fused

        rgb = Tensor(video.rgb)
        if mode is ForwardMode.INFER:
            with no_grad():
                logits, outputs = self.student.run(rgb, inject)
        else:
            logits, outputs = self.student.run(rgb, inject)

        teacher_features: Dict[str, Tensor] = {}
        if mode is ForwardMode.TRAIN:
            with no_grad():
                teacher_features = self.teacher.site_features(
                    rgb, {site: site_blocks[site] for site in sites.active_sites()}
                )

        return ForwardTrace(
            mode=mode,
            modality_source=modality_source,
            block_features=outputs,
            sites=traces,
            logits=logits,
            scores=0.5 * (1.0 + np.tanh(0.5 * logits.data)),
            teacher_features=teacher_features,
        )

    def score_video(self, video: VideoRecord) -> np.ndarray:
        return self.forward(video, ForwardMode.INFER, self.modality_source, self.sites).scores

    def score(self, video: VideoRecord) -> ScoreSeries:
        return ScoreSeries(video_id=video.video_id, scores=self.score_video(video).tolist())


def param_count(model: PiVadModel) -> ParamCount:
    """Exact parameter counts per component; ``inference_total`` excludes the teacher."""
    components = {
        "teacher": model.teacher.num_parameters(),
        "student_backbone": model.student.num_parameters(),
    }
    for site, inductor in model.inductors.items():
        components[f"pi_{site}.pmg"] = inductor.pmg.num_parameters()
        components[f"pi_{site}.cmi"] = inductor.cmi.num_parameters()
    total = sum(components.values())
    return ParamCount(components=components, total=total, inference_total=total - components["teacher"])
