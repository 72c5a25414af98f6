"""
Pivad trainer.

Three stages, each an Adam loop over class-balanced batches:

    🔹 pretrain_teacher: PI-free backbone on the MIL loss; becomes the frozen teacher
    🔹 warmup_stage: student + inductors on l_pmg + l_align + l_distill (no MIL)
    🔹 main_stage: student + inductors on l_mil + λ1 l_align + λ2 l_distill + l_pmg

Every optimizer step emits ``step_completed`` with the loss breakdown; the
training-log file is just a listener on that event.
"""

import logging
import math
from pathlib import Path
from typing import IO, Iterator, List, Optional, Sequence, Union

from tqdm import tqdm

from pivad.autograd import Tensor
from pivad.data.dataset import VideoRecord, split_by_label
from pivad.entities.base_runner import PivadBaseRunner
from pivad.entities.entities import (
    ForwardMode,
    LossBreakdown,
    ModelConfig,
    RunnerEvent,
    RunnerStatus,
    StageFlag,
    TrainConfig,
)
from pivad.exceptions import TrainingError
from pivad.model.backbone import Backbone
from pivad.model.pivad import PiVadModel
from pivad.nn import init_params
from pivad.objectives.losses import LossComputer, LossParts, breakdown, l_mil
from pivad.utils.utils import format_float, rng_for

from .optim import Adam

logger = logging.getLogger(__name__)

LOG_FIELDS = ("l_mil", "l_align", "l_distill", "l_pmg", "total")


class TrainingLogWriter:
    """Listener writing one tab-separated line per ``step_completed`` event."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._handle: Optional[IO[str]] = self.path.open("w", encoding="utf-8", newline="\n")

    def __call__(self, event: RunnerEvent) -> None:
        if self._handle is None:
            return
        data = event["data"]
        fields = [str(data["step"])] + [format_float(data[name]) for name in LOG_FIELDS]
        self._handle.write("\t".join(fields) + "\n")

    def close(self) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None


class PivadTrainer(PivadBaseRunner):
    def __init__(self, config: TrainConfig, rid: Optional[str] = None):
        super().__init__(rid=rid or "trainer")
        self.config = config
        self.global_step = 0
        self.optimizer: Optional[Adam] = None

    # *** batching ***
    def batches(self, records: Sequence[VideoRecord], stage: str, epoch: int) -> Iterator[List[VideoRecord]]:
        """
        Class-balanced batches for one epoch.

        Normals and anomalies are shuffled separately with a seed derived from
        (seed, stage, epoch); the shorter list cycles until the longer is used up.
        """
        normals, anomalies = split_by_label(records)
        if not normals or not anomalies:
            missing = "normal" if not normals else "anomalous"
            raise TrainingError(f"{stage}: dataset has no {missing} videos; MIL needs both classes")
        rng = rng_for(self.config.seed, stage, epoch)
        normal_order = rng.permutation(len(normals))
        anomaly_order = rng.permutation(len(anomalies))
        per_normal, per_anomaly = self.config.batch.normals, self.config.batch.anomalies
        count = max(math.ceil(len(normals) / per_normal), math.ceil(len(anomalies) / per_anomaly))
        for index in range(count):
            batch = [normals[normal_order[(index * per_normal + i) % len(normals)]] for i in range(per_normal)]
            batch += [
                anomalies[anomaly_order[(index * per_anomaly + i) % len(anomalies)]] for i in range(per_anomaly)
            ]
            yield batch

    def _epochs(self, stage: str, epochs: int):
        if epochs < 1:
            raise TrainingError(f"{stage}: epochs must be >= 1, got {epochs}")
        return tqdm(range(epochs), desc=stage, disable=not self.config.show_progress, leave=False)

    def _record_step(self, stage: str, values: LossBreakdown) -> None:
        if not math.isfinite(values["total"]):
            raise TrainingError(f"{stage}: non-finite loss at step {self.global_step}")
        self.global_step += 1
        self.emit("step_completed", {"stage": stage, "step": self.global_step, **values})

    def _run(self, stage: str, body) -> None:
        self.set_status(RunnerStatus.WORKING, stage=stage)
        try:
            body()
        except Exception as exc:
            self.set_status(RunnerStatus.ERROR, stage=stage, error=str(exc))
            raise
        self.set_status(RunnerStatus.WAITING, stage=stage)

    # *** stages ***
    def pretrain_teacher(
        self, dataset: Sequence[VideoRecord], model_config: ModelConfig, epochs: Optional[int] = None
    ) -> Backbone:
        """
        Train a PI-free backbone with the MIL loss only.

        Args:
            dataset: Training videos (both classes required)
            model_config: Architecture and init seed
            epochs: Overrides ``config.epochs.pretrain``

        Returns:
            Backbone: The pretrained teacher weights

        Raises:
            TrainingError: Single-class dataset or zero epochs
        """
        backbone = Backbone(model_config.backbone)
        init_params(backbone, model_config.seed, prefix="teacher.")
        optimizer = Adam(backbone.param_dict(), self.config.learning_rates.pretrain, self.config.adam)
        k_rule = self.config.loss_weights.k_rule
        total_epochs = self.config.epochs.pretrain if epochs is None else epochs

        def body() -> None:
            for epoch in self._epochs("pretrain", total_epochs):
                for batch in self.batches(dataset, "pretrain", epoch):
                    optimizer.zero_grad()
                    loss = l_mil([backbone(Tensor(v.rgb)) for v in batch], [v.label for v in batch], k_rule)
                    loss.backward()
                    optimizer.step()
                    value = loss.item()
                    self._record_step(
                        "pretrain", LossBreakdown(l_mil=value, l_align=0.0, l_distill=0.0, l_pmg=0.0, total=value)
                    )
                self.emit("epoch_completed", {"stage": "pretrain", "epoch": epoch})

        self._run("pretrain", body)
        self.optimizer = optimizer
        logger.info("teacher pretrained for %d epochs (%d steps)", total_epochs, optimizer.state.step)
        return backbone

    def _stage_loop(
        self, model: PiVadModel, dataset: Sequence[VideoRecord], stage: str, epochs: int, lr: float
    ) -> None:
        computer = LossComputer(self.config.loss_weights, self.config.components)
        optimizer = Adam(model.trainable_parameters(), lr, self.config.adam)
        with_mil = stage == "main"

        def body() -> None:
            for epoch in self._epochs(stage, epochs):
                for batch in self.batches(dataset, stage, epoch):
                    optimizer.zero_grad()
                    traces = [
                        model.forward(v, ForwardMode.TRAIN, self.config.modality_source, self.config.sites)
                        for v in batch
                    ]
                    parts: LossParts = computer.parts(traces, batch, with_mil=with_mil)
                    total = computer.second(parts) if with_mil else computer.first(parts)
                    if not isinstance(total, Tensor):
                        raise TrainingError(f"{stage}: every objective term is disabled")
                    total.backward()
                    optimizer.step()
                    self._record_step(stage, breakdown(parts, total))
                self.emit("epoch_completed", {"stage": stage, "epoch": epoch})

        self._run(stage, body)
        self.optimizer = optimizer

    def warmup_stage(
        self, model: PiVadModel, dataset: Sequence[VideoRecord], epochs: Optional[int] = None
    ) -> PiVadModel:
        """Warm the student and inductors up on ``l_first``; the head gets zero gradient."""
        if not model.teacher_ready:
            raise TrainingError("warm-up needs a pretrained teacher")
        self._stage_loop(
            model,
            dataset,
            "warmup",
            self.config.epochs.warmup if epochs is None else epochs,
            self.config.learning_rates.warmup,
        )
        model.stage = StageFlag.WARMED_UP
        return model

    def main_stage(
        self,
        model: PiVadModel,
        dataset: Sequence[VideoRecord],
        epochs: Optional[int] = None,
        allow_unwarmed: bool = False,
    ) -> PiVadModel:
        """
        Train on ``l_second``.

        Raises:
            TrainingError: If the model skipped warm-up and ``allow_unwarmed`` is False
        """
        if model.stage not in (StageFlag.WARMED_UP, StageFlag.TRAINED):
            if not allow_unwarmed:
                raise TrainingError("main stage on a model that was never warmed up; pass allow_unwarmed to proceed")
            logger.warning("main stage starting on an unwarmed model (stage=%s)", model.stage.value)
        self._stage_loop(
            model,
            dataset,
            "main",
            self.config.epochs.main if epochs is None else epochs,
            self.config.learning_rates.main,
        )
        model.stage = StageFlag.TRAINED
        return model

    def train(self, model: PiVadModel, dataset: Sequence[VideoRecord]) -> PiVadModel:
        """Warm-up then main stage."""
        self.warmup_stage(model, dataset)
        self.main_stage(model, dataset)
        self.set_status(RunnerStatus.COMPLETED)
        return model
