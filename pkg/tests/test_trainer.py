import logging

import numpy as np
import pytest
from builders import tiny_train_config

from pivad.entities.entities import (
    BatchComposition,
    LossWeights,
    RunnerStatus,
    StageEpochs,
    StageFlag,
    StageRates,
)
from pivad.exceptions import TrainingError
from pivad.model.pivad import PiVadModel
from pivad.training.checkpoint import save_teacher
from pivad.training.trainer import PivadTrainer, TrainingLogWriter


def _collect(trainer, event_type):
    seen = []
    trainer.on(event_type, lambda event: seen.append(event["data"]))
    return seen


class TestBatches:
    def test_balanced_and_deterministic(self, train_config, train_records):
        trainer = PivadTrainer(train_config)
        first = [[v.video_id for v in b] for b in trainer.batches(train_records, "main", 0)]
        again = [[v.video_id for v in b] for b in trainer.batches(train_records, "main", 0)]
        assert first == again
        assert len(first) == 2
        for batch in first:
            assert sum("normal" in vid for vid in batch) == 2
            assert sum("anomalous" in vid for vid in batch) == 2
        assert sorted(vid for batch in first for vid in batch) == sorted(v.video_id for v in train_records)

    def test_shorter_class_cycles(self, train_config, train_records):
        trainer = PivadTrainer(train_config)
        fewer_anomalies = train_records[:4] + train_records[4:5]
        batches = list(trainer.batches(fewer_anomalies, "main", 0))
        assert len(batches) == 2
        assert all(b[-1].video_id == train_records[4].video_id for b in batches)

    def test_single_class_dataset(self, train_config, train_records):
        with pytest.raises(TrainingError) as info:
            list(PivadTrainer(train_config).batches(train_records[:4], "pretrain", 0))
        assert "anomalous" in str(info.value)


class TestTeacherPretraining:
    def test_same_seed_same_teacher_bytes(self, tmp_path, train_config, model_config, train_records):
        first = PivadTrainer(train_config).pretrain_teacher(train_records, model_config)
        second = PivadTrainer(train_config).pretrain_teacher(train_records, model_config)
        a = save_teacher(first, tmp_path / "a.pvck").read_bytes()
        b = save_teacher(second, tmp_path / "b.pvck").read_bytes()
        assert a == b

    def test_zero_epochs(self, train_config, model_config, train_records):
        trainer = PivadTrainer(train_config)
        with pytest.raises(TrainingError):
            trainer.pretrain_teacher(train_records, model_config, epochs=0)
        assert trainer.status == RunnerStatus.ERROR

    def test_full_batch_loss_decreases(self, model_config, train_records):
        config = tiny_train_config(
            batch=BatchComposition(normals=4, anomalies=4),
            epochs=StageEpochs(pretrain=20, warmup=1, main=1),
            learning_rates=StageRates(pretrain=1e-2),
        )
        trainer = PivadTrainer(config)
        steps = _collect(trainer, "step_completed")
        trainer.pretrain_teacher(train_records, model_config)
        assert len(steps) == 20
        assert steps[-1]["total"] < steps[0]["total"]

    def test_log_is_reproducible(self, tmp_path, train_config, model_config, train_records):
        payloads = []
        for name in ("a.log", "b.log"):
            trainer = PivadTrainer(train_config)
            writer = TrainingLogWriter(tmp_path / name)
            trainer.on("step_completed", writer)
            trainer.pretrain_teacher(train_records, model_config)
            writer.close()
            payloads.append((tmp_path / name).read_bytes())
        assert payloads[0] == payloads[1]
        lines = payloads[0].decode("utf-8").splitlines()
        assert len(lines) == 2
        assert all(len(line.split("\t")) == 6 for line in lines)
        assert lines[0].split("\t")[0] == "1"


class TestStudentStages:
    def test_warmup_leaves_teacher_and_head_untouched(self, train_config, model, train_records):
        frozen = {
            name: t.data.copy()
            for name, t in model.named_parameters()
            if name.startswith("teacher.") or name.startswith("student.head.")
        }
        PivadTrainer(train_config).warmup_stage(model, train_records)
        current = model.param_dict()
        assert all(np.array_equal(values, current[name].data) for name, values in frozen.items())
        assert model.stage == StageFlag.WARMED_UP

    def test_warmup_needs_teacher(self, train_config, model_config, train_records):
        with pytest.raises(TrainingError):
            PivadTrainer(train_config).warmup_stage(PiVadModel.build(model_config), train_records)

    def test_unwarmed_main_stage(self, caplog, train_config, model, train_records):
        with pytest.raises(TrainingError):
            PivadTrainer(train_config).main_stage(model, train_records)
        with caplog.at_level(logging.WARNING, logger="pivad.training.trainer"):
            PivadTrainer(train_config).main_stage(model, train_records, allow_unwarmed=True)
        assert "unwarmed" in caplog.text
        assert model.stage == StageFlag.TRAINED

    def test_zero_lambdas_reduce_to_mil_plus_pmg(self, model, train_records):
        trainer = PivadTrainer(tiny_train_config(loss_weights=LossWeights(lambda1=0.0, lambda2=0.0, tau=0.5)))
        steps = _collect(trainer, "step_completed")
        trainer.main_stage(model, train_records, allow_unwarmed=True)
        assert steps
        for values in steps:
            assert values["stage"] == "main"
            assert values["total"] == pytest.approx(values["l_mil"] + values["l_pmg"], rel=1e-12)
            assert values["l_align"] > 0.0

    def test_events_and_status_sequence(self, train_config, model, train_records):
        trainer = PivadTrainer(train_config)
        transitions = []
        trainer.on("status_changed", lambda e: transitions.append(e["data"]["current_status"]))
        epochs = _collect(trainer, "epoch_completed")
        steps = _collect(trainer, "step_completed")
        trainer.train(model, train_records)
        assert transitions == [
            RunnerStatus.WORKING,
            RunnerStatus.WAITING,
            RunnerStatus.WORKING,
            RunnerStatus.WAITING,
            RunnerStatus.COMPLETED,
        ]
        assert [e["stage"] for e in epochs] == ["warmup", "main"]
        assert [s["step"] for s in steps] == [1, 2, 3, 4]
        assert trainer.global_step == 4
