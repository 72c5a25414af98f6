from pathlib import Path
from typing import List

import numpy as np
import pytest
from builders import TINY_TOML, tiny_model_config, tiny_synth_config, tiny_train_config

from pivad.data.dataset import VideoRecord
from pivad.data.synth import synthesize_split
from pivad.entities.entities import ModelConfig, PivadConfig, SynthConfig, TrainConfig
from pivad.model.backbone import Backbone
from pivad.model.pivad import PiVadModel
from pivad.nn import init_params
from pivad.training.grad_suite import tiny_videos


@pytest.fixture
def model_config() -> ModelConfig:
    return tiny_model_config(seed=3)


@pytest.fixture
def synth_config() -> SynthConfig:
    return tiny_synth_config()


@pytest.fixture
def train_config() -> TrainConfig:
    return tiny_train_config()


@pytest.fixture
def pivad_config(model_config, synth_config, train_config) -> PivadConfig:
    return PivadConfig(model=model_config, train=train_config, synth=synth_config)


@pytest.fixture
def train_records(synth_config) -> List[VideoRecord]:
    return synthesize_split(synth_config, "train")


@pytest.fixture
def test_records(synth_config) -> List[VideoRecord]:
    return synthesize_split(synth_config, "test")


@pytest.fixture
def videos() -> List[VideoRecord]:
    return tiny_videos(np.random.default_rng(11), steps=6)


@pytest.fixture
def teacher(model_config) -> Backbone:
    backbone = Backbone(model_config.backbone)
    init_params(backbone, 99, prefix="teacher.")
    return backbone


@pytest.fixture
def model(model_config, teacher) -> PiVadModel:
    built = PiVadModel.build(model_config)
    built.load_teacher(teacher)
    return built


@pytest.fixture
def config_file(tmp_path) -> Path:
    path = tmp_path / "tiny.toml"
    path.write_text(TINY_TOML, encoding="utf-8")
    return path
