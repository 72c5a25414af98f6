import numpy as np
import pytest

from pivad.entities.entities import BackboneConfig, InductorConfig, ModalitySpec, ModelConfig
from pivad.exceptions import CheckpointError, CorruptBlockError, DigestMismatchError
from pivad.model.pivad import PiVadModel
from pivad.training.checkpoint import (
    load_checkpoint,
    load_teacher,
    read_checkpoint,
    save_checkpoint,
    save_teacher,
)
from pivad.training.optim import AdamState


def test_round_trip_reproduces_scores(tmp_path, model, videos):
    gamma = "student.blocks.0.norm1.gamma"
    state = AdamState(step=7, m={gamma: np.full(8, 0.25)}, v={gamma: np.full(8, 0.5)})
    path = save_checkpoint(model, tmp_path / "model.pvck", state)
    restored, restored_state = load_checkpoint(path, expected=model.config)
    assert restored.teacher_ready
    for video in videos:
        assert np.array_equal(restored.score_video(video), model.score_video(video))
    assert restored_state.step == 7
    assert np.array_equal(restored_state.m["student.blocks.0.norm1.gamma"], np.full(8, 0.25))
    assert np.array_equal(restored_state.v["student.blocks.0.norm1.gamma"], np.full(8, 0.5))


def test_identical_models_give_identical_bytes(tmp_path, model):
    first = save_checkpoint(model, tmp_path / "a.pvck").read_bytes()
    second = save_checkpoint(model, tmp_path / "b.pvck").read_bytes()
    assert first == second


def test_truncation_names_the_damaged_block(tmp_path, model):
    path = save_checkpoint(model, tmp_path / "model.pvck")
    path.write_bytes(path.read_bytes()[:-2])
    last_name = list(model.param_dict())[-1]
    with pytest.raises(CorruptBlockError) as info:
        load_checkpoint(path)
    assert info.value.block == last_name


def test_flipped_payload_byte_fails_checksum(tmp_path, model):
    path = save_checkpoint(model, tmp_path / "model.pvck")
    payload = bytearray(path.read_bytes())
    payload[len(payload) - 5] ^= 0xFF
    path.write_bytes(bytes(payload))
    with pytest.raises(CorruptBlockError) as info:
        load_checkpoint(path)
    assert "checksum" in str(info.value)


def test_architecture_mismatch(tmp_path, model, model_config):
    path = save_checkpoint(model, tmp_path / "model.pvck")
    wider = model_config.model_copy(update={"backbone": model_config.backbone.model_copy(update={"hidden_dim": 16})})
    with pytest.raises(DigestMismatchError):
        load_checkpoint(path, expected=wider)


def test_seed_is_not_part_of_the_digest(model_config):
    assert model_config.model_copy(update={"seed": 12345}).digest() == model_config.digest()


def test_teacher_round_trip_is_independent_of_modalities(tmp_path, teacher, model_config, videos):
    path = save_teacher(teacher, tmp_path / "teacher.pvck")
    other = ModelConfig(
        backbone=model_config.backbone,
        inductor=model_config.inductor.model_copy(update={"modalities": [ModalitySpec(name="O", dim=6)]}),
    )
    restored = load_teacher(path, expected=other.backbone)
    assert np.array_equal(restored.score_video(videos[0]), teacher.score_video(videos[0]))
    with pytest.raises(DigestMismatchError):
        load_teacher(path, expected=BackboneConfig())


def test_kind_is_checked(tmp_path, model, teacher):
    model_path = save_checkpoint(model, tmp_path / "model.pvck")
    teacher_path = save_teacher(teacher, tmp_path / "teacher.pvck")
    with pytest.raises(CheckpointError):
        load_teacher(model_path)
    with pytest.raises(CheckpointError):
        load_checkpoint(teacher_path)


def test_bad_magic_and_missing_file(tmp_path):
    path = tmp_path / "junk.pvck"
    path.write_bytes(b"NOPE" + bytes(64))
    with pytest.raises(CheckpointError):
        read_checkpoint(path)
    with pytest.raises(CheckpointError):
        read_checkpoint(tmp_path / "absent.pvck")


def _random_model_config(rng: np.random.Generator) -> ModelConfig:
    heads = int(rng.integers(1, 3))
    num_blocks = int(rng.integers(3, 5))
    names = ["P", "D", "M", "O", "txt"][: int(rng.integers(1, 4))]
    return ModelConfig(
        backbone=BackboneConfig(
            input_dim=int(rng.integers(1, 9)),
            hidden_dim=heads * int(rng.integers(1, 5)),
            num_blocks=num_blocks,
            early_site=1,
            late_site=int(rng.integers(2, num_blocks)),
            heads=heads,
            ffn_expansion=int(rng.integers(1, 3)),
        ),
        inductor=InductorConfig(
            latent_dim=int(rng.integers(1, 5)),
            modalities=[ModalitySpec(name=name, dim=int(rng.integers(1, 6))) for name in names],
        ),
        seed=int(rng.integers(2**31)),
    )


def test_random_models_round_trip_bitwise(tmp_path):
    for seed in range(100):
        rng = np.random.default_rng(seed)
        model = PiVadModel.build(_random_model_config(rng))
        params = model.param_dict()
        moments = [name for name in params if rng.random() < 0.2]
        state = AdamState(
            step=int(rng.integers(0, 1000)),
            m={name: rng.standard_normal(params[name].shape) for name in moments},
            v={name: rng.random(params[name].shape) for name in moments},
        )
        path = save_checkpoint(model, tmp_path / f"{seed}.pvck", state)
        restored, restored_state = load_checkpoint(path, expected=model.config)
        for name, tensor in restored.param_dict().items():
            assert tensor.data.tobytes() == params[name].data.tobytes(), name
        assert restored_state.step == state.step
        assert sorted(restored_state.m) == sorted(moments)
        for name in moments:
            assert restored_state.m[name].tobytes() == state.m[name].tobytes()
            assert restored_state.v[name].tobytes() == state.v[name].tobytes()
        assert save_checkpoint(restored, tmp_path / "again.pvck", restored_state).read_bytes() == path.read_bytes()
