import json
import shutil

import numpy as np
import pytest

from pivad.cli import EVAL_REPORT, MODEL_FILE, SCORE_HEADER, TEACHER_FILE, TRAINING_LOG, run
from pivad.data.dataset import load_dataset
from pivad.entities.entities import ForwardMode, ModalitySource, SiteSelection
from pivad.training.checkpoint import load_checkpoint
from pivad.utils.config_utils import EFFECTIVE_CONFIG_NAME


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture
def data_dir(tmp_path, config_file):
    out = tmp_path / "data"
    assert run(["gen-data", "--config", str(config_file), "--out", str(out)]) == 0
    return out


@pytest.fixture
def trained(tmp_path, config_file, data_dir):
    out = tmp_path / "run"
    common = ["--config", str(config_file), "--out", str(out), "--data", str(data_dir)]
    assert run(["pretrain-teacher", *common]) == 0
    assert run(["train", *common, "--tau", "0.5"]) == 0
    return out


def test_gen_data_is_reproducible(tmp_path, config_file):
    for name in ("a", "b"):
        assert run(["gen-data", "--config", str(config_file), "--seed", "7", "--out", str(tmp_path / name)]) == 0
    assert _tree(tmp_path / "a") == _tree(tmp_path / "b")
    assert (tmp_path / "a" / "train" / "manifest.tsv").is_file()
    assert (tmp_path / "a" / "test" / "manifest.tsv").is_file()
    effective = json.loads((tmp_path / "a" / "effective_config.json").read_text(encoding="utf-8"))
    assert effective["synth"]["seed"] == 7


def test_full_pipeline(trained, config_file, data_dir):
    assert (trained / TEACHER_FILE).is_file()
    assert (trained / MODEL_FILE).is_file()
    assert len((trained / TRAINING_LOG).read_text(encoding="utf-8").splitlines()) == 4

    common = ["--config", str(config_file), "--out", str(trained), "--data", str(data_dir)]
    assert run(["eval", *common]) == 0
    report = json.loads((trained / EVAL_REPORT).read_text(encoding="utf-8"))
    assert 0.0 <= report["auc"] <= 1.0 and len(report["videos"]) == 6

    assert run(["eval", *common, "--teacher-only"]) == 0

    assert run(["infer", *common]) == 0
    score_files = sorted((trained / "scores").glob("*.txt"))
    assert len(score_files) == 6
    lines = score_files[0].read_text(encoding="utf-8").splitlines()
    assert lines[0] == f"{SCORE_HEADER}\t{score_files[0].stem}\t8"
    assert all(0.0 <= float(value) <= 1.0 for value in lines[1:]) and len(lines) == 9

    assert run(["export-activations", *common]) == 0
    tables = sorted((trained / "activations").glob("*.tsv"))
    assert len(tables) == 12
    rows = tables[0].read_text(encoding="utf-8").splitlines()
    assert rows[0] == "P\tD"
    assert len(rows) == 9 and all(len(row.split("\t")) == 2 for row in rows[1:])

    summary = ["summary", "--config", str(config_file), "--out", str(trained)]
    assert run([*summary, "--checkpoint", str(trained / MODEL_FILE)]) == 0


def test_inference_ignores_modality_files(tmp_path, trained, config_file, data_dir):
    common = ["--config", str(config_file), "--data", str(data_dir)]
    assert run(["infer", *common, "--out", str(trained)]) == 0
    shutil.rmtree(data_dir / "test" / "modalities")
    second = tmp_path / "second"
    assert run(["infer", *common, "--out", str(second), "--checkpoint", str(trained / MODEL_FILE)]) == 0
    assert _tree(trained / "scores") == _tree(second / "scores")


def test_train_without_teacher(tmp_path, caplog, config_file, data_dir):
    code = run(["train", "--config", str(config_file), "--out", str(tmp_path / "empty"), "--data", str(data_dir)])
    assert code == 2
    assert "teacher" in caplog.text


def test_usage_errors(capsys):
    assert run(["no-such-command"]) == 1
    assert run(["--help"]) == 0
    assert run(["eval"]) == 1
    capsys.readouterr()


def test_invalid_override_is_a_runtime_error(tmp_path, caplog):
    assert run(["summary", "--tau", "-1", "--out", str(tmp_path)]) == 2
    assert "tau" in caplog.text


def test_grad_check_command(tmp_path, capsys):
    assert run(["grad-check", "--seeds", "1", "--out", str(tmp_path)]) == 0
    assert "l_second[0]" in capsys.readouterr().out
    assert (tmp_path / "grad_check.json").is_file()


def test_exported_activations_match_a_fresh_forward_pass(trained, config_file, data_dir):
    common = ["--config", str(config_file), "--out", str(trained), "--data", str(data_dir)]
    assert run(["export-activations", *common]) == 0
    model, _ = load_checkpoint(trained / MODEL_FILE)
    for video in load_dataset(data_dir / "test" / "manifest.tsv", require_modalities=False, modalities=[]):
        trace = model.forward(video, ForwardMode.INFER, ModalitySource.PSEUDO, SiteSelection.BOTH)
        for site, site_trace in trace.sites.items():
            lines = (trained / "activations" / f"{video.video_id}.{site}.tsv").read_text(encoding="utf-8").splitlines()
            stored = np.array([[float(v) for v in line.split("\t")] for line in lines[1:]])
            np.testing.assert_allclose(stored, site_trace.activations, rtol=0.0, atol=1e-12)


def test_full_pipeline_is_byte_reproducible(tmp_path, config_file):
    outputs = []
    for name in ("first", "second"):
        data, out = tmp_path / name / "data", tmp_path / name / "run"
        common = ["--config", str(config_file), "--out", str(out), "--data", str(data)]
        assert run(["gen-data", "--config", str(config_file), "--out", str(data)]) == 0
        assert run(["pretrain-teacher", *common]) == 0
        assert run(["train", *common]) == 0
        assert run(["eval", *common]) == 0
        outputs.append({f: (out / f).read_bytes() for f in (TEACHER_FILE, MODEL_FILE, TRAINING_LOG, EVAL_REPORT)})
    assert outputs[0] == outputs[1]


@pytest.mark.parametrize(
    "argv",
    [
        ["summary"],
        ["grad-check", "--seeds", "0"],
    ],
)
def test_every_command_echoes_its_config(tmp_path, config_file, argv):
    out = tmp_path / "echo"
    assert run([*argv, "--config", str(config_file), "--out", str(out)]) == 0
    assert json.loads((out / EFFECTIVE_CONFIG_NAME).read_text(encoding="utf-8"))["log_level"] == "WARNING"


def test_evaluation_commands_echo_their_config(tmp_path, trained, config_file, data_dir):
    for command in ("eval", "infer", "export-activations"):
        out = tmp_path / command
        argv = [command, "--config", str(config_file), "--out", str(out), "--data", str(data_dir)]
        assert run([*argv, "--checkpoint", str(trained / MODEL_FILE)]) == 0
        assert (out / EFFECTIVE_CONFIG_NAME).is_file()
