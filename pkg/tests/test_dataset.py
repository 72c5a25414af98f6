import numpy as np
import pytest

from pivad.data.dataset import ManifestEntry, VideoRecord, load_dataset, read_manifest, split_by_label
from pivad.data.pvf import write_pvf
from pivad.data.synth import write_split
from pivad.entities.entities import VideoLabel
from pivad.exceptions import DatasetError


@pytest.fixture
def split_dir(tmp_path, train_records):
    write_split(train_records, tmp_path / "train")
    return tmp_path / "train"


def test_loads_every_manifest_entry(split_dir, train_records):
    records = load_dataset(split_dir / "manifest.tsv", rgb_dim=8, modality_dims={"P": 4, "D": 4})
    assert [r.video_id for r in records] == [r.video_id for r in train_records]
    assert [int(r.label) for r in records] == [0, 0, 0, 0, 1, 1, 1, 1]
    for loaded, original in zip(records, train_records):
        assert np.array_equal(loaded.rgb, original.rgb)
        assert np.array_equal(loaded.snippet_labels, original.snippet_labels)
        assert sorted(loaded.modalities) == ["D", "P"]
    normals, anomalies = split_by_label(records)
    assert len(normals) == len(anomalies) == 4


def test_missing_modality_file(split_dir, train_records):
    victim = train_records[5].video_id
    (split_dir / "modalities" / "P" / f"{victim}.pvf").unlink()
    with pytest.raises(DatasetError) as info:
        load_dataset(split_dir / "manifest.tsv")
    assert victim in str(info.value) and "'P'" in str(info.value)

    records = load_dataset(split_dir / "manifest.tsv", require_modalities=False)
    assert sorted(records[5].modalities) == ["D"]
    assert sorted(records[4].modalities) == ["D", "P"]


def test_modality_subset(split_dir):
    records = load_dataset(split_dir / "manifest.tsv", modalities=["D"])
    assert all(list(r.modalities) == ["D"] for r in records)


def test_rgb_dimension_mismatch_names_video(split_dir, train_records):
    with pytest.raises(DatasetError) as info:
        load_dataset(split_dir / "manifest.tsv", rgb_dim=16)
    assert train_records[0].video_id in str(info.value)


def test_missing_manifest(tmp_path):
    with pytest.raises(DatasetError):
        load_dataset(tmp_path / "nowhere" / "manifest.tsv")


def test_bad_label_field(tmp_path):
    (tmp_path / "manifest.tsv").write_text("v1\tnormal\t2\trgb/v1.pvf\t-\n", encoding="utf-8")
    with pytest.raises(DatasetError) as info:
        read_manifest(tmp_path / "manifest.tsv")
    assert "label" in str(info.value)


def test_duplicate_video(tmp_path):
    line = "v1\tnormal\t0\trgb/v1.pvf\t-\n"
    (tmp_path / "manifest.tsv").write_text(line + line, encoding="utf-8")
    with pytest.raises(DatasetError) as info:
        read_manifest(tmp_path / "manifest.tsv")
    assert "duplicate" in str(info.value)


def test_handwritten_manifest_without_labels(tmp_path):
    write_pvf(np.ones((3, 2)), tmp_path / "clip.pvf")
    write_pvf(np.zeros((3, 5)), tmp_path / "clip_pose.pvf")
    (tmp_path / "manifest.tsv").write_text("clip\tfighting\t1\tclip.pvf\t-\tP=clip_pose.pvf\n", encoding="utf-8")
    (record,) = load_dataset(tmp_path / "manifest.tsv")
    assert record.label == VideoLabel.ANOMALOUS and record.class_name == "fighting"
    assert record.snippet_labels is None
    assert record.modalities["P"].shape == (3, 5)


def test_manifest_line_parse():
    entry = ManifestEntry.from_line("a\tnormal\t0\trgb/a.pvf\tlabels/a.pvl\tD=d/a.pvf\tP=p/a.pvf", "m:1")
    assert entry.snippet_label_path == "labels/a.pvl"
    assert entry.modality_paths == {"D": "d/a.pvf", "P": "p/a.pvf"}
    assert ManifestEntry.from_line(entry.to_line(), "m:2") == entry
    with pytest.raises(DatasetError):
        ManifestEntry.from_line("a\tnormal\t0\trgb/a.pvf\t-\tP", "m:3")


def test_record_label_must_agree_with_snippet_labels():
    with pytest.raises(DatasetError):
        VideoRecord(video_id="v", rgb=np.ones((3, 2)), label=VideoLabel.NORMAL, snippet_labels=np.array([0, 1, 0]))
    with pytest.raises(DatasetError):
        VideoRecord(video_id="v", rgb=np.ones((3, 2)), label=VideoLabel.NORMAL, modalities={"P": np.ones((4, 2))})


def test_select_modalities_keeps_only_requested_streams(train_records):
    video = train_records[0]
    narrowed = video.select_modalities(["D", "absent"])
    assert list(narrowed.modalities) == ["D"]
    assert narrowed.rgb is video.rgb and narrowed.video_id == video.video_id
    assert sorted(video.modalities) == ["D", "P"]
