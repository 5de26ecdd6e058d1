import pytest

from synthsieve.errors import DataError
from synthsieve.manifest import (
    DatasetManifest,
    ImageSample,
    load_manifest,
    save_manifest,
)


def sample(i=0, **kw):
    defaults = dict(path=f"img_{i}.jpg", label=0, source="camera_proxy",
                    seed=i, quality=0.95, width=96, height=96)
    defaults.update(kw)
    return ImageSample(**defaults)


def test_round_trip(tmp_path):
    manifest = DatasetManifest(
        [sample(0), sample(1, label=1, source="text_overlay")],
        seed=7, config_digest="abc123")
    path = tmp_path / "manifest.jsonl"
    save_manifest(manifest, path)
    loaded = load_manifest(path)
    assert loaded.seed == 7
    assert loaded.config_digest == "abc123"
    assert loaded.base_dir == str(tmp_path)
    assert [s.path for s in loaded.samples] == ["img_0.jpg", "img_1.jpg"]
    assert loaded.samples[1].label == 1


def test_field_order_fixed(tmp_path):
    manifest = DatasetManifest([sample(0)], seed=1)
    path = tmp_path / "m.jsonl"
    save_manifest(manifest, path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith('{"manifest_version":1')
    assert lines[1].startswith('{"path":"img_0.jpg","label":0,"source":"camera_proxy",'
                               '"seed":0,"quality":0.95,"width":96,"height":96}')


def test_label_source_consistency():
    with pytest.raises(DataError, match="label 0"):
        sample(0, label=1).validate()
    with pytest.raises(DataError, match="label 1"):
        sample(0, source="stacked", label=0).validate()
    sample(0, source="external", label=1).validate()  # external is free


def test_duplicate_paths_rejected():
    manifest = DatasetManifest([sample(0), sample(0)])
    with pytest.raises(DataError, match="duplicate"):
        manifest.validate()


def test_both_labels_required_when_asked():
    manifest = DatasetManifest([sample(0), sample(1)])
    with pytest.raises(DataError, match="both classes"):
        manifest.validate(require_both_labels=True)


def test_bad_quality_rejected():
    with pytest.raises(DataError, match="quality"):
        sample(0, quality=0.0).validate()


def test_missing_fields_rejected(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"path":"x.jpg","label":0}\n')
    with pytest.raises(DataError, match="missing fields"):
        load_manifest(path)


def test_bad_json_rejected(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text("not json\n")
    with pytest.raises(DataError, match="bad JSON"):
        load_manifest(path)


def test_missing_file():
    with pytest.raises(DataError, match="cannot open"):
        load_manifest("/nonexistent/manifest.jsonl")


def test_label_soundness_audit():
    # construction audit: no generated source can carry the wrong label
    from synthsieve.manifest import LABEL_FOR_SOURCE
    n = 0
    for source, label in LABEL_FOR_SOURCE.items():
        for i in range(2500):
            sample(i, source=source, label=label).validate()
            with pytest.raises(DataError):
                sample(i, source=source, label=1 - label).validate()
            n += 1
    assert n == 10_000
