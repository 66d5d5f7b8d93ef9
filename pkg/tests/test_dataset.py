import json

import numpy as np
import pytest

from handfit.dataset import (
    AnnotationRecord,
    DatasetManifest,
    SynthRanges,
    load_manifest,
    record_params,
    reproject_keypoints,
    save_manifest,
    synth_dataset,
    synth_samples,
)
from handfit.errors import DimensionError, InvariantError, SchemaError
from handfit.imaging import colorize_silhouette, draw_overlay, load_image, load_mask, save_image, save_mask


def test_empty_dataset(tpl, tmp_path):
    manifest = synth_dataset(tpl, 0, out_dir=tmp_path)
    assert len(manifest) == 0
    assert load_manifest(tmp_path / "manifest.json").records == []


def test_synthetic_samples_are_self_consistent(tpl, tmp_path):
    written = synth_dataset(tpl, 6, seed=2, out_dir=tmp_path, mask_format="pgm")
    loaded = load_manifest(tmp_path / "manifest.json")
    assert len(loaded) == len(written) == 6
    for rec in loaded.records:
        params = record_params(rec)
        assert np.abs(reproject_keypoints(rec.keypoints_3d, params.view) - rec.keypoints_2d).max() < 1e-9
        mask = loaded.load_mask(rec)
        assert mask.shape == (64, 64) and mask.any()
        assert load_image(loaded.resolve(rec.image)).shape == (64, 64, 3)
    assert (tmp_path / "masks" / "00000.pgm").read_bytes()[:2] == b"P5"


def test_same_seed_same_dataset(tpl, tmp_path):
    synth_dataset(tpl, 3, seed=9, out_dir=tmp_path / "a")
    synth_dataset(tpl, 3, seed=9, out_dir=tmp_path / "b")
    for rel in ("manifest.json", "images/00001.png", "masks/00002.png"):
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_samples_within_ranges(tpl):
    ranges = SynthRanges()
    for smp in synth_samples(tpl, 10, ranges, seed=1):
        v = smp.params.view
        assert ranges.tx[0] <= v.t[0] <= ranges.tx[1] and ranges.s[0] <= v.s <= ranges.s[1]
        assert np.abs(smp.params.beta).max() <= 1.0
        rows, cols = np.nonzero(smp.mask)
        # the hand stays inside the frame
        assert rows.min() > 0 and cols.min() > 0 and rows.max() < 63 and cols.max() < 63
    with pytest.raises(InvariantError):
        SynthRanges(s=(0.0, 0.1))
    with pytest.raises(InvariantError):
        SynthRanges(tx=(5.0, 1.0))


def test_record_validation():
    with pytest.raises(DimensionError):
        AnnotationRecord("a", None, np.zeros((20, 2)))
    with pytest.raises(DimensionError):
        AnnotationRecord("a", None, np.zeros((21, 2)), np.zeros((21, 2)))
    with pytest.raises(SchemaError):
        AnnotationRecord.from_dict({"image": "x.png"})
    with pytest.raises(InvariantError):
        DatasetManifest([AnnotationRecord("a", None, np.zeros((21, 2)))] * 2)
    rec = AnnotationRecord("a", "img.png", np.ones((21, 2)), np.ones((21, 3)), "m.png")
    back = AnnotationRecord.from_dict(json.loads(json.dumps(rec.to_dict())))
    assert back.sample_id == "a" and np.array_equal(back.keypoints_3d, rec.keypoints_3d)


def test_manifest_missing_files(tmp_path):
    manifest = DatasetManifest([AnnotationRecord("a", "nope.png", np.zeros((21, 2)))])
    path = save_manifest(manifest, tmp_path / "m.json")
    with pytest.raises(FileNotFoundError):
        load_manifest(path)
    assert len(load_manifest(path, check_files=False)) == 1
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(SchemaError):
        load_manifest(tmp_path / "bad.json")
    with pytest.raises(FileNotFoundError):
        load_manifest(tmp_path / "absent.json")


def test_image_and_mask_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    mask = (rng.random((12, 9)) > 0.5).astype(float)
    for name in ("m.png", "m.pgm"):
        save_mask(tmp_path / name, mask)
        assert np.array_equal(load_mask(tmp_path / name), mask)
    rgb = rng.integers(0, 256, (12, 9, 3), dtype=np.uint8)
    save_image(tmp_path / "i.png", rgb)
    assert np.array_equal(load_image(tmp_path / "i.png"), rgb)
    with pytest.raises(FileNotFoundError):
        load_mask(tmp_path / "none.png")


def test_overlay_keeps_dimensions():
    base = colorize_silhouette(np.eye(20))
    assert base.shape == (20, 20, 3) and base.dtype == np.uint8
    out = draw_overlay(base, np.array([[5.0, 5.0]]), np.eye(20), np.array([[10.0, 10.0]]))
    assert out.shape == base.shape
    gray = draw_overlay(np.zeros((15, 17)), np.array([[3.0, 4.0]]))
    assert gray.shape == (15, 17, 3)
