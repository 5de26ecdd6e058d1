import numpy as np
import pytest
from scipy import ndimage

from synthsieve import datagen, features
from synthsieve.errors import DataError, ShapeError
from synthsieve.imageio import psnr
from synthsieve.manifest import load_manifest


# --- camera proxies -----------------------------------------------------------

def test_camera_proxy_deterministic():
    a = datagen.gen_camera_proxy(42, 128)
    b = datagen.gen_camera_proxy(42, 128)
    assert np.array_equal(a, b)
    c = datagen.gen_camera_proxy(43, 128)
    assert not np.array_equal(a, c)


def test_camera_proxy_min_size():
    with pytest.raises(ValueError, match=">= 64"):
        datagen.gen_camera_proxy(0, 32)


def test_camera_proxy_no_saturated_uniform_region():
    for seed in range(5):
        img = datagen.gen_camera_proxy(seed, 128)
        n = img.shape[0] * img.shape[1]
        packed = (img[..., 0].astype(np.int64) << 16) | \
                 (img[..., 1].astype(np.int64) << 8) | img[..., 2].astype(np.int64)
        values, counts = np.unique(packed, return_counts=True)
        for v in values[counts >= 0.01 * n]:
            labeled, num = ndimage.label(packed == v)
            sizes = ndimage.sum(packed == v, labeled, range(1, num + 1))
            assert (np.max(sizes) if num else 0) < 0.01 * n


def test_camera_vs_synthetic_residual_energy_separation():
    cams = []
    syns = []
    kinds = ("text_overlay", "stacked", "flat_synthetic")
    for i in range(40):
        cam = datagen.gen_camera_proxy(7000 + i, 96)
        cams.append((features.residual_filter(features.rgb_to_gray(cam),
                                              "square_3x3") ** 2).mean())
        syn = datagen.gen_synthetic_proxy(7000 + i, 96, kinds[i % 3])
        syns.append((features.residual_filter(features.rgb_to_gray(syn),
                                              "square_3x3") ** 2).mean())
    assert np.mean(cams) < np.mean(syns)


# --- text overlay ----------------------------------------------------------------

def test_overlay_locality():
    base = datagen.gen_camera_proxy(1, 96)
    region = (10, 5, 20, 80)
    style = datagen.TextStyle(scale=1, color=(0, 0, 0), boxed=True)
    out = datagen.overlay_text(base, "hello", region, style)
    mask = np.zeros(base.shape[:2], bool)
    mask[10:30, 5:85] = True
    assert np.array_equal(out[~mask], base[~mask])
    assert not np.array_equal(out[mask], base[mask])


def test_overlay_boxed_strip_is_uniform_except_glyphs():
    base = datagen.gen_camera_proxy(2, 96)
    region = (40, 0, 15, 96)
    style = datagen.TextStyle(scale=1, color=(10, 10, 10), boxed=True,
                              box_color=(250, 250, 250))
    out = datagen.overlay_text(base, "AB", region, style)
    strip = out[40:55, :96].reshape(-1, 3)
    colors = {tuple(c) for c in strip}
    assert colors <= {(250, 250, 250), (10, 10, 10)}


def test_overlay_errors():
    base = datagen.gen_camera_proxy(3, 96)
    style = datagen.TextStyle()
    with pytest.raises(DataError, match="out of bounds"):
        datagen.overlay_text(base, "hi", (90, 0, 20, 30), style)
    with pytest.raises(ValueError, match="non-empty"):
        datagen.overlay_text(base, "", (0, 0, 20, 30), style)


def test_overlay_adds_residual_energy_inside_strip():
    base = datagen.gen_camera_proxy(4, 96)
    region = (30, 0, 15, 96)
    style = datagen.TextStyle(scale=1, color=(0, 0, 0), boxed=True)
    out = datagen.overlay_text(base, "sharp text", region, style)
    res_base = features.residual_filter(features.rgb_to_gray(base), "square_3x3")
    res_out = features.residual_filter(features.rgb_to_gray(out), "square_3x3")
    inside = slice(30, 45)
    assert (res_out[inside] ** 2).sum() > 5.0 * (res_base[inside] ** 2).sum()


# --- stacking ---------------------------------------------------------------------

def test_stack_2x2_dimensions():
    tiles = [datagen.gen_camera_proxy(i, 112) for i in range(4)]
    out = datagen.stack_images(tiles, (2, 2))
    assert out.shape == (224, 224, 3)
    assert np.array_equal(out[:112, :112], tiles[0])
    assert np.array_equal(out[112:, 112:], tiles[3])


def test_stack_1x2_height_width_convention():
    # 100x50 tiles in one row of two -> 100x100 (height x width)
    tiles = [np.full((100, 50, 3), 10, np.uint8), np.full((100, 50, 3), 200, np.uint8)]
    out = datagen.stack_images(tiles, (1, 2))
    assert out.shape == (100, 100, 3)


def test_stack_seam_residual():
    left = np.full((60, 30, 3), 20, np.uint8)
    right = np.full((60, 30, 3), 220, np.uint8)
    out = datagen.stack_images([left, right], (1, 2))
    res = features.residual_filter(features.rgb_to_gray(out), "first_order")
    seam_cols = set(np.nonzero(res)[1].tolist())
    assert seam_cols and seam_cols <= {29, 30}
    interior = np.concatenate([res[:, 2:28], res[:, 32:58]], axis=1)
    assert np.all(interior == 0.0)


def test_stack_errors():
    tiles = [np.zeros((10, 10, 3), np.uint8)] * 3
    with pytest.raises(ShapeError, match="needs 4"):
        datagen.stack_images(tiles, (2, 2))
    bad = [np.zeros((10, 10, 3), np.uint8), np.zeros((12, 10, 3), np.uint8)]
    with pytest.raises(ShapeError, match="share one shape"):
        datagen.stack_images(bad, (1, 2))


# --- synthetic kinds ---------------------------------------------------------------

def test_synthetic_kinds_deterministic_and_labeled():
    for kind in ("text_overlay", "stacked", "flat_synthetic"):
        a = datagen.gen_synthetic_proxy(9, 96, kind)
        b = datagen.gen_synthetic_proxy(9, 96, kind)
        assert np.array_equal(a, b), kind
        assert datagen.LABEL_FOR_SOURCE[kind] == 1
    with pytest.raises(ValueError, match="unknown synthetic kind"):
        datagen.gen_synthetic_proxy(0, 96, "gan")


def test_flat_synthetic_low_color_ratio():
    ratios = [features.extract_features(
        datagen.gen_synthetic_proxy(100 + i, 224, "flat_synthetic")).color_ratio
        for i in range(5)]
    assert np.mean(ratios) < 0.05


# --- JPEG re-encode ----------------------------------------------------------------

def test_reencode_preserves_dims_across_quality_grid():
    img = datagen.gen_camera_proxy(5, 96)
    for q in (0.45, 0.55, 0.65, 0.75, 0.85, 0.95):
        out = datagen.reencode_jpeg(img, q)
        assert out.shape == img.shape


def test_reencode_quality_ordering():
    deltas = []
    for i in range(50):
        img = datagen.gen_camera_proxy(600 + i, 96)
        deltas.append(psnr(img, datagen.reencode_jpeg(img, 0.85))
                      - psnr(img, datagen.reencode_jpeg(img, 0.45)))
    assert np.mean(deltas) > 0


def test_reencode_near_lossless_at_full_quality():
    vals = [psnr(datagen.gen_camera_proxy(700 + i, 96),
                 datagen.reencode_jpeg(datagen.gen_camera_proxy(700 + i, 96), 1.0))
            for i in range(5)]
    assert np.mean(vals) > 40.0


def test_reencode_quality_range():
    img = datagen.gen_camera_proxy(6, 96)
    with pytest.raises(ValueError, match="quality"):
        datagen.reencode_jpeg(img, 0.0)
    with pytest.raises(ValueError, match="quality"):
        datagen.reencode_jpeg(img, 1.5)


# --- dataset assembly ---------------------------------------------------------------

def test_make_dataset_manifest_and_balance(tmp_path):
    config = datagen.DatasetConfig(
        counts={"camera_proxy": 6, "text_overlay": 3, "stacked": 2, "flat_synthetic": 1},
        size=96, seed=5)
    manifest = datagen.make_dataset(config, str(tmp_path / "d"))
    assert len(manifest.samples) == 12
    assert len({s.path for s in manifest.samples}) == 12
    labels = [s.label for s in manifest.samples]
    assert labels.count(0) == 6 and labels.count(1) == 6
    for s in manifest.samples:
        assert s.quality == 0.95
        assert (tmp_path / "d" / s.path).exists()


def test_make_dataset_reruns_byte_identical(tmp_path):
    config = datagen.DatasetConfig(
        counts={"camera_proxy": 3, "text_overlay": 2, "stacked": 1, "flat_synthetic": 1},
        size=96, seed=8)
    datagen.make_dataset(config, str(tmp_path / "a"))
    datagen.make_dataset(config, str(tmp_path / "b"))
    man_a = (tmp_path / "a" / "manifest.jsonl").read_bytes()
    man_b = (tmp_path / "b" / "manifest.jsonl").read_bytes()
    assert man_a == man_b
    for s in load_manifest(str(tmp_path / "a" / "manifest.jsonl")).samples:
        assert (tmp_path / "a" / s.path).read_bytes() == (tmp_path / "b" / s.path).read_bytes()


def test_make_dataset_masters(tmp_path):
    config = datagen.DatasetConfig(counts={"camera_proxy": 2}, size=96, seed=1,
                                   keep_masters=True)
    datagen.make_dataset(config, str(tmp_path / "m"))
    assert (tmp_path / "m" / "masters" / "camera_proxy_00000.png").exists()


def test_make_dataset_rejects_bad_counts(tmp_path):
    with pytest.raises(DataError, match="unknown source"):
        datagen.make_dataset(datagen.DatasetConfig(counts={"webcam": 1}), str(tmp_path))
    with pytest.raises(DataError, match=">= 1"):
        datagen.make_dataset(datagen.DatasetConfig(counts={"camera_proxy": 0}),
                             str(tmp_path))


def test_balanced_counts_sum():
    for total in (10, 2500, 2501, 37):
        counts = datagen.balanced_counts(total)
        assert sum(counts.values()) == total
        synthetic = total - counts["camera_proxy"]
        assert counts["camera_proxy"] in (total // 2, (total + 1) // 2)
        assert (counts["text_overlay"] + counts["stacked"]
                + counts["flat_synthetic"]) == synthetic
