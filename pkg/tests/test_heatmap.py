import numpy as np
import pytest

from synthsieve import heatmap, models
from synthsieve.imageio import load_image_array


def test_normalize_flat_map_is_zero():
    flat = np.full((4, 4), 3.7)
    assert np.all(heatmap.normalize_heat(flat) == 0.0)


def test_normalize_range():
    m = heatmap.normalize_heat(np.array([[1.0, 3.0], [5.0, 2.0]]))
    assert m.min() == 0.0 and m.max() == 1.0


def test_upsample_one_hot_block():
    grid = np.zeros((4, 4))
    grid[1, 2] = 1.0
    up = heatmap.upsample_nearest(grid, 16)
    assert up.shape == (16, 16)
    block = up[4:8, 8:12]
    assert np.all(block == 1.0)
    assert up.sum() == block.sum()


def test_colormap_endpoints():
    rgb = heatmap.heat_to_rgb(np.array([[0.0, 0.5, 1.0]]))
    assert tuple(rgb[0, 0]) == (0, 0, 128)    # dark blue lowest
    assert tuple(rgb[0, 1]) == (0, 255, 255)  # cyan midpoint
    assert tuple(rgb[0, 2]) == (255, 0, 0)    # red highest


def test_aggregations():
    act = np.zeros((2, 2, 3))
    act[0, 0] = [1.0, -5.0, 0.0]
    mean_map = heatmap.aggregate_activations(act, "mean")
    max_map = heatmap.aggregate_activations(act, "max")
    assert mean_map[0, 0] == pytest.approx(2.0)
    assert max_map[0, 0] == 5.0
    with pytest.raises(ValueError, match="aggregation"):
        heatmap.aggregate_activations(act, "median")


def test_constant_activation_renders_single_color(tmp_path):
    model = models.build_model("dws1", seed=0, input_side=64)
    image = np.zeros((64, 64, 3), np.float32)
    out = tmp_path / "heat.png"
    heat = heatmap.export_heatmap(model, image, out)
    assert np.all(heat == 0.0)
    rendered = load_image_array(out)
    assert rendered.shape == (64, 64, 3)
    assert {tuple(c) for c in rendered.reshape(-1, 3)} == {(0, 0, 128)}


def test_export_heatmap_size_and_determinism(tmp_path):
    model = models.build_model("dws1", seed=1, input_side=64)
    rng = np.random.default_rng(2)
    image = rng.random((64, 64, 3), dtype=np.float32)
    a = heatmap.export_heatmap(model, image, tmp_path / "a.png")
    b = heatmap.export_heatmap(model, image, tmp_path / "b.png")
    assert np.array_equal(a, b)
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()


def test_heatmap_rejects_full_conv_models():
    model = models.build_model("fconv5", seed=0, input_side=64)
    with pytest.raises(ValueError, match="unsupported"):
        heatmap.compute_heatmap(model, np.zeros((64, 64, 3), np.float32))
