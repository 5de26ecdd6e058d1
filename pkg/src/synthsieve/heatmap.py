"""Activation heat maps from the final feature conv layer.

The per-cell aggregate over channels (mean of absolute activations by
default, max behind a flag) is min-max normalised, upsampled nearest-
neighbor to the input size, and rendered through a blue-to-red colormap.
A constant map renders as all-lowest color rather than erroring.
"""

import numpy as np

from .imageio import save_png
from .models import conv5_activations

# piecewise-linear colormap: dark blue (lowest) through cyan/yellow to red
_STOPS = (
    (0.00, (0, 0, 128)),
    (0.25, (0, 0, 255)),
    (0.50, (0, 255, 255)),
    (0.75, (255, 255, 0)),
    (1.00, (255, 0, 0)),
)

AGGREGATIONS = ("mean", "max")


def aggregate_activations(activations, agg="mean"):
    """Collapse an (H,W,C) activation tensor to a spatial intensity map."""
    act = np.abs(np.asarray(activations, dtype=np.float64))
    if agg == "mean":
        return act.mean(axis=2)
    if agg == "max":
        return act.max(axis=2)
    raise ValueError(f"unknown aggregation {agg!r}; expected one of {AGGREGATIONS}")


def normalize_heat(heat):
    """Min-max to [0,1]; a flat map maps to all zeros."""
    heat = np.asarray(heat, dtype=np.float64)
    lo, hi = heat.min(), heat.max()
    if hi - lo <= 0:
        return np.zeros_like(heat)
    return (heat - lo) / (hi - lo)


def upsample_nearest(map2d, side):
    m = np.asarray(map2d)
    h, w = m.shape
    rows = np.minimum((np.arange(side) * h) // side, h - 1)
    cols = np.minimum((np.arange(side) * w) // side, w - 1)
    return m[rows[:, None], cols[None, :]]


def heat_to_rgb(map01):
    """Map [0,1] intensities through the blue-to-red colormap."""
    x = np.clip(np.asarray(map01, dtype=np.float64), 0.0, 1.0)
    out = np.zeros(x.shape + (3,), np.float64)
    for (p0, c0), (p1, c1) in zip(_STOPS[:-1], _STOPS[1:]):
        seg = (x >= p0) & (x <= p1)
        t = np.where(seg, (x - p0) / (p1 - p0), 0.0)
        for ch in range(3):
            out[..., ch] = np.where(seg, c0[ch] + t * (c1[ch] - c0[ch]), out[..., ch])
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def compute_heatmap(model, image, agg="mean"):
    """Normalised heat map of one image at input resolution.

    Returns (heat01 at input size, raw conv-grid heat before upsampling).
    """
    act = conv5_activations(model, image)
    grid = normalize_heat(aggregate_activations(act, agg))
    side = np.asarray(image).shape[0]
    return upsample_nearest(grid, side), grid


def export_heatmap(model, image, out_path, agg="mean"):
    """Write the rendered heat map as a PNG; returns the [0,1] heat array."""
    heat, _ = compute_heatmap(model, image, agg)
    save_png(heat_to_rgb(heat), out_path)
    return heat
