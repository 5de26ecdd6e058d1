"""The ten handcrafted forensic features and the residual high-pass filters.

Every feature is a global image statistic: color saturation and diversity,
gray-histogram concentration, neighborhood contrast, co-occurrence texture,
per-channel autocorrelograms, and high-pass residual energy. All are
deterministic, pure, and invariant under horizontal flips (co-occurrence
counting is symmetric by construction).
"""

from dataclasses import dataclass, fields

import numpy as np

from .errors import DataError

FEATURE_NAMES = (
    "saturation_average", "color_ratio", "gray_histogram_mass",
    "farthest_neighbor", "sgld_contrast", "sgld_energy",
    "correlogram_r", "correlogram_g", "correlogram_b", "residual_energy",
)

RESIDUAL_KERNELS = {
    # (kernel, origin row, origin col); correlation, zero padding
    "first_order": (np.array([[-1.0, 1.0]]), 0, 1),
    "second_order": (np.array([[1.0, -2.0, 1.0]]), 0, 1),
    "square_3x3": (np.array([[-1.0, 2.0, -1.0],
                             [2.0, -4.0, 2.0],
                             [-1.0, 2.0, -1.0]]), 1, 1),
}

CORRELOGRAM_LEVELS = 32

_LEVEL_DIFF = np.abs(np.arange(256, dtype=np.float64)[:, None]
                     - np.arange(256, dtype=np.float64)[None, :])


@dataclass
class FeatureVector:
    saturation_average: float
    color_ratio: float
    gray_histogram_mass: float
    farthest_neighbor: float
    sgld_contrast: float
    sgld_energy: float
    correlogram_r: float
    correlogram_g: float
    correlogram_b: float
    residual_energy: float

    def as_array(self):
        return np.array([getattr(self, f.name) for f in fields(self)], np.float64)

    def validate(self):
        arr = self.as_array()
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"non-finite feature values: {self}")
        for name in ("saturation_average", "color_ratio", "gray_histogram_mass",
                     "correlogram_r", "correlogram_g", "correlogram_b"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0,1]")
        for name in ("farthest_neighbor", "sgld_contrast"):
            v = getattr(self, name)
            if not 0.0 <= v <= 255.0:
                raise ValueError(f"{name}={v} outside [0,255]")
        if not 0.0 < self.sgld_energy <= 1.0:
            raise ValueError(f"sgld_energy={self.sgld_energy} outside (0,1]")
        if self.residual_energy < 0.0:
            raise ValueError(f"residual_energy={self.residual_energy} negative")


def rgb_to_gray(image):
    """BT.601 luma in pure integer arithmetic (deterministic rounding)."""
    img = np.asarray(image, dtype=np.int64)
    luma = (299 * img[..., 0] + 587 * img[..., 1] + 114 * img[..., 2] + 500) // 1000
    return luma.astype(np.uint8)


def residual_filter(gray, filter_id):
    """Correlate a grayscale image with one of the high-pass kernels.

    The correlation is computed where the kernel fits entirely inside the
    image and the result is zero-padded back to the input size, so constant
    images map to an all-zero residual. Low-frequency content cancels;
    sharp transitions survive.
    """
    if filter_id not in RESIDUAL_KERNELS:
        raise ValueError(f"unknown filter_id {filter_id!r}; expected one of "
                         f"{tuple(RESIDUAL_KERNELS)}")
    x = np.asarray(gray, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 3 or x.shape[1] < 3:
        raise DataError(f"residual_filter needs a grayscale image of at least 3x3, got {x.shape}")
    kernel, oy, ox = RESIDUAL_KERNELS[filter_id]
    kh, kw = kernel.shape
    h, w = x.shape
    vh, vw = h - kh + 1, w - kw + 1
    valid = np.zeros((vh, vw), np.float64)
    for a in range(kh):
        for b in range(kw):
            if kernel[a, b] != 0.0:
                valid += kernel[a, b] * x[a:a + vh, b:b + vw]
    out = np.zeros((h, w), np.float64)
    out[oy:oy + vh, ox:ox + vw] = valid
    return out


def sgld_stats(gray, offset):
    """Contrast and energy of the 256x256 gray co-occurrence matrix at offset.

    offset is (dx, dy): pixel (r, c) pairs with (r+dy, c+dx). Pairs are
    counted in both orders, which makes the statistics symmetric.
    """
    dx, dy = offset
    if dx == 0 and dy == 0:
        raise ValueError("sgld offset must be nonzero")
    if abs(dx) > 4 or abs(dy) > 4:
        raise ValueError(f"sgld offset components must be within +-4, got {offset}")
    g = np.asarray(gray)
    h, w = g.shape
    if abs(dy) >= h or abs(dx) >= w:
        raise DataError(f"offset {offset} larger than image {g.shape}")
    r0, r1 = max(0, -dy), min(h, h - dy)
    c0, c1 = max(0, -dx), min(w, w - dx)
    a = g[r0:r1, c0:c1].astype(np.int64).ravel()
    b = g[r0 + dy:r1 + dy, c0 + dx:c1 + dx].astype(np.int64).ravel()
    counts = np.bincount(a * 256 + b, minlength=65536)
    counts += np.bincount(b * 256 + a, minlength=65536)
    p = counts.astype(np.float64) / counts.sum()
    p2 = p.reshape(256, 256)
    contrast = float((p2 * _LEVEL_DIFF).sum())
    energy = float((p * p).sum())
    return contrast, energy


def color_correlogram(channel, d, levels=CORRELOGRAM_LEVELS):
    """Probability that a pixel at Chebyshev distance d shares the pixel's
    quantized level, over all boundary-valid ordered pairs."""
    if not 1 <= d <= 8:
        raise ValueError(f"correlogram distance must be in 1..8, got {d}")
    ch = np.asarray(channel)
    h, w = ch.shape
    if min(h, w) < 2 * d + 1:
        raise DataError(f"image {ch.shape} smaller than {2 * d + 1} for distance {d}")
    q = (ch.astype(np.int64) * levels) // 256
    matches = 0
    total = 0
    for di in range(-d, d + 1):
        for dj in range(-d, d + 1):
            if max(abs(di), abs(dj)) != d:
                continue
            r0, r1 = max(0, -di), min(h, h - di)
            c0, c1 = max(0, -dj), min(w, w - dj)
            a = q[r0:r1, c0:c1]
            b = q[r0 + di:r1 + di, c0 + dj:c1 + dj]
            matches += int((a == b).sum())
            total += a.size
    return matches / total


def _saturation_average(image):
    img = np.asarray(image, dtype=np.float64)
    mx = img.max(axis=2)
    mn = img.min(axis=2)
    with np.errstate(invalid="ignore", divide="ignore"):
        sat = np.where(mx > 0, (mx - mn) / np.where(mx > 0, mx, 1.0), 0.0)
    return float(sat.mean())


def _farthest_neighbor(gray):
    g = np.asarray(gray, dtype=np.int64)
    h, w = g.shape
    best = np.zeros((h, w), np.int64)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            r0, r1 = max(0, -di), min(h, h - di)
            c0, c1 = max(0, -dj), min(w, w - dj)
            diff = np.abs(g[r0:r1, c0:c1] - g[r0 + di:r1 + di, c0 + dj:c1 + dj])
            np.maximum(best[r0:r1, c0:c1], diff, out=best[r0:r1, c0:c1])
    return float(best.mean())


def extract_features(image):
    """All ten features of an RGB uint8 image (at least 8x8)."""
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DataError(f"extract_features expects an RGB image, got shape {img.shape}")
    h, w = img.shape[:2]
    if h < 8 or w < 8:
        raise DataError(f"image {img.shape} too small for feature extraction (needs >= 8x8)")
    img = img.astype(np.uint8)
    gray = rgb_to_gray(img)

    n = h * w
    packed = (img[..., 0].astype(np.int64) << 16) | \
             (img[..., 1].astype(np.int64) << 8) | img[..., 2].astype(np.int64)
    color_ratio = np.unique(packed.ravel()).size / n

    hist = np.bincount(gray.ravel(), minlength=256)
    gray_mass = float(np.sort(hist)[-16:].sum()) / n

    c_h, e_h = sgld_stats(gray, (1, 0))
    c_v, e_v = sgld_stats(gray, (0, 1))

    residual = residual_filter(gray, "square_3x3")

    fv = FeatureVector(
        saturation_average=_saturation_average(img),
        color_ratio=color_ratio,
        gray_histogram_mass=gray_mass,
        farthest_neighbor=_farthest_neighbor(gray),
        sgld_contrast=(c_h + c_v) / 2.0,
        sgld_energy=(e_h + e_v) / 2.0,
        correlogram_r=color_correlogram(img[..., 0], 1),
        correlogram_g=color_correlogram(img[..., 1], 1),
        correlogram_b=color_correlogram(img[..., 2], 1),
        residual_energy=float((residual * residual).mean()),
    )
    fv.validate()
    return fv


def write_feature_table(rows, path):
    """CSV dump: ten feature columns in FEATURE_NAMES order, then label.

    Floats are written with repr so the table parses back bit-exactly.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(FEATURE_NAMES + ("label",)) + "\n")
        for fv, label in rows:
            values = [repr(float(v)) for v in fv.as_array()]
            fh.write(",".join(values + [str(int(label))]) + "\n")


def read_feature_table(path):
    """Parse a feature dump back into (features (N,10) float64, labels (N,))."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header != list(FEATURE_NAMES) + ["label"]:
            raise DataError(f"{path}: unexpected feature table header {header}")
        feats = []
        labels = []
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) != len(FEATURE_NAMES) + 1:
                raise DataError(f"{path}: bad row {line!r}")
            feats.append([float(v) for v in parts[:-1]])
            labels.append(int(parts[-1]))
    return np.asarray(feats, np.float64), np.asarray(labels, np.int64)
