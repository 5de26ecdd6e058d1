"""Procedural corpus generation.

Camera proxies are smooth color fields with soft blobs, mild blur and
per-pixel sensor-style noise. Synthetic proxies are built the way real
social-media composites are: text pasted onto a camera image (often a thin
boxed strip with small type), several camera shots stacked into a collage
with hard seams, or a flat designed card with large uniform regions. All
generation is a pure function of (seed, config); samples are re-encoded as
JPEG at a controlled quality factor before they enter a manifest.
"""

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from . import __version__
from .errors import DataError, ShapeError
from .glyphs import GLYPH_H, GLYPH_W, text_mask
from .imageio import codec_version, decode_image_bytes, encode_jpeg, save_png
from .manifest import LABEL_FOR_SOURCE, DatasetManifest, ImageSample, save_manifest
from .util import derive_seed

WORDS = (
    "happy", "monday", "friend", "smile", "good", "morning", "blessed", "day",
    "love", "life", "best", "wishes", "enjoy", "every", "moment", "peace",
    "joy", "family", "sunday", "vibes", "stay", "strong", "keep", "going",
    "dream", "big", "never", "give", "up", "share", "this", "with", "someone",
    "special", "great", "week", "ahead", "new", "year", "hello", "world",
    "coffee", "time", "weekend", "mood", "true", "story", "when", "you",
    "see", "it", "me", "being", "totally", "normal", "again", "today",
)


@dataclass
class TextStyle:
    scale: int = 2
    color: tuple = (255, 255, 255)
    boxed: bool = False
    box_color: tuple = (255, 255, 255)


# --- primitive generators ------------------------------------------------------

def _camera_field(rng, h, w):
    v = np.linspace(0.0, 1.0, h)[:, None, None]
    u = np.linspace(0.0, 1.0, w)[None, :, None]
    corners = rng.uniform(25.0, 230.0, (2, 2, 3))
    img = (corners[0, 0] * (1 - v) * (1 - u) + corners[0, 1] * (1 - v) * u
           + corners[1, 0] * v * (1 - u) + corners[1, 1] * v * u)

    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    for _ in range(int(rng.integers(2, 13))):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        ry, rx = rng.uniform(h / 12, h / 2.2), rng.uniform(w / 12, w / 2.2)
        theta = rng.uniform(0, np.pi)
        color = rng.uniform(15.0, 240.0, 3)
        dx, dy = xx - cx, yy - cy
        xr = dx * np.cos(theta) + dy * np.sin(theta)
        yr = -dx * np.sin(theta) + dy * np.cos(theta)
        mask = (xr / rx) ** 2 + (yr / ry) ** 2 <= 1.0
        img[mask] = color

    sigma = rng.uniform(0.6, 5.0)
    img = gaussian_filter(img, sigma=(sigma, sigma, 0))
    # sensor-style noise: sometimes shared across channels (luma-like),
    # sometimes independent per channel, widening the camera statistics
    noise_sigma = rng.uniform(2.0, 11.0)
    if rng.random() < 0.5:
        img = img + rng.normal(0.0, noise_sigma, (h, w))[..., None]
    else:
        img = img + rng.normal(0.0, noise_sigma, img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def gen_camera_proxy(seed, size=224):
    """Camera-capture stand-in: smooth content, soft edges, sensor-style noise."""
    if size < 64:
        raise ValueError(f"camera proxy size must be >= 64, got {size}")
    rng = np.random.default_rng(seed)
    return _camera_field(rng, size, size)


def overlay_text(base, text, region, style, seed=0):
    """Rasterise one line of bitmap text inside region = (top, left, h, w).

    Boxed style paints the whole region with a solid strip first. Pixels
    outside the region are untouched. The seed parameter is accepted for
    interface symmetry with the other generators; rendering itself is fully
    determined by its arguments.
    """
    del seed
    img = np.asarray(base, dtype=np.uint8)
    top, left, rh, rw = region
    h, w = img.shape[:2]
    if not text:
        raise ValueError("overlay text must be non-empty")
    if top < 0 or left < 0 or rh < 1 or rw < 1 or top + rh > h or left + rw > w:
        raise DataError(f"overlay region {region} out of bounds for image {h}x{w}")
    out = img.copy()
    if style.boxed:
        out[top:top + rh, left:left + rw] = np.asarray(style.box_color, np.uint8)
    mask = text_mask(text, style.scale)
    ty = top + max((rh - mask.shape[0]) // 2, 0)
    tx = left + style.scale
    # clip the glyph mask to the region
    y1 = min(ty + mask.shape[0], top + rh)
    x1 = min(tx + mask.shape[1], left + rw)
    if y1 > ty and x1 > tx:
        sub = mask[: y1 - ty, : x1 - tx]
        patch = out[ty:y1, tx:x1]
        patch[sub] = np.asarray(style.color, np.uint8)
    return out


def stack_images(tiles, layout):
    """Concatenate uniform tiles into a rows x cols grid, hard seams."""
    rows, cols = layout
    if len(tiles) != rows * cols:
        raise ShapeError(f"stack_images: {rows}x{cols} layout needs {rows * cols} tiles, "
                         f"got {len(tiles)}")
    shapes = {t.shape for t in tiles}
    if len(shapes) != 1:
        raise ShapeError(f"stack_images: tiles must share one shape, got {sorted(shapes)}")
    grid = [np.concatenate(tiles[r * cols:(r + 1) * cols], axis=1) for r in range(rows)]
    return np.concatenate(grid, axis=0)


def _random_text(rng, max_words=3):
    k = int(rng.integers(1, max_words + 1))
    words = [WORDS[int(rng.integers(len(WORDS)))] for _ in range(k)]
    text = " ".join(words)
    return text.upper() if rng.random() < 0.5 else text


def _text_region(rng, size, text, scale, boxed):
    mask_h = GLYPH_H * scale
    mask_w = (len(text) * GLYPH_W + (len(text) - 1)) * scale
    if boxed:
        rh = mask_h + 4 * scale
        full_width = rng.random() < 0.7
        rw = size if full_width else min(size, mask_w + 6 * scale)
        left = 0 if full_width else int(rng.integers(0, size - rw + 1))
        band = rng.random()
        if band < 0.4:      # meme banner at the top
            top = int(rng.integers(0, max(size // 8, 1)))
        elif band < 0.7:    # or at the bottom
            top = int(rng.integers(size - size // 8 - rh, size - rh + 1))
        else:
            top = int(rng.integers(0, size - rh + 1))
    else:
        rh = min(size, mask_h + 2 * scale)
        rw = min(size, mask_w + 2 * scale)
        top = int(rng.integers(0, size - rh + 1))
        left = int(rng.integers(0, size - rw + 1))
    return (top, left, rh, rw)


_LIGHT = ((255, 255, 255), (245, 245, 235), (250, 235, 215), (230, 240, 250))
_DARK = ((0, 0, 0), (20, 20, 30), (40, 25, 15))
_SATURATED = ((255, 40, 40), (40, 160, 255), (255, 220, 0), (40, 200, 80),
              (255, 120, 0), (200, 40, 200))


def _overlay_random_text(img, rng, size, small_bias=True):
    # small plain type dominates: it is the evidence global statistics miss
    # and the first casualty of heavy JPEG requantisation
    scales = (1, 1, 2, 2) if small_bias else (2, 3, 3, 4)
    scale = int(rng.choice(scales))
    text = _random_text(rng)
    boxed = rng.random() < 0.4
    region = _text_region(rng, size, text, scale, boxed)
    if boxed:
        if rng.random() < 0.7:
            box = _LIGHT[int(rng.integers(len(_LIGHT)))]
            color = _DARK[int(rng.integers(len(_DARK)))]
        else:
            box = _DARK[int(rng.integers(len(_DARK)))]
            color = _LIGHT[int(rng.integers(len(_LIGHT)))]
        style = TextStyle(scale=scale, color=color, boxed=True, box_color=box)
    else:
        palette = _LIGHT + _DARK + _SATURATED
        style = TextStyle(scale=scale, color=palette[int(rng.integers(len(palette)))])
    return overlay_text(img, text, region, style)


def _gen_text_overlay(seed, size):
    img = gen_camera_proxy(derive_seed(seed, "bg"), size)
    rng = np.random.default_rng(derive_seed(seed, "overlay"))
    n = 1 + int(rng.random() < 0.35)
    for _ in range(n):
        img = _overlay_random_text(img, rng, size)
    return img


def _gen_stacked(seed, size):
    rng = np.random.default_rng(derive_seed(seed, "layout"))
    layout = ((1, 2), (2, 1), (2, 2))[int(rng.integers(3))]
    rows, cols = layout
    # build an inflated collage and crop at a random offset so the seams do
    # not systematically align with the 8x8 JPEG block grid
    pad = 16
    inflated = size + pad
    th, tw = inflated // rows, inflated // cols
    tiles = []
    for i in range(rows * cols):
        tile = gen_camera_proxy(derive_seed(seed, "tile", i), max(th, tw, 64))
        tiles.append(tile[:th, :tw])
    collage = stack_images(tiles, layout)
    dy = int(rng.integers(0, pad + 1))
    dx = int(rng.integers(0, pad + 1))
    img = collage[dy:dy + size, dx:dx + size]
    if rng.random() < 0.4:
        img = _overlay_random_text(img, rng, size)
    return img


def _gen_flat_synthetic(seed, size):
    rng = np.random.default_rng(derive_seed(seed, "flat"))
    img = np.empty((size, size, 3), np.uint8)
    img[:] = rng.integers(0, 256, 3, dtype=np.int64)
    if rng.random() < 0.4:  # two-tone background
        split = int(rng.integers(size // 4, 3 * size // 4))
        color2 = rng.integers(0, 256, 3, dtype=np.int64)
        if rng.random() < 0.5:
            img[split:] = color2
        else:
            img[:, split:] = color2
    for _ in range(int(rng.integers(2, 6))):
        rh = int(rng.integers(size // 8, size // 2))
        rw = int(rng.integers(size // 8, size // 2))
        top = int(rng.integers(0, size - rh + 1))
        left = int(rng.integers(0, size - rw + 1))
        fill = rng.integers(0, 256, 3, dtype=np.int64)
        img[top:top + rh, left:left + rw] = fill
        if rng.random() < 0.6:  # clip-art style border
            bw = int(rng.integers(2, 6))
            border = rng.integers(0, 256, 3, dtype=np.int64)
            img[top:top + rh, left:left + bw] = border
            img[top:top + rh, left + rw - bw:left + rw] = border
            img[top:top + bw, left:left + rw] = border
            img[top + rh - bw:top + rh, left:left + rw] = border
    for _ in range(int(rng.integers(1, 4))):
        img = _overlay_random_text(img, rng, size, small_bias=False)
    return img


def gen_synthetic_proxy(seed, size=224, kind="text_overlay"):
    """One synthetic-image stand-in of the requested kind."""
    if kind == "text_overlay":
        return _gen_text_overlay(seed, size)
    if kind == "stacked":
        return _gen_stacked(seed, size)
    if kind == "flat_synthetic":
        return _gen_flat_synthetic(seed, size)
    raise ValueError(f"unknown synthetic kind {kind!r}")


def reencode_jpeg(image, quality):
    """JPEG round trip at a (0,1] quality factor; dimensions are preserved."""
    img = np.asarray(image, np.uint8)
    out = decode_image_bytes(encode_jpeg(img, quality))
    if out.shape != img.shape:
        raise DataError(f"codec changed dimensions {img.shape} -> {out.shape}")
    return out


# --- corpus assembly -------------------------------------------------------------

SOURCE_ORDER = ("camera_proxy", "text_overlay", "stacked", "flat_synthetic")

_GENERATORS = {
    "camera_proxy": lambda seed, size: gen_camera_proxy(seed, size),
    "text_overlay": lambda seed, size: gen_synthetic_proxy(seed, size, "text_overlay"),
    "stacked": lambda seed, size: gen_synthetic_proxy(seed, size, "stacked"),
    "flat_synthetic": lambda seed, size: gen_synthetic_proxy(seed, size, "flat_synthetic"),
}


@dataclass
class DatasetConfig:
    counts: dict = field(default_factory=dict)
    size: int = 224
    seed: int = 0
    quality_grid: tuple = (0.95,)
    keep_masters: bool = False

    def digest(self):
        doc = {"counts": {k: self.counts[k] for k in sorted(self.counts)},
               "size": self.size, "seed": self.seed,
               "quality_grid": list(self.quality_grid),
               "generator": __version__, "codec": codec_version()}
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def balanced_counts(total):
    """Half camera, half synthetic split across the three synthetic kinds."""
    camera = total // 2
    synthetic = total - camera
    text = round(0.50 * synthetic)
    stacked = round(0.30 * synthetic)
    flat = synthetic - text - stacked
    return {"camera_proxy": camera, "text_overlay": text,
            "stacked": stacked, "flat_synthetic": flat}


def generate_sample(config, source, index):
    """Deterministically generate the index-th sample of a source (pre-encode)."""
    seed = derive_seed(config.seed, source, index)
    image = _GENERATORS[source](seed, config.size)
    qrng = np.random.default_rng(derive_seed(config.seed, "quality", source, index))
    quality = float(config.quality_grid[int(qrng.integers(len(config.quality_grid)))])
    return image, seed, quality


def make_dataset(config, out_dir):
    """Generate, JPEG-encode and write a corpus plus its manifest.

    Returns the manifest (already saved to <out_dir>/manifest.jsonl).
    """
    for source, count in config.counts.items():
        if source not in _GENERATORS:
            raise DataError(f"unknown source {source!r}")
        if count < 1:
            raise DataError(f"count for {source} must be >= 1, got {count}")
    try:
        os.makedirs(out_dir, exist_ok=True)
        if config.keep_masters:
            os.makedirs(os.path.join(out_dir, "masters"), exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out_dir}: {exc}") from exc

    samples = []
    for source in SOURCE_ORDER:
        for i in range(config.counts.get(source, 0)):
            image, seed, quality = generate_sample(config, source, i)
            name = f"{source}_{i:05d}.jpg"
            try:
                if config.keep_masters:
                    save_png(image, os.path.join(out_dir, "masters", f"{source}_{i:05d}.png"))
                with open(os.path.join(out_dir, name), "wb") as fh:
                    fh.write(encode_jpeg(image, quality))
            except OSError as exc:
                raise DataError(f"cannot write into {out_dir}: {exc}") from exc
            samples.append(ImageSample(
                path=name, label=LABEL_FOR_SOURCE[source], source=source,
                seed=seed, quality=quality, width=config.size, height=config.size))
    manifest = DatasetManifest(samples, config.seed, config.digest(), base_dir=str(out_dir))
    manifest.validate(require_both_labels=False)
    save_manifest(manifest, os.path.join(out_dir, "manifest.jsonl"))
    return manifest
