"""Image decode/encode helpers. The JPEG codec (Pillow) sits behind this
module so the rest of the library only handles uint8 RGB arrays."""

import io

import numpy as np
from PIL import Image

from .errors import DataError


def codec_version():
    import PIL
    return f"Pillow-{PIL.__version__}"


def load_image_array(path, side=None):
    """Decode an image file to uint8 (H,W,3), optionally resized to side x side."""
    try:
        with Image.open(path) as im:
            im = im.convert("RGB")
            if side is not None and im.size != (side, side):
                im = im.resize((side, side), Image.BILINEAR)
            return np.asarray(im, dtype=np.uint8)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot decode image {path}: {exc}") from exc


def resize_array(image, side):
    image = np.asarray(image, dtype=np.uint8)
    if image.shape[:2] == (side, side):
        return image
    im = Image.fromarray(image).resize((side, side), Image.BILINEAR)
    return np.asarray(im, dtype=np.uint8)


def save_png(image, path):
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(path, format="PNG")


def encode_jpeg(image, quality):
    """Encode uint8 RGB to JPEG bytes at a (0,1] quality factor.

    Chroma subsampling switches off at quality >= 0.95, like common encoder
    pipelines, so the top of the quality range is near-lossless.
    """
    if not 0.0 < quality <= 1.0:
        raise ValueError(f"quality must be in (0, 1], got {quality}")
    buf = io.BytesIO()
    try:
        Image.fromarray(np.asarray(image, dtype=np.uint8)).save(
            buf, format="JPEG", quality=max(1, round(quality * 100)),
            subsampling=0 if quality >= 0.95 else -1)
    except OSError as exc:
        raise DataError(f"JPEG encode failed: {exc}") from exc
    return buf.getvalue()


def decode_image_bytes(data):
    try:
        with Image.open(io.BytesIO(data)) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot decode image bytes: {exc}") from exc


def psnr(a, b):
    """Peak signal-to-noise ratio between two uint8 images, in dB."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return float("inf")
    return 10.0 * np.log10(255.0 ** 2 / mse)
