"""Dataset manifests: labeled image records with generation provenance.

Stored as UTF-8 JSON lines. The first line is a header object carrying the
global seed and the generation-config digest; every following line is one
sample with the fixed field order path, label, source, seed, quality,
width, height. Paths are relative to the manifest's directory.
"""

import json
import os
from dataclasses import dataclass, field

from .errors import DataError

MANIFEST_VERSION = 1

CAMERA, SYNTHETIC = 0, 1

SOURCES = ("camera_proxy", "text_overlay", "stacked", "flat_synthetic", "external")

LABEL_FOR_SOURCE = {
    "camera_proxy": CAMERA,
    "text_overlay": SYNTHETIC,
    "stacked": SYNTHETIC,
    "flat_synthetic": SYNTHETIC,
}


@dataclass
class ImageSample:
    path: str
    label: int
    source: str
    seed: int
    quality: float
    width: int
    height: int

    def validate(self):
        if self.source not in SOURCES:
            raise DataError(f"unknown source {self.source!r}")
        if self.label not in (CAMERA, SYNTHETIC):
            raise DataError(f"label must be 0 (camera) or 1 (synthetic), got {self.label}")
        expected = LABEL_FOR_SOURCE.get(self.source)
        if expected is not None and self.label != expected:
            raise DataError(f"source {self.source!r} must carry label {expected}, got {self.label}")
        if not 0.0 < self.quality <= 1.0:
            raise DataError(f"quality must be in (0, 1], got {self.quality}")


@dataclass
class DatasetManifest:
    samples: list = field(default_factory=list)
    seed: int = 0
    config_digest: str = ""
    base_dir: str = ""

    def validate(self, require_both_labels=False):
        paths = [s.path for s in self.samples]
        if len(set(paths)) != len(paths):
            raise DataError("manifest contains duplicate paths")
        for s in self.samples:
            s.validate()
        if require_both_labels and len({s.label for s in self.samples}) < 2:
            raise DataError("manifest must contain both classes")

    def resolve_path(self, sample):
        return os.path.join(self.base_dir, sample.path) if self.base_dir else sample.path


_FIELDS = ("path", "label", "source", "seed", "quality", "width", "height")


def save_manifest(manifest, path):
    with open(path, "w", encoding="utf-8") as fh:
        header = {"manifest_version": MANIFEST_VERSION, "seed": manifest.seed,
                  "config_digest": manifest.config_digest}
        fh.write(json.dumps(header, separators=(",", ":")) + "\n")
        for s in manifest.samples:
            row = {k: getattr(s, k) for k in _FIELDS}
            fh.write(json.dumps(row, separators=(",", ":"), ensure_ascii=False) + "\n")


def load_manifest(path):
    samples = []
    seed = 0
    digest = ""
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open manifest {path}: {exc}") from exc
    with fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{line_no}: bad JSON: {exc}") from exc
            if "manifest_version" in obj:
                seed = obj.get("seed", 0)
                digest = obj.get("config_digest", "")
                continue
            missing = [k for k in _FIELDS if k not in obj]
            if missing:
                raise DataError(f"{path}:{line_no}: missing fields {missing}")
            samples.append(ImageSample(**{k: obj[k] for k in _FIELDS}))
    manifest = DatasetManifest(samples, seed, digest, base_dir=os.path.dirname(path))
    manifest.validate()
    return manifest
