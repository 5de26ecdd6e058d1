"""Binary model file format.

Little-endian layout:

  magic           4 bytes  "DWSF"
  format version  u32      currently 1
  arch_id         u8       1=dws1 2=dws3 3=fconv3 4=fconv5
  input_side      u16
  num_classes     u16
  layer_count     u16
  per layer:
    kind          u8       1=conv2d 2=depthwise 3=pointwise 4=batchnorm
                           5=relu 6=global_avg_pool 7=dense 8=softmax
    kernel_size   u8       0 when not applicable
    stride        u8
    in_channels   u16      (dense: input width)
    out_channels  u16      (dense: class count)
    weight blocks           raw float32, in declaration order:
                           conv kinds: kernel; batchnorm: gamma, beta,
                           running mean, running var; dense: weights, bias
  crc32           u32      of all preceding bytes

Saves are byte-deterministic, so identical models produce identical files
and a load reproduces predictions bit-exactly.
"""

import struct
import zlib

import numpy as np

from .errors import (
    BadMagicError,
    ChecksumError,
    ModelFormatError,
    TruncatedFileError,
    VersionMismatchError,
    WeightShapeError,
)
from .models import ARCH_IDS, Model, ModelSpec, build_model

MAGIC = b"DWSF"
FORMAT_VERSION = 1

_KIND_CODES = {
    "conv2d": 1, "depthwise": 2, "pointwise": 3, "batchnorm": 4,
    "relu": 5, "global_avg_pool": 6, "dense": 7, "softmax": 8,
}
_ARCH_CODES = {a: i + 1 for i, a in enumerate(ARCH_IDS)}
_ARCH_FROM_CODE = {v: k for k, v in _ARCH_CODES.items()}


def _layer_descriptor(layer):
    kind = layer.kind
    if kind in ("conv2d", "pointwise"):
        k, _, in_c, out_c = layer.weights.shape
        return kind, k, layer.stride, in_c, out_c
    if kind == "depthwise":
        k, _, c = layer.weights.shape
        return kind, k, layer.stride, c, c
    if kind == "batchnorm":
        c = layer.bn_gamma.shape[0]
        return kind, 0, 1, c, c
    if kind == "dense":
        n, m = layer.weights.shape
        return kind, 0, 1, n, m
    return kind, 0, 1, 0, 0


def _weight_blocks(layer):
    kind = layer.kind
    if kind in ("conv2d", "depthwise", "pointwise"):
        return [layer.weights]
    if kind == "batchnorm":
        return [layer.bn_gamma, layer.bn_beta, layer.bn_mean, layer.bn_var]
    if kind == "dense":
        return [layer.weights, layer.bias]
    return []


def save_model(model, path):
    """Write the model; returns the number of bytes written."""
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    spec = model.spec
    parts.append(struct.pack("<BHHH", _ARCH_CODES[spec.arch_id], spec.input_side,
                             spec.num_classes, len(spec.layers)))
    for layer in spec.layers:
        kind, k, stride, in_c, out_c = _layer_descriptor(layer)
        parts.append(struct.pack("<BBBHH", _KIND_CODES[kind], k, stride, in_c, out_c))
        for block in _weight_blocks(layer):
            parts.append(np.ascontiguousarray(block, dtype="<f4").tobytes())
    payload = b"".join(parts)
    blob = payload + struct.pack("<I", zlib.crc32(payload))
    with open(path, "wb") as fh:
        fh.write(blob)
    return len(blob)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise TruncatedFileError(f"file ended while reading {what}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        return struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt), what))


def load_model(path):
    """Read a model file, verifying magic, version, layout and checksum."""
    with open(path, "rb") as fh:
        data = fh.read()
    rd = _Reader(data)
    if rd.take(4, "magic") != MAGIC:
        raise BadMagicError(f"{path}: bad magic bytes")
    (version,) = rd.unpack("I", "format version")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    arch_code, input_side, num_classes, layer_count = rd.unpack("BHHH", "header")
    if arch_code not in _ARCH_FROM_CODE:
        raise ModelFormatError(f"{path}: unknown arch code {arch_code}")
    arch_id = _ARCH_FROM_CODE[arch_code]

    # the canonical skeleton dictates the expected descriptors and shapes
    skeleton = build_model(arch_id, seed=0, input_side=input_side, num_classes=num_classes)
    expected = skeleton.spec.layers
    if layer_count != len(expected):
        raise WeightShapeError(
            f"{path}: {layer_count} layers, {arch_id} declares {len(expected)}")

    for layer in expected:
        kind, k, stride, in_c, out_c = _layer_descriptor(layer)
        code, fk, fstride, fin, fout = rd.unpack("BBBHH", f"layer descriptor ({layer.name})")
        if (code, fk, fstride, fin, fout) != (_KIND_CODES[kind], k, stride, in_c, out_c):
            raise WeightShapeError(
                f"{path}: layer {layer.name!r} descriptor "
                f"{(code, fk, fstride, fin, fout)} does not match the "
                f"{arch_id} spec {(_KIND_CODES[kind], k, stride, in_c, out_c)}")
        for block in _weight_blocks(layer):
            raw = rd.take(block.size * 4, f"weights of {layer.name}")
            loaded = np.frombuffer(raw, dtype="<f4").reshape(block.shape).copy()
            _assign_block(layer, block, loaded)
        layer.bn_seeded = True

    if len(data) - rd.pos < 4:
        raise TruncatedFileError(f"{path}: missing checksum")
    if len(data) - rd.pos > 4:
        raise ModelFormatError(f"{path}: {len(data) - rd.pos - 4} trailing bytes")
    (crc_stored,) = struct.unpack("<I", data[rd.pos:rd.pos + 4])
    if crc_stored != zlib.crc32(data[:rd.pos]):
        raise ChecksumError(f"{path}: checksum mismatch")

    return Model(ModelSpec(arch_id, expected, input_side, num_classes), mode="infer")


def _assign_block(layer, template, loaded):
    for attr in ("weights", "bias", "bn_gamma", "bn_beta", "bn_mean", "bn_var"):
        if getattr(layer, attr) is template:
            setattr(layer, attr, loaded)
            return
    raise AssertionError("weight block does not belong to layer")
