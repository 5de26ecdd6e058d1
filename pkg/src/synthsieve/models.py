"""The four classifier architectures: construction, inference, introspection.

All four share a 3x3/32-filter stem at stride 2. The body is four stages
whose widths grow 64 -> 128 -> 128 -> 256 with downsampling at stages 2-4,
so a 224 px input shrinks 112 -> 112 -> 56 -> 28 -> 14 before the pooled
two-class head:

  dws1    stages are depthwise 3x3 + pointwise 1x1 pairs
  dws3    as dws1, but the final feature conv (conv5) is 3x3
  fconv3  stages are standard 3x3 convolutions
  fconv5  stages are standard 5x5 convolutions

This width schedule is a shipped constant: it pins the parameter budgets of
the four variants (~66K / 328K / 537K / 1,487K) and is regression-tested.
Every conv is followed by batch norm and ReLU.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ShapeError
from .nn import layers as L
from .nn import ops

ARCH_IDS = ("dws1", "dws3", "fconv3", "fconv5")

STEM_FILTERS = 32
STAGE_WIDTHS = (64, 128, 128, 256)
STAGE_STRIDES = (1, 2, 2, 2)

CLASS_NAMES = ("camera", "synthetic")  # class 0 / class 1, frozen


@dataclass
class ModelSpec:
    arch_id: str
    layers: list = field(default_factory=list)
    input_side: int = 224
    num_classes: int = 2


@dataclass
class Model:
    spec: ModelSpec
    mode: str = "infer"  # train | infer

    @property
    def layers(self):
        return self.spec.layers

    def clone(self):
        spec = replace(self.spec, layers=[l.clone() for l in self.spec.layers])
        return Model(spec=spec, mode=self.mode)


def build_model(arch_id, seed, input_side=224, num_classes=2):
    """Construct an architecture with He-uniform weights drawn from seed."""
    if arch_id not in ARCH_IDS:
        raise ValueError(f"unknown arch_id {arch_id!r}; expected one of {ARCH_IDS}")
    rng = np.random.default_rng(seed)
    layers = []

    def conv_block(layer):
        ch = layer.weights.shape[-1] if layer.kind != "depthwise" else layer.weights.shape[2]
        layers.append(layer)
        layers.append(L.make_batchnorm(layer.name, ch))
        layers.append(L.LayerParams("relu", layer.name))

    conv_block(L.make_conv("conv1", 3, 3, STEM_FILTERS, 2, rng))
    in_c = STEM_FILTERS
    if arch_id in ("dws1", "dws3"):
        for i, (width, stride) in enumerate(zip(STAGE_WIDTHS, STAGE_STRIDES), start=1):
            conv_block(L.make_depthwise(f"dw{i}", 3, in_c, stride, rng))
            is_last = i == len(STAGE_WIDTHS)
            if is_last and arch_id == "dws3":
                conv_block(L.make_conv(f"conv{i + 1}", 3, in_c, width, 1, rng))
            else:
                conv_block(L.make_pointwise(f"conv{i + 1}", in_c, width, rng))
            in_c = width
    else:
        k = 3 if arch_id == "fconv3" else 5
        for i, (width, stride) in enumerate(zip(STAGE_WIDTHS, STAGE_STRIDES), start=1):
            conv_block(L.make_conv(f"conv{i + 1}", k, in_c, width, stride, rng))
            in_c = width

    layers.append(L.LayerParams("global_avg_pool", "pool"))
    layers.append(L.make_dense("head", in_c, num_classes, rng))
    layers.append(L.LayerParams("softmax", "probs"))
    for layer in layers:
        layer.validate()
    return Model(ModelSpec(arch_id, layers, input_side, num_classes), mode="infer")


def param_count(model):
    """Trainable scalars: conv/dense weights, dense bias, bn gamma/beta.
    Running statistics are not trainable and are excluded."""
    return sum(L.param_count(layer) for layer in model.layers)


def forward_batch(model, x, mode=None, want_caches=False):
    """Run a (B,H,W,C) float batch through the network.

    Returns (probs, logits, records) where records carry per-layer caches
    for backward_batch (None entries when want_caches is False). Adjacent
    batchnorm+relu pairs run as one fused pass; the result is bit-identical
    to running them separately.
    """
    mode = mode or model.mode
    layers = model.spec.layers
    records = []
    i = 0
    while i < len(layers):
        layer = layers[i]
        if layer.kind == "softmax":
            i += 1
            continue
        unflatten = None
        if layer.kind == "dense" and x.ndim == 4:
            unflatten = x.shape
            x = x.reshape(x.shape[0], -1)
        if (layer.kind == "batchnorm" and i + 1 < len(layers)
                and layers[i + 1].kind == "relu"):
            x, cache = L.layer_forward(layer, x, mode, fuse_relu=True)
            i += 2
        else:
            x, cache = L.layer_forward(layer, x, mode)
            i += 1
        records.append((layer, cache if want_caches else None, unflatten))
    logits = x
    probs = L._softmax_probs(logits)
    return probs, logits, (records if want_caches else None)


def backward_batch(model, dlogits, records):
    """Backpropagate through the records from forward_batch.

    Returns {layer id (position in spec.layers): {attr: grad}}.
    """
    index_of = {id(layer): i for i, layer in enumerate(model.spec.layers)}
    grads = {}
    g = dlogits
    for layer, cache, unflatten in reversed(records):
        g, layer_grads = L.layer_backward(layer, g, cache)
        if unflatten is not None:
            g = g.reshape(unflatten)
        if layer_grads:
            grads[index_of[id(layer)]] = layer_grads
    return grads


def forward(model, image):
    """Classify one (side, side, 3) image scaled to [0,1].

    Returns (probs, logits), each a vector of num_classes. Class 0 is a
    camera capture, class 1 a synthetic image.
    """
    if model.mode != "infer":
        raise ValueError("forward requires the model in infer mode")
    x = np.asarray(image)
    side = model.spec.input_side
    if x.shape != (side, side, 3):
        raise ShapeError(f"forward: expected image of shape ({side}, {side}, 3), got {x.shape}")
    probs, logits, _ = forward_batch(model, x[None].astype(np.float32, copy=False))
    return probs[0], logits[0]


def conv5_activations(model, image):
    """Post-ReLU activation map of the final feature conv (conv5).

    Only meaningful for the depthwise architectures, whose feature layer the
    diagnostics visualise.
    """
    if model.spec.arch_id not in ("dws1", "dws3"):
        raise ValueError(f"conv5_activations: unsupported arch {model.spec.arch_id!r}")
    x = np.asarray(image)
    if x.ndim != 3:
        raise ShapeError(f"conv5_activations: expected (H,W,C) image, got rank {x.ndim}")
    x = x[None].astype(np.float32, copy=False)
    for layer in model.spec.layers:
        if layer.kind == "softmax":
            break
        if layer.kind == "dense" and x.ndim == 4:
            x = x.reshape(x.shape[0], -1)
        x, _ = L.layer_forward(layer, x, "infer")
        if layer.kind == "relu" and layer.name == "conv5":
            return x[0]
    raise ValueError("conv5_activations: model has no conv5 activation layer")


def stage_output_shapes(model, input_side=None):
    """Spatial side and channel count after the stem and after each stage.

    Stages end at the relu of conv1..conv5, so the depthwise and full-conv
    variants can be compared block-for-block.
    """
    side = input_side or model.spec.input_side
    shapes = []
    channels = 3
    for layer in model.spec.layers:
        if layer.kind in ("conv2d", "depthwise", "pointwise"):
            k = layer.weights.shape[0]
            side = ops.out_size(side, k, layer.stride, layer.padding)
            channels = (layer.weights.shape[2] if layer.kind == "depthwise"
                        else layer.weights.shape[-1])
        if layer.kind == "relu" and layer.name.startswith("conv"):
            shapes.append((layer.name, side, channels))
    return shapes
