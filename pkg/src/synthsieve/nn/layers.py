"""Layer parameter container and the per-kind forward/backward dispatch.

A model is an ordered list of LayerParams. Convolution layers carry no bias
(batch norm follows every one of them, which makes biases redundant); the
dense head keeps one. Batch norm running statistics are seeded from the
first training batch and tracked by exponential moving average afterwards.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ShapeError
from . import ops

KINDS = ("conv2d", "depthwise", "pointwise", "batchnorm", "relu",
         "global_avg_pool", "dense", "softmax")

ALLOWED_KERNEL_SIZES = (1, 3, 5)


@dataclass
class LayerParams:
    kind: str
    name: str = ""
    weights: np.ndarray | None = None
    bias: np.ndarray | None = None
    bn_gamma: np.ndarray | None = None
    bn_beta: np.ndarray | None = None
    bn_mean: np.ndarray | None = None
    bn_var: np.ndarray | None = None
    stride: int = 1
    padding: str = "same"
    bn_seeded: bool = field(default=False, repr=False)

    def validate(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.stride < 1:
            raise ValueError(f"layer {self.name!r}: stride must be >= 1")
        if self.padding not in ("same", "valid"):
            raise ValueError(f"layer {self.name!r}: unknown padding {self.padding!r}")
        if self.kind in ("conv2d", "depthwise", "pointwise"):
            w = self.weights
            if w is None:
                raise ValueError(f"layer {self.name!r}: {self.kind} needs weights")
            k = w.shape[0]
            if w.shape[1] != k or k not in ALLOWED_KERNEL_SIZES:
                raise ValueError(
                    f"layer {self.name!r}: kernel must be square with size in "
                    f"{ALLOWED_KERNEL_SIZES}, got {w.shape[:2]}")
        if self.kind == "batchnorm":
            vecs = [self.bn_gamma, self.bn_beta, self.bn_mean, self.bn_var]
            if any(v is None for v in vecs):
                raise ValueError(f"layer {self.name!r}: batchnorm needs gamma/beta/mean/var")
            c = self.bn_gamma.shape[0]
            if any(v.shape != (c,) for v in vecs):
                raise ValueError(f"layer {self.name!r}: batchnorm vectors must all have length {c}")
            if np.any(self.bn_var < 0):
                raise ValueError(f"layer {self.name!r}: negative stored variance")

    def clone(self):
        copies = {
            a: (None if getattr(self, a) is None else getattr(self, a).copy())
            for a in ("weights", "bias", "bn_gamma", "bn_beta", "bn_mean", "bn_var")
        }
        return replace(self, **copies)


def trainable_arrays(layer):
    """(attribute, array) pairs Adam updates; running stats are excluded."""
    if layer.kind in ("conv2d", "depthwise", "pointwise"):
        return [("weights", layer.weights)]
    if layer.kind == "batchnorm":
        return [("bn_gamma", layer.bn_gamma), ("bn_beta", layer.bn_beta)]
    if layer.kind == "dense":
        return [("weights", layer.weights), ("bias", layer.bias)]
    return []


def param_count(layer):
    return sum(arr.size for _, arr in trainable_arrays(layer))


# --- initialisation ----------------------------------------------------------

def _he_uniform(rng, shape, fan_in, dtype=np.float32):
    limit = math.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def make_conv(name, k, in_c, out_c, stride, rng):
    w = _he_uniform(rng, (k, k, in_c, out_c), k * k * in_c)
    return LayerParams("conv2d", name, weights=w, stride=stride)


def make_depthwise(name, k, channels, stride, rng):
    w = _he_uniform(rng, (k, k, channels), k * k)
    return LayerParams("depthwise", name, weights=w, stride=stride)


def make_pointwise(name, in_c, out_c, rng):
    w = _he_uniform(rng, (1, 1, in_c, out_c), in_c)
    return LayerParams("pointwise", name, weights=w)


def make_batchnorm(name, channels):
    return LayerParams(
        "batchnorm", name,
        bn_gamma=np.ones(channels, np.float32),
        bn_beta=np.zeros(channels, np.float32),
        bn_mean=np.zeros(channels, np.float32),
        bn_var=np.ones(channels, np.float32))


def make_dense(name, in_dim, out_dim, rng):
    w = _he_uniform(rng, (in_dim, out_dim), in_dim)
    return LayerParams("dense", name, weights=w, bias=np.zeros(out_dim, np.float32))


# --- spec-level batch norm op -------------------------------------------------

def batch_norm(batch, params, mode):
    """Normalise a (B,H,W,C) batch using a batchnorm LayerParams.

    Train mode updates the layer's running statistics in place (seeding them
    from the first batch seen); infer mode uses the stored statistics.
    """
    y, _, mu, var = ops.batch_norm_forward(
        batch, params.bn_gamma, params.bn_beta, mode,
        params.bn_mean, params.bn_var)
    if mode == "train":
        _update_running(params, mu, var)
    return y


def _update_running(params, mu, var):
    if not params.bn_seeded:
        params.bn_mean = mu.copy()
        params.bn_var = var.copy()
        params.bn_seeded = True
    else:
        m = ops.BN_MOMENTUM
        params.bn_mean = (m * params.bn_mean + (1.0 - m) * mu).astype(params.bn_mean.dtype)
        params.bn_var = (m * params.bn_var + (1.0 - m) * var).astype(params.bn_var.dtype)


# --- dispatch -----------------------------------------------------------------

def layer_forward(layer, x, mode="infer", fuse_relu=False):
    """Run one layer; returns (output, cache). The cache feeds layer_backward.

    fuse_relu only applies to batchnorm layers: the following relu is folded
    into the same pass (bit-identical to applying it separately).
    """
    kind = layer.kind
    if kind == "conv2d":
        return ops.conv2d_forward(x, layer.weights, layer.stride, layer.padding)
    if kind == "depthwise":
        return ops.depthwise_forward(x, layer.weights, layer.stride, layer.padding)
    if kind == "pointwise":
        return ops.pointwise_forward(x, layer.weights)
    if kind == "batchnorm":
        y, cache, mu, var = ops.batch_norm_forward(
            x, layer.bn_gamma, layer.bn_beta, mode,
            layer.bn_mean, layer.bn_var, fuse_relu=fuse_relu)
        if mode == "train":
            _update_running(layer, mu, var)
        return y, cache
    if kind == "relu":
        return ops.relu_forward(x)
    if kind == "global_avg_pool":
        return ops.global_avg_pool_forward(x)
    if kind == "dense":
        return ops.dense_forward(x, layer.weights, layer.bias)
    if kind == "softmax":
        return _softmax_probs(x), None
    raise ValueError(f"unknown layer kind {kind!r}")


def _softmax_probs(logits):
    z = np.asarray(logits)
    zs = z - z.max(axis=-1, keepdims=True)
    ez = np.exp(zs)
    return ez / ez.sum(axis=-1, keepdims=True)


def layer_backward(layer, grad, cache):
    """Returns (dinput, {attribute: gradient}) for one layer."""
    kind = layer.kind
    if kind == "conv2d":
        dx, dw = ops.conv2d_backward(grad, cache)
        return dx, {"weights": dw}
    if kind == "depthwise":
        dx, dw = ops.depthwise_backward(grad, cache)
        return dx, {"weights": dw}
    if kind == "pointwise":
        dx, dw = ops.pointwise_backward(grad, cache)
        return dx, {"weights": dw}
    if kind == "batchnorm":
        dx, dgamma, dbeta = ops.batch_norm_backward(grad, cache)
        return dx, {"bn_gamma": dgamma, "bn_beta": dbeta}
    if kind == "relu":
        return ops.relu_backward(grad, cache), {}
    if kind == "global_avg_pool":
        return ops.global_avg_pool_backward(grad, cache), {}
    if kind == "dense":
        dx, dw, db = ops.dense_backward(grad, cache)
        return dx, {"weights": dw, "bias": db}
    raise ValueError(f"no backward for layer kind {kind!r}")
