"""Finite-difference validation of every backward pass.

Runs in float64 (32-bit finite differences cannot resolve the target
tolerance). The scalar loss is the sum of the layer's outputs, except for
the softmax head where it is the cross-entropy against a fixed label.
"""

import numpy as np

from ..errors import GradientError
from . import layers as L
from . import ops


def _loss_and_grads(layer, x, label):
    """Forward + analytic backward under the grad-check loss.

    Returns (loss, dinput, {attr: dparam}).
    """
    kind = layer.kind
    if kind == "softmax":
        loss, _, dx = ops.softmax_cross_entropy_with_grad(x, label)
        return loss, dx, {}
    if kind == "batchnorm":
        y, cache, _, _ = ops.batch_norm_forward(x, layer.bn_gamma, layer.bn_beta, "train")
        dx, dgamma, dbeta = ops.batch_norm_backward(np.ones_like(y), cache)
        return float(y.sum()), dx, {"bn_gamma": dgamma, "bn_beta": dbeta}
    y, cache = L.layer_forward(layer, x, mode="train")
    dx, param_grads = L.layer_backward(layer, np.ones_like(y), cache)
    return float(y.sum()), dx, param_grads


def _loss_only(layer, x, label):
    if layer.kind == "softmax":
        return ops.softmax_cross_entropy(x, label)[0]
    if layer.kind == "batchnorm":
        y, _, _, _ = ops.batch_norm_forward(x, layer.bn_gamma, layer.bn_beta, "train")
        return float(y.sum())
    return float(L.layer_forward(layer, x, mode="train")[0].sum())


def _rel_error(analytic, numeric):
    # relative error with a unit floor: gradients below O(1) are compared
    # on an absolute scale, where float64 central differences are ~1e-10
    denom = max(1.0, abs(analytic), abs(numeric))
    return abs(analytic - numeric) / denom


def grad_check(layer, x, eps=1e-5, label=0):
    """Worst guarded relative error between analytic gradients (input and
    every trainable parameter) and central finite differences."""
    if not (1e-7 <= eps <= 1e-3):
        raise ValueError(f"grad_check: eps must be in [1e-7, 1e-3], got {eps}")
    layer = layer.clone()
    for attr in ("weights", "bias", "bn_gamma", "bn_beta", "bn_mean", "bn_var"):
        arr = getattr(layer, attr)
        if arr is not None:
            setattr(layer, attr, arr.astype(np.float64))
    x = np.asarray(x, dtype=np.float64)

    loss0, dx, param_grads = _loss_and_grads(layer, x, label)
    del loss0

    if not np.all(np.isfinite(dx)):
        idx = np.argwhere(~np.isfinite(np.atleast_1d(dx)))[0]
        raise GradientError(f"non-finite input gradient at index {tuple(idx)}")
    for attr, g in param_grads.items():
        if not np.all(np.isfinite(g)):
            idx = np.argwhere(~np.isfinite(np.atleast_1d(g)))[0]
            raise GradientError(f"non-finite gradient for {attr} at index {tuple(idx)}")

    worst = 0.0

    def probe(arr, analytic, set_value):
        nonlocal worst
        flat = arr.reshape(-1)
        aflat = np.asarray(analytic).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            set_value()
            up = _loss_only(layer, x, label)
            flat[i] = orig - eps
            set_value()
            down = _loss_only(layer, x, label)
            flat[i] = orig
            set_value()
            numeric = (up - down) / (2.0 * eps)
            worst = max(worst, _rel_error(float(aflat[i]), numeric))

    probe(x, dx, lambda: None)
    for attr, g in param_grads.items():
        probe(getattr(layer, attr), g, lambda: None)
    return worst
