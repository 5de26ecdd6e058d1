"""Forward and backward passes for every layer the architectures need.

Ops are pure functions over numpy arrays. Activations are channels-last:
a single image is (H, W, C), a batch is (B, H, W, C); every op accepts both
and returns the matching rank. `*_forward` variants return (output, cache)
for the training path; `*_backward` consumes the cache. The plain op name
returns just the output.

Arithmetic runs in the common dtype of the inputs: float32 for training and
inference, float64 for gradient checking.
"""

import numpy as np

from ..errors import ShapeError
from . import kernels

BN_EPS = 1e-5
BN_MOMENTUM = 0.99

# im2col buffers are chunked over the batch to stay cache-friendly; beyond
# ~64 MB the GEMM turns memory-bound on the machines this targets.
_COL_BUDGET_BYTES = 64 << 20


def _as_batch(x, what="input"):
    x = np.asarray(x)
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ShapeError(f"{what}: expected rank 3 (H,W,C) or 4 (B,H,W,C), got rank {x.ndim}")


def out_size(in_size, k, stride, padding):
    """Spatial output extent: ceil(in/stride) for same, floor((in-k)/stride)+1 for valid."""
    if stride < 1:
        raise ShapeError(f"stride must be >= 1, got {stride}")
    if padding == "same":
        return -(-in_size // stride)
    if padding == "valid":
        if in_size < k:
            raise ShapeError(f"valid padding needs input extent >= kernel size, got {in_size} < {k}")
        return (in_size - k) // stride + 1
    raise ShapeError(f"unknown padding mode {padding!r}")


def _pad_before(in_size, out, k, stride, padding):
    if padding == "valid":
        return 0
    total = max((out - 1) * stride + k - in_size, 0)
    return total // 2


def _check_square(kernel, what):
    if kernel.shape[0] != kernel.shape[1]:
        raise ShapeError(f"{what}: kernel must be square, got {kernel.shape[0]}x{kernel.shape[1]}")


def _chunk_rows(b, per_sample_bytes):
    return max(1, min(b, _COL_BUDGET_BYTES // max(1, per_sample_bytes)))


# --- standard convolution ---------------------------------------------------

def conv2d_forward(x, kernel, stride=1, padding="same"):
    x4, squeeze = _as_batch(x, "conv2d input")
    kernel = np.asarray(kernel)
    if kernel.ndim != 4:
        raise ShapeError(f"conv2d: kernel must be (kH,kW,inC,outC), got rank {kernel.ndim}")
    _check_square(kernel, "conv2d")
    b, h, w, c = x4.shape
    k, _, kc, f = kernel.shape
    if kc != c:
        raise ShapeError(f"conv2d: kernel expects {kc} input channels, input has {c}")
    oh = out_size(h, k, stride, padding)
    ow = out_size(w, k, stride, padding)
    pt = _pad_before(h, oh, k, stride, padding)
    pl = _pad_before(w, ow, k, stride, padding)

    dt = np.result_type(x4.dtype, kernel.dtype, np.float32)
    x4 = np.ascontiguousarray(x4, dtype=dt)
    w2 = np.ascontiguousarray(kernel.reshape(k * k * c, f), dtype=dt)
    out = np.empty((b, oh, ow, f), dt)
    chunk = _chunk_rows(b, oh * ow * k * k * c * dt.itemsize)
    cols = np.empty((chunk, oh, ow, k * k * c), dt)
    for s in range(0, b, chunk):
        e = min(s + chunk, b)
        cb = cols[: e - s]
        kernels.im2col(x4[s:e], k, stride, pt, pl, cb)
        np.dot(cb.reshape(-1, k * k * c), w2, out=out[s:e].reshape(-1, f))
    cache = (x4, kernel.shape, w2, stride, (pt, pl), squeeze)
    return (out[0] if squeeze else out), cache


def conv2d(x, kernel, stride=1, padding="same"):
    """Windowed dot product of (kH,kW,inC,outC) filters over an image."""
    return conv2d_forward(x, kernel, stride, padding)[0]


def conv2d_backward(grad, cache):
    x4, kshape, w2, stride, (pt, pl), squeeze = cache
    k, _, c, f = kshape
    g4, _ = _as_batch(grad, "conv2d grad")
    g4 = np.ascontiguousarray(g4, dtype=x4.dtype)
    b, oh, ow, _ = g4.shape
    dt = x4.dtype
    dw = np.zeros((k * k * c, f), dt)
    dx = np.zeros_like(x4)
    chunk = _chunk_rows(b, oh * ow * k * k * c * dt.itemsize)
    cols = np.empty((chunk, oh, ow, k * k * c), dt)
    for s in range(0, b, chunk):
        e = min(s + chunk, b)
        cb = cols[: e - s]
        kernels.im2col(x4[s:e], k, stride, pt, pl, cb)
        g2 = g4[s:e].reshape(-1, f)
        dw += cb.reshape(-1, k * k * c).T @ g2
        dcols = (g2 @ w2.T).reshape(e - s, oh, ow, k * k * c)
        kernels.col2im_add(dcols, k, stride, pt, pl, dx[s:e])
    return (dx[0] if squeeze else dx), dw.reshape(kshape)


# --- depthwise convolution --------------------------------------------------

def depthwise_forward(x, kernel, stride=1, padding="same"):
    x4, squeeze = _as_batch(x, "depthwise input")
    kernel = np.asarray(kernel)
    if kernel.ndim != 3:
        raise ShapeError(f"depthwise_conv: kernel must be (kH,kW,C), got rank {kernel.ndim}")
    _check_square(kernel, "depthwise_conv")
    b, h, w, c = x4.shape
    k = kernel.shape[0]
    if kernel.shape[2] != c:
        raise ShapeError(f"depthwise_conv: kernel has {kernel.shape[2]} channels, input has {c}")
    oh = out_size(h, k, stride, padding)
    ow = out_size(w, k, stride, padding)
    pt = _pad_before(h, oh, k, stride, padding)
    pl = _pad_before(w, ow, k, stride, padding)

    dt = np.result_type(x4.dtype, kernel.dtype, np.float32)
    x4 = np.ascontiguousarray(x4, dtype=dt)
    kd = np.ascontiguousarray(kernel, dtype=dt)
    out = np.empty((b, oh, ow, c), dt)
    kernels.depthwise_forward(x4, kd, stride, pt, pl, out)
    cache = (x4, kd, stride, (pt, pl), squeeze)
    return (out[0] if squeeze else out), cache


def depthwise_conv(x, kernel, stride=1, padding="same"):
    """2-D correlation applied independently per channel; channel count preserved."""
    return depthwise_forward(x, kernel, stride, padding)[0]


def depthwise_backward(grad, cache):
    x4, kd, stride, (pt, pl), squeeze = cache
    g4, _ = _as_batch(grad, "depthwise grad")
    g4 = np.ascontiguousarray(g4, dtype=x4.dtype)
    dx = np.zeros_like(x4)
    dw = np.zeros_like(kd)
    kernels.depthwise_backward(g4, x4, kd, stride, pt, pl, dx, dw)
    return (dx[0] if squeeze else dx), dw


# --- pointwise (1x1) convolution --------------------------------------------

def pointwise_forward(x, weights):
    x4, squeeze = _as_batch(x, "pointwise input")
    weights = np.asarray(weights)
    if weights.ndim != 4 or weights.shape[0] != 1 or weights.shape[1] != 1:
        raise ShapeError(f"pointwise_conv: weights must be (1,1,C,F), got {weights.shape}")
    b, h, w, c = x4.shape
    _, _, kc, f = weights.shape
    if kc != c:
        raise ShapeError(f"pointwise_conv: weights expect {kc} channels, input has {c}")
    dt = np.result_type(x4.dtype, weights.dtype, np.float32)
    x4 = np.ascontiguousarray(x4, dtype=dt)
    w2 = np.ascontiguousarray(weights.reshape(c, f), dtype=dt)
    out = np.empty((b, h, w, f), dt)
    np.dot(x4.reshape(-1, c), w2, out=out.reshape(-1, f))
    cache = (x4, w2, weights.shape, squeeze)
    return (out[0] if squeeze else out), cache


def pointwise_conv(x, weights):
    """Same CxF linear map applied independently at every spatial site."""
    return pointwise_forward(x, weights)[0]


def pointwise_backward(grad, cache):
    x4, w2, wshape, squeeze = cache
    g4, _ = _as_batch(grad, "pointwise grad")
    g4 = np.ascontiguousarray(g4, dtype=x4.dtype)
    c, f = w2.shape
    g2 = g4.reshape(-1, f)
    dw = x4.reshape(-1, c).T @ g2
    dx = np.empty_like(x4)
    np.dot(g2, w2.T, out=dx.reshape(-1, c))
    return (dx[0] if squeeze else dx), dw.reshape(wshape)


# --- batch normalisation -----------------------------------------------------

def batch_norm_forward(x, gamma, beta, mode, running_mean=None, running_var=None,
                       eps=BN_EPS, fuse_relu=False):
    """Per-channel normalisation over a (B,H,W,C) batch.

    Train mode normalises with batch statistics; infer mode with the stored
    running statistics. Returns (y, cache, batch_mean, batch_var); the running
    update itself is the caller's job (it owns the parameter state). With
    fuse_relu=True the output is clamped at zero in the same pass, which is
    bit-identical to applying relu afterwards.
    """
    x4 = np.asarray(x)
    if x4.ndim != 4:
        raise ShapeError(f"batch_norm: expected a (B,H,W,C) batch, got rank {x4.ndim}")
    b, h, w, c = x4.shape
    gamma = np.asarray(gamma)
    beta = np.asarray(beta)
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"batch_norm: gamma/beta must have shape ({c},), got {gamma.shape}/{beta.shape}")
    dt = np.result_type(x4.dtype, gamma.dtype, np.float32)
    x4 = np.ascontiguousarray(x4, dtype=dt)

    if mode == "train":
        if b < 2:
            raise ShapeError("batch_norm: train mode needs batch size >= 2")
        n = b * h * w
        s, ss = kernels.channel_sums(x4)
        mu64 = s / n
        var64 = np.maximum(ss / n - mu64 * mu64, 0.0)
        inv64 = 1.0 / np.sqrt(var64 + eps)
        xh = np.empty_like(x4)
        y = np.empty_like(x4)
        g64 = gamma.astype(np.float64)
        kernels.affine_channels_dual(
            x4,
            inv64.astype(dt), (-mu64 * inv64).astype(dt),
            (g64 * inv64).astype(dt), (beta - g64 * mu64 * inv64).astype(dt),
            fuse_relu, xh, y)
        cache = (xh, inv64.astype(dt), gamma.astype(dt), y if fuse_relu else None)
        return y, cache, mu64.astype(dt), var64.astype(dt)

    if mode == "infer":
        if running_mean is None or running_var is None:
            raise ShapeError("batch_norm: infer mode requires stored running statistics")
        running_mean = np.asarray(running_mean)
        running_var = np.asarray(running_var)
        if running_mean.shape != (c,) or running_var.shape != (c,):
            raise ShapeError(f"batch_norm: running stats must have shape ({c},)")
        if np.any(running_var < 0):
            raise ValueError("batch_norm: stored variance has negative entries")
        inv64 = 1.0 / np.sqrt(running_var.astype(np.float64) + eps)
        g64 = gamma.astype(np.float64)
        mu64 = running_mean.astype(np.float64)
        y = np.empty_like(x4)
        kernels.affine_channels(
            x4, (g64 * inv64).astype(dt), (beta - g64 * mu64 * inv64).astype(dt),
            fuse_relu, y)
        return y, None, None, None

    raise ValueError(f"batch_norm: unknown mode {mode!r}")


def batch_norm_backward(grad, cache):
    xh, inv, gamma, relu_out = cache
    g4 = np.ascontiguousarray(grad, dtype=xh.dtype)
    if relu_out is not None:
        masked = np.empty_like(g4)
        kernels.relu_backward_mask(g4, relu_out, masked)
        g4 = masked
    b, h, w, c = g4.shape
    n = b * h * w
    sg, sgx = kernels.bn_backward_reduce(g4, xh)
    dbeta = sg.astype(xh.dtype)
    dgamma = sgx.astype(xh.dtype)
    coef = (gamma.astype(np.float64) * inv.astype(np.float64)).astype(xh.dtype)
    dx = np.empty_like(g4)
    kernels.bn_backward_dx(g4, xh, coef, (sg / n).astype(xh.dtype),
                           (sgx / n).astype(xh.dtype), dx)
    return dx, dgamma, dbeta


# --- elementwise / head ------------------------------------------------------

def relu_forward(x):
    y = np.maximum(np.asarray(x), 0)
    return y, y


def relu(x):
    """Elementwise max(0, x)."""
    return relu_forward(x)[0]


def relu_backward(grad, cache):
    out = cache
    g = np.ascontiguousarray(grad, dtype=out.dtype)
    dx = np.empty_like(g)
    kernels.relu_backward_mask(g, out, dx)
    return dx


def global_avg_pool_forward(x):
    x4, squeeze = _as_batch(x, "global_avg_pool input")
    y = x4.mean(axis=(1, 2), keepdims=True, dtype=x4.dtype)
    cache = (x4.shape, squeeze, x4.dtype)
    return (y[0] if squeeze else y), cache


def global_avg_pool(x):
    """Channel means: (H,W,C) -> (1,1,C)."""
    return global_avg_pool_forward(x)[0]


def global_avg_pool_backward(grad, cache):
    (b, h, w, c), squeeze, dt = cache
    g4, _ = _as_batch(grad, "global_avg_pool grad")
    dx = np.empty((b, h, w, c), dt)
    dx[:] = (g4 / (h * w)).astype(dt)
    return dx[0] if squeeze else dx


def dense_forward(x, weights, bias):
    x = np.asarray(x)
    weights = np.asarray(weights)
    bias = np.asarray(bias)
    single = x.ndim == 1
    x2 = x[None] if single else x
    if x2.ndim != 2:
        raise ShapeError(f"dense: input must be a vector or (B,N), got rank {x.ndim}")
    n, kdim = weights.shape if weights.ndim == 2 else (None, None)
    if weights.ndim != 2 or x2.shape[1] != n:
        raise ShapeError(
            f"dense: input width {x2.shape[-1]} does not match weight rows "
            f"{weights.shape[0] if weights.ndim == 2 else weights.shape}")
    if bias.shape != (kdim,):
        raise ShapeError(f"dense: bias must have shape ({kdim},), got {bias.shape}")
    dt = np.result_type(x2.dtype, weights.dtype, np.float32)
    y = x2.astype(dt) @ weights.astype(dt) + bias.astype(dt)
    cache = (x2.astype(dt), weights.astype(dt), single)
    return (y[0] if single else y), cache


def dense(x, weights, bias):
    """Affine map: y = x @ W + b."""
    return dense_forward(x, weights, bias)[0]


def dense_backward(grad, cache):
    x2, w, single = cache
    g2 = np.asarray(grad)
    if single:
        g2 = g2[None]
    g2 = g2.astype(x2.dtype)
    dw = x2.T @ g2
    db = g2.sum(axis=0)
    dx = g2 @ w.T
    return (dx[0] if single else dx), dw, db


def softmax_cross_entropy(logits, label):
    """Stabilised softmax + cross-entropy.

    logits: (K,) with an int label, or (B,K) with (B,) labels. Returns
    (loss, probs); the batched loss is the mean over rows.
    """
    logits = np.asarray(logits)
    single = logits.ndim == 1
    z = logits[None] if single else logits
    if z.ndim != 2:
        raise ShapeError(f"softmax_cross_entropy: logits must be (K,) or (B,K), got rank {logits.ndim}")
    b, kdim = z.shape
    if kdim < 2:
        raise ShapeError(f"softmax_cross_entropy: need at least 2 classes, got {kdim}")
    labels = np.atleast_1d(np.asarray(label, dtype=np.int64))
    if labels.shape != (b,):
        raise ShapeError(f"softmax_cross_entropy: expected {b} labels, got shape {labels.shape}")
    if np.any(labels < 0) or np.any(labels >= kdim):
        raise ValueError(f"softmax_cross_entropy: label out of range [0, {kdim})")
    dt = np.result_type(z.dtype, np.float32)
    z = z.astype(dt)
    zs = z - z.max(axis=1, keepdims=True)
    ez = np.exp(zs)
    denom = ez.sum(axis=1, keepdims=True)
    probs = ez / denom
    logp = zs - np.log(denom)
    loss = -logp[np.arange(b), labels].mean()
    return float(loss), (probs[0] if single else probs)


def softmax_cross_entropy_with_grad(logits, label):
    """As softmax_cross_entropy, plus dloss/dlogits (mean-reduced over the batch)."""
    logits = np.asarray(logits)
    single = logits.ndim == 1
    loss, probs = softmax_cross_entropy(logits, label)
    p2 = probs[None] if single else probs
    labels = np.atleast_1d(np.asarray(label, dtype=np.int64))
    dlogits = p2.copy()
    dlogits[np.arange(p2.shape[0]), labels] -= 1
    dlogits /= p2.shape[0]
    return loss, probs, (dlogits[0] if single else dlogits)
