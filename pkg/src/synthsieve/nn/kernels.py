"""Numba inner loops for the layer math.

The host this targets is bandwidth-poor relative to its SIMD throughput, so
every kernel makes as few passes over the activation arrays as possible.
All loops are single-threaded and run in IEEE order (no fastmath): results
are bit-reproducible for identical inputs.

Array layout is channels-last throughout: activations (B, H, W, C), standard
kernels (kH, kW, inC, outC) flattened to (kH*kW*inC, outC) for the GEMM,
depthwise kernels (kH, kW, C).
"""

import numpy as np
from numba import njit


@njit(cache=True)
def im2col(x, k, stride, pad_top, pad_left, cols):
    """Gather conv patches of x into cols (B, oh, ow, k*k*C), zero-filling
    taps that fall outside the image."""
    b, h, w, c = x.shape
    oh, ow = cols.shape[1], cols.shape[2]
    for bi in range(b):
        for oi in range(oh):
            i0 = oi * stride - pad_top
            for oj in range(ow):
                j0 = oj * stride - pad_left
                idx = 0
                for ki in range(k):
                    ii = i0 + ki
                    inside_row = 0 <= ii < h
                    for kj in range(k):
                        jj = j0 + kj
                        if inside_row and 0 <= jj < w:
                            for ci in range(c):
                                cols[bi, oi, oj, idx] = x[bi, ii, jj, ci]
                                idx += 1
                        else:
                            for ci in range(c):
                                cols[bi, oi, oj, idx] = 0.0
                                idx += 1


@njit(cache=True)
def col2im_add(dcols, k, stride, pad_top, pad_left, dx):
    """Scatter-add patch gradients (B, oh, ow, k*k*C) back into dx."""
    b, h, w, c = dx.shape
    oh, ow = dcols.shape[1], dcols.shape[2]
    for bi in range(b):
        for oi in range(oh):
            i0 = oi * stride - pad_top
            for oj in range(ow):
                j0 = oj * stride - pad_left
                idx = 0
                for ki in range(k):
                    ii = i0 + ki
                    inside_row = 0 <= ii < h
                    for kj in range(k):
                        jj = j0 + kj
                        if inside_row and 0 <= jj < w:
                            for ci in range(c):
                                dx[bi, ii, jj, ci] += dcols[bi, oi, oj, idx]
                                idx += 1
                        else:
                            idx += c


@njit(cache=True)
def depthwise_forward(x, w, stride, pad_top, pad_left, out):
    """Per-channel 2-D correlation: out[b,o,p,c] = sum_ij w[i,j,c]*x[b,...,c]."""
    b, h, wd, c = x.shape
    k = w.shape[0]
    oh, ow = out.shape[1], out.shape[2]
    for bi in range(b):
        for oi in range(oh):
            i0 = oi * stride - pad_top
            ki_lo = -i0 if i0 < 0 else 0
            ki_hi = h - i0 if i0 + k > h else k
            for oj in range(ow):
                j0 = oj * stride - pad_left
                kj_lo = -j0 if j0 < 0 else 0
                kj_hi = wd - j0 if j0 + k > wd else k
                for ci in range(c):
                    out[bi, oi, oj, ci] = 0.0
                for ki in range(ki_lo, ki_hi):
                    ii = i0 + ki
                    for kj in range(kj_lo, kj_hi):
                        jj = j0 + kj
                        for ci in range(c):
                            out[bi, oi, oj, ci] += w[ki, kj, ci] * x[bi, ii, jj, ci]


@njit(cache=True)
def depthwise_backward(g, x, w, stride, pad_top, pad_left, dx, dw):
    """Accumulate input and kernel gradients for the depthwise correlation.
    dx and dw must be zero-initialised by the caller."""
    b, h, wd, c = x.shape
    k = w.shape[0]
    oh, ow = g.shape[1], g.shape[2]
    for bi in range(b):
        for oi in range(oh):
            i0 = oi * stride - pad_top
            ki_lo = -i0 if i0 < 0 else 0
            ki_hi = h - i0 if i0 + k > h else k
            for oj in range(ow):
                j0 = oj * stride - pad_left
                kj_lo = -j0 if j0 < 0 else 0
                kj_hi = wd - j0 if j0 + k > wd else k
                for ki in range(ki_lo, ki_hi):
                    ii = i0 + ki
                    for kj in range(kj_lo, kj_hi):
                        jj = j0 + kj
                        for ci in range(c):
                            gv = g[bi, oi, oj, ci]
                            dw[ki, kj, ci] += gv * x[bi, ii, jj, ci]
                            dx[bi, ii, jj, ci] += gv * w[ki, kj, ci]


@njit(cache=True)
def channel_sums(x):
    """Per-channel sum and sum of squares in float64, one pass."""
    b, h, w, c = x.shape
    s = np.zeros(c, np.float64)
    ss = np.zeros(c, np.float64)
    for bi in range(b):
        for i in range(h):
            for j in range(w):
                for ci in range(c):
                    v = x[bi, i, j, ci]
                    s[ci] += v
                    ss[ci] += v * v
    return s, ss


@njit(cache=True)
def affine_channels(x, scale, shift, clamp_negative, out):
    """out = x*scale + shift per channel, optionally clamped at zero (ReLU)."""
    b, h, w, c = x.shape
    for bi in range(b):
        for i in range(h):
            for j in range(w):
                for ci in range(c):
                    v = x[bi, i, j, ci] * scale[ci] + shift[ci]
                    if clamp_negative and v < 0:
                        v = 0.0
                    out[bi, i, j, ci] = v


@njit(cache=True)
def affine_channels_dual(x, scale1, shift1, scale2, shift2, clamp2, out1, out2):
    """Two per-channel affines of the same input in one read:
    out1 = x*scale1 + shift1, out2 = x*scale2 + shift2 (optionally clamped)."""
    b, h, w, c = x.shape
    for bi in range(b):
        for i in range(h):
            for j in range(w):
                for ci in range(c):
                    v = x[bi, i, j, ci]
                    out1[bi, i, j, ci] = v * scale1[ci] + shift1[ci]
                    u = v * scale2[ci] + shift2[ci]
                    if clamp2 and u < 0:
                        u = 0.0
                    out2[bi, i, j, ci] = u


@njit(cache=True)
def bn_backward_reduce(g, xh):
    """Per-channel sums of g and g*xh (for dbeta/dgamma), float64."""
    b, h, w, c = g.shape
    sg = np.zeros(c, np.float64)
    sgx = np.zeros(c, np.float64)
    for bi in range(b):
        for i in range(h):
            for j in range(w):
                for ci in range(c):
                    gv = g[bi, i, j, ci]
                    sg[ci] += gv
                    sgx[ci] += gv * xh[bi, i, j, ci]
    return sg, sgx


@njit(cache=True)
def bn_backward_dx(g, xh, coef, sg_n, sgx_n, dx):
    """dx = coef * (g - sg_n - xh*sgx_n); the reduction terms are already
    divided by the element count per channel."""
    b, h, w, c = g.shape
    for bi in range(b):
        for i in range(h):
            for j in range(w):
                for ci in range(c):
                    dx[bi, i, j, ci] = coef[ci] * (
                        g[bi, i, j, ci] - sg_n[ci]
                        - xh[bi, i, j, ci] * sgx_n[ci])


@njit(cache=True)
def relu_backward_mask(g, out, dx):
    """dx = g where the forward output was positive, else 0."""
    n = g.size
    gf = g.reshape(n)
    of = out.reshape(n)
    df = dx.reshape(n)
    for i in range(n):
        df[i] = gf[i] if of[i] > 0 else 0.0
