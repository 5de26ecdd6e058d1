"""From-scratch tensor ops and layers for the classifier architectures."""

from .ops import (
    conv2d,
    depthwise_conv,
    pointwise_conv,
    relu,
    global_avg_pool,
    dense,
    softmax_cross_entropy,
    out_size,
)
from .layers import LayerParams, batch_norm, layer_forward, layer_backward
from .gradcheck import grad_check

__all__ = [
    "conv2d", "depthwise_conv", "pointwise_conv", "relu", "global_avg_pool",
    "dense", "softmax_cross_entropy", "out_size",
    "LayerParams", "batch_norm", "layer_forward", "layer_backward",
    "grad_check",
]
