import numpy as np
import pytest

from synthsieve.errors import GradientError
from synthsieve.nn.gradcheck import grad_check
from synthsieve.nn.layers import (
    LayerParams,
    make_batchnorm,
    make_conv,
    make_dense,
    make_depthwise,
    make_pointwise,
)


def rng(seed):
    return np.random.default_rng(seed)


def away_from_zero(r, shape):
    # keeps relu inputs off the kink at 0
    x = r.standard_normal(shape)
    return (np.sign(x) * (np.abs(x) + 0.2)).astype(np.float64)


def test_zero_dense_layer_exact_zero_error():
    layer = LayerParams("dense", "head", weights=np.zeros((4, 3)), bias=np.zeros(3))
    err = grad_check(layer, np.zeros(4), eps=1e-5)
    assert err == 0.0


def test_dense_random():
    r = rng(1)
    layer = make_dense("head", 6, 4, r)
    err = grad_check(layer, r.standard_normal(6), eps=1e-5)
    assert err < 1e-6


def test_depthwise_random():
    r = rng(2)
    layer = make_depthwise("dw", 3, 3, 1, r)
    err = grad_check(layer, r.standard_normal((5, 5, 3)), eps=1e-5)
    assert err < 1e-4


@pytest.mark.parametrize("stride,padding", [(1, "same"), (2, "same"), (1, "valid")])
def test_conv2d_strides_paddings(stride, padding):
    r = rng(3 + stride)
    layer = make_conv("conv", 3, 2, 4, stride, r)
    layer.padding = padding
    err = grad_check(layer, r.standard_normal((5, 5, 2)), eps=1e-5)
    assert err < 1e-4


def test_pointwise():
    r = rng(5)
    layer = make_pointwise("pw", 4, 6, r)
    err = grad_check(layer, r.standard_normal((4, 4, 4)), eps=1e-5)
    assert err < 1e-4


def test_batchnorm():
    r = rng(7)
    layer = make_batchnorm("bn", 3)
    layer.bn_gamma = r.uniform(0.5, 1.5, 3).astype(np.float32)
    layer.bn_beta = r.standard_normal(3).astype(np.float32)
    err = grad_check(layer, r.standard_normal((4, 3, 3, 3)) * 2.0, eps=1e-5)
    assert err < 1e-4


def test_relu():
    r = rng(9)
    layer = LayerParams("relu", "act")
    err = grad_check(layer, away_from_zero(r, (4, 4, 2)), eps=1e-5)
    assert err < 1e-4


def test_global_avg_pool():
    r = rng(11)
    layer = LayerParams("global_avg_pool", "pool")
    err = grad_check(layer, r.standard_normal((5, 6, 3)), eps=1e-5)
    assert err < 1e-4


def test_softmax_head():
    r = rng(13)
    layer = LayerParams("softmax", "probs")
    err = grad_check(layer, r.standard_normal(4), eps=1e-5, label=2)
    assert err < 1e-4


def test_eps_out_of_range():
    layer = LayerParams("relu", "act")
    with pytest.raises(ValueError, match="eps"):
        grad_check(layer, np.ones(3), eps=1e-2)


def test_non_finite_gradient_reported():
    layer = LayerParams("dense", "head",
                        weights=np.array([[np.inf, 1.0]]), bias=np.zeros(2))
    with pytest.raises(GradientError, match="index"):
        grad_check(layer, np.ones(1), eps=1e-5)
