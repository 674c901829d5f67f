"""Random-shape gradient-check cases for every differentiable op.

Each builder takes a Generator and returns ``(fn, inputs)`` for
``check_gradients``. Inputs to kinked ops (relu, l1) are kept away from the
kink so a step of 1e-5 never crosses it.
"""

from __future__ import annotations

import numpy as np

from voxelcast.autodiff import (
    BatchNormState,
    add,
    avgpool2d,
    batchnorm,
    concat,
    conv2d,
    conv3d,
    dense,
    l1_loss,
    l2_feature_loss,
    mean_all,
    mse_loss,
    relu,
    reshape_projection,
    scale,
    sigmoid,
    sum_all,
    tile,
    upsample_nearest,
)
from voxelcast.models.loss import LossWeights, render_loss


def away_from_zero(rng, shape, margin=0.05):
    x = rng.standard_normal(shape)
    return np.sign(x) * (margin + np.abs(x))


def _dims(rng, rank, lo=1, hi=4):
    return tuple(int(v) for v in rng.integers(lo, hi + 1, rank))


def case_add(rng):
    s = _dims(rng, rng.integers(1, 5))
    return lambda t: add(t["a"], t["b"]), {"a": rng.standard_normal(s), "b": rng.standard_normal(s)}


def case_scale(rng):
    c = float(rng.uniform(-3, 3))
    return lambda t: scale(t["x"], c), {"x": rng.standard_normal(_dims(rng, 3))}


def case_sum_all(rng):
    return lambda t: sum_all(t["x"]), {"x": rng.standard_normal(_dims(rng, 3))}


def case_mean_all(rng):
    return lambda t: mean_all(t["x"]), {"x": rng.standard_normal(_dims(rng, 3))}


def case_relu(rng):
    return lambda t: relu(t["x"]), {"x": away_from_zero(rng, _dims(rng, 4))}


def case_sigmoid(rng):
    return lambda t: sigmoid(t["x"]), {"x": 2 * rng.standard_normal(_dims(rng, 4))}


def case_conv2d(rng):
    k = int(rng.choice([1, 3]))
    stride = int(rng.integers(1, 3))
    pad = int(rng.integers(0, k // 2 + 1))
    n, cin, cout = _dims(rng, 3, 1, 3)
    h, w = _dims(rng, 2, k + 1, 6)
    method = str(rng.choice(["direct", "im2col"]))
    inputs = {"x": rng.standard_normal((n, h, w, cin)), "w": rng.standard_normal((k, k, cin, cout)),
              "b": rng.standard_normal(cout)}
    return lambda t: conv2d(t["x"], t["w"], t["b"], stride, pad, method), inputs


def case_conv3d(rng):
    k = int(rng.choice([1, 3]))
    stride = int(rng.integers(1, 3))
    pad = int(rng.integers(0, k // 2 + 1))
    n, cin, cout = _dims(rng, 3, 1, 2)
    sp = _dims(rng, 3, k, 5)
    method = str(rng.choice(["direct", "im2col"]))
    inputs = {"x": rng.standard_normal((n, *sp, cin)), "w": rng.standard_normal((k, k, k, cin, cout)),
              "b": rng.standard_normal(cout)}
    return lambda t: conv3d(t["x"], t["w"], t["b"], stride, pad, method), inputs


def case_reshape_projection(rng):
    rank = int(rng.choice([4, 5]))
    return lambda t: reshape_projection(t["x"]), {"x": rng.standard_normal(_dims(rng, rank))}


def case_concat(rng):
    base = list(_dims(rng, 4))
    ax = int(rng.integers(0, 4))
    other = list(base)
    other[ax] = int(rng.integers(1, 4))
    inputs = {"a": rng.standard_normal(base), "b": rng.standard_normal(other)}
    return lambda t: concat([t["a"], t["b"]], axis=ax), inputs


def case_tile(rng):
    n, c = _dims(rng, 2)
    spatial = _dims(rng, int(rng.integers(1, 4)))
    return lambda t: tile(t["v"], spatial), {"v": rng.standard_normal((n, c))}


def case_upsample(rng):
    spatial = int(rng.integers(1, 4))
    f = int(rng.integers(2, 4))
    x = rng.standard_normal((int(rng.integers(1, 3)),) + _dims(rng, spatial, 1, 3) + (int(rng.integers(1, 3)),))
    return lambda t: upsample_nearest(t["x"], f), {"x": x}


def case_avgpool(rng):
    size = int(rng.integers(2, 4))
    n, c = _dims(rng, 2, 1, 3)
    h, w = (size * v for v in _dims(rng, 2, 1, 3))
    return lambda t: avgpool2d(t["x"], size), {"x": rng.standard_normal((n, h, w, c))}


def case_dense(rng):
    n, fin, fout = _dims(rng, 3, 1, 6)
    inputs = {"x": rng.standard_normal((n, fin)), "w": rng.standard_normal((fin, fout)),
              "b": rng.standard_normal(fout)}
    return lambda t: dense(t["x"], t["w"], t["b"]), inputs


def case_batchnorm(rng):
    shape = (int(rng.integers(2, 4)),) + _dims(rng, int(rng.integers(0, 3)), 1, 3) + (int(rng.integers(1, 4)),)
    c = shape[-1]
    training = bool(rng.integers(0, 2))
    mean, var = rng.standard_normal(c), rng.uniform(0.5, 2.0, c)

    def fn(t):
        state = BatchNormState(c, np.float64)
        state.mean, state.var = mean.copy(), var.copy()
        return batchnorm(t["x"], t["g"], t["b"], state, training)

    inputs = {"x": rng.standard_normal(shape), "g": rng.standard_normal(c), "b": rng.standard_normal(c)}
    return fn, inputs


def case_l1(rng):
    s = _dims(rng, 4)
    a = rng.standard_normal(s)
    return lambda t: l1_loss(t["a"], t["b"]), {"a": a, "b": a + away_from_zero(rng, s)}


def case_l2_feature(rng):
    s = _dims(rng, 4)
    return lambda t: l2_feature_loss(t["a"], t["b"]), {"a": rng.standard_normal(s), "b": rng.standard_normal(s)}


def case_mse(rng):
    s = _dims(rng, 3)
    return lambda t: mse_loss(t["a"], t["b"]), {"a": rng.standard_normal(s), "b": rng.standard_normal(s)}


def case_full_loss(rng):
    n = int(rng.integers(1, 3))
    h, w = (4 * v for v in _dims(rng, 2, 1, 2))
    target = rng.uniform(0.2, 0.8, (n, h, w, 3))
    pred = target + 0.1 * away_from_zero(rng, target.shape)
    beta = float(rng.uniform(0.2, 2.0))
    return lambda t: render_loss(t["p"], target, LossWeights(beta))[0], {"p": pred}


CASES = {
    "add": case_add, "scale": case_scale, "sum_all": case_sum_all, "mean_all": case_mean_all,
    "relu": case_relu, "sigmoid": case_sigmoid, "conv2d": case_conv2d, "conv3d": case_conv3d,
    "reshape_projection": case_reshape_projection, "concat": case_concat, "tile": case_tile,
    "upsample_nearest": case_upsample, "avgpool2d": case_avgpool, "dense": case_dense,
    "batchnorm": case_batchnorm, "l1_loss": case_l1, "l2_feature_loss": case_l2_feature,
    "mse_loss": case_mse, "render_loss": case_full_loss,
}
