"""Differentiable ops, channels-last throughout.

Image tensors are (N, H, W, C); volumes are (N, X, Y, Z, C). Convolution
kernels are (*kernel_size, C_in, C_out).
"""

from __future__ import annotations

import itertools

import numpy as np

from .tensor import DimensionError, Tensor, as_tensor


def _out(data, parents, backward):
    return Tensor(data, parents=parents, backward=backward)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"add: shapes {a.shape} and {b.shape} differ")

    def backward(g):
        if a.requires_grad:
            a.accumulate(g)
        if b.requires_grad:
            b.accumulate(g)

    return _out(a.data + b.data, (a, b), backward)


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)

    def backward(g):
        a.accumulate(g * c)

    return _out(a.data * c, (a,), backward)


def sum_all(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        a.accumulate(np.broadcast_to(g, a.shape).astype(a.dtype))

    return _out(a.data.sum(), (a,), backward)


def mean_all(a) -> Tensor:
    a = as_tensor(a)
    n = a.data.size

    def backward(g):
        a.accumulate(np.broadcast_to(g / n, a.shape).astype(a.dtype))

    return _out(a.data.mean(), (a,), backward)


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0

    def backward(g):
        x.accumulate(g * mask)

    return _out(x.data * mask, (x,), backward)


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))

    def backward(g):
        x.accumulate(g * y * (1.0 - y))

    return _out(y, (x,), backward)


# ---------------------------------------------------------------- convolution


def conv_output_size(n: int, k: int, stride: int, padding: int) -> int:
    return (n + 2 * padding - k) // stride + 1


def _check_conv(x, w, spatial, stride):
    if x.ndim != spatial + 2 or w.ndim != spatial + 2:
        raise DimensionError(
            f"conv{spatial}d expects input rank {spatial + 2} and kernel rank {spatial + 2}, "
            f"got {x.shape} and {w.shape}"
        )
    if x.shape[-1] != w.shape[-2]:
        raise DimensionError(f"input has {x.shape[-1]} channels, kernel expects {w.shape[-2]}")
    if stride < 1:
        raise DimensionError("stride must be >= 1")


def _tap_slices(offsets, stride, out_sz):
    return (slice(None),) + tuple(
        slice(o, o + stride * (n - 1) + 1, stride) for o, n in zip(offsets, out_sz)
    ) + (slice(None),)


def _conv(x, w, b, stride, padding, spatial, method):
    x, w = as_tensor(x), as_tensor(w)
    b = None if b is None else as_tensor(b)
    _check_conv(x, w, spatial, stride)
    ksz = w.shape[:spatial]
    cin, cout = w.shape[-2:]
    pad = [(0, 0)] + [(padding, padding)] * spatial + [(0, 0)]
    xp = np.pad(x.data, pad) if padding else x.data
    out_sz = tuple(
        conv_output_size(n, k, stride, padding) for n, k in zip(x.shape[1:-1], ksz)
    )
    if min(out_sz) < 1:
        raise DimensionError(f"kernel {ksz} larger than padded input {xp.shape[1:-1]}")
    taps = list(itertools.product(*(range(k) for k in ksz)))
    n = x.shape[0]

    if method == "direct":
        out = np.zeros((n,) + out_sz + (cout,), dtype=x.dtype)
        for off in taps:
            out += xp[_tap_slices(off, stride, out_sz)] @ w.data[off]
    elif method == "im2col":
        cols = np.stack([xp[_tap_slices(off, stride, out_sz)] for off in taps], axis=-2)
        cols = cols.reshape(-1, len(taps) * cin)
        out = (cols @ w.data.reshape(-1, cout)).reshape((n,) + out_sz + (cout,))
    else:
        raise ValueError(f"unknown conv method {method!r}")
    if b is not None:
        out = out + b.data

    def backward(g):
        g2 = g.reshape(-1, cout)
        if w.requires_grad:
            gw = np.empty_like(w.data)
            for off in taps:
                gw[off] = xp[_tap_slices(off, stride, out_sz)].reshape(-1, cin).T @ g2
            w.accumulate(gw)
        if b is not None and b.requires_grad:
            b.accumulate(g2.sum(axis=0))
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for off in taps:
                gxp[_tap_slices(off, stride, out_sz)] += g @ w.data[off].T
            if padding:
                inner = (slice(None),) + (slice(padding, -padding),) * spatial + (slice(None),)
                gxp = gxp[inner]
            x.accumulate(gxp)

    parents = (x, w) if b is None else (x, w, b)
    return _out(out, parents, backward)


def conv2d(x, w, b=None, stride: int = 1, padding: int = 0, method: str = "direct") -> Tensor:
    """2D cross-correlation of (N, H, W, C) input with (kh, kw, C, O) kernel."""
    return _conv(x, w, b, stride, padding, 2, method)


def conv3d(x, w, b=None, stride: int = 1, padding: int = 0, method: str = "direct") -> Tensor:
    """3D cross-correlation of (N, X, Y, Z, C) input with (kx, ky, kz, C, O) kernel."""
    return _conv(x, w, b, stride, padding, 3, method)


# ---------------------------------------------------------------- shape ops


def reshape_projection(x) -> Tensor:
    """Collapse depth into channels: h x w x d x c -> h x w x (d*c).

    A leading batch axis is allowed (rank 5). Element (i, j, k, l) lands at
    (i, j, k * c + l).
    """
    x = as_tensor(x)
    if x.ndim not in (4, 5):
        raise DimensionError(f"reshape_projection expects rank 4 (or batched rank 5), got {x.shape}")
    shape = x.shape
    new = shape[:-2] + (shape[-2] * shape[-1],)

    def backward(g):
        x.accumulate(g.reshape(shape))

    return _out(x.data.reshape(new), (x,), backward)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if len(t.shape) != len(ref) or any(
            s != r for i, (s, r) in enumerate(zip(t.shape, ref)) if i != ax
        ):
            raise DimensionError(f"concat: incompatible shapes {ref} and {t.shape}")
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[ax] = slice(lo, hi)
                t.accumulate(g[tuple(idx)])

    return _out(np.concatenate([t.data for t in tensors], axis=ax), tuple(tensors), backward)


def tile(v, spatial) -> Tensor:
    """Broadcast (N, C) features to every position of an (N, *spatial, C) map."""
    v = as_tensor(v)
    if v.ndim != 2:
        raise DimensionError(f"tile expects (N, C), got {v.shape}")
    spatial = tuple(int(s) for s in spatial)
    shape = (v.shape[0],) + spatial + (v.shape[1],)
    expand = (slice(None),) + (None,) * len(spatial) + (slice(None),)
    axes = tuple(range(1, 1 + len(spatial)))

    def backward(g):
        v.accumulate(g.sum(axis=axes))

    return _out(np.broadcast_to(v.data[expand], shape).copy(), (v,), backward)


def upsample_nearest(x, factor: int = 2) -> Tensor:
    """Repeat every spatial element ``factor`` times along each spatial axis."""
    x = as_tensor(x)
    if x.ndim < 3:
        raise DimensionError("upsample_nearest expects (N, *spatial, C)")
    spatial = x.ndim - 2
    out = x.data
    for ax in range(1, 1 + spatial):
        out = np.repeat(out, factor, axis=ax)

    def backward(g):
        shape = [x.shape[0]]
        for n in x.shape[1:-1]:
            shape += [n, factor]
        shape.append(x.shape[-1])
        sum_axes = tuple(2 + 2 * i for i in range(spatial))
        x.accumulate(g.reshape(shape).sum(axis=sum_axes))

    return _out(out, (x,), backward)


def avgpool2d(x, size: int = 2) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 4:
        raise DimensionError(f"avgpool2d expects (N, H, W, C), got {x.shape}")
    n, h, w, c = x.shape
    if h % size or w % size:
        raise DimensionError(f"avgpool2d: {h}x{w} not divisible by {size}")
    out = x.data.reshape(n, h // size, size, w // size, size, c).mean(axis=(2, 4))

    def backward(g):
        up = np.repeat(np.repeat(g, size, axis=1), size, axis=2) / (size * size)
        x.accumulate(up.astype(x.dtype))

    return _out(out, (x,), backward)


# ---------------------------------------------------------------- layers


def dense(x, w, b=None) -> Tensor:
    x, w = as_tensor(x), as_tensor(w)
    b = None if b is None else as_tensor(b)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise DimensionError(f"dense: cannot multiply {x.shape} by {w.shape}")
    out = x.data @ w.data
    if b is not None:
        if b.shape != (w.shape[1],):
            raise DimensionError(f"dense: bias shape {b.shape} != ({w.shape[1]},)")
        out = out + b.data

    def backward(g):
        if x.requires_grad:
            x.accumulate(g @ w.data.T)
        if w.requires_grad:
            w.accumulate(x.data.T @ g)
        if b is not None and b.requires_grad:
            b.accumulate(g.sum(axis=0))

    parents = (x, w) if b is None else (x, w, b)
    return _out(out, parents, backward)


class BatchNormState:
    """Running statistics for one batchnorm layer (not trained by Adam)."""

    def __init__(self, channels: int, dtype=np.float32, momentum: float = 0.9, eps: float = 1e-5):
        self.mean = np.zeros(channels, dtype=dtype)
        self.var = np.ones(channels, dtype=dtype)
        self.momentum = momentum
        self.eps = eps


def batchnorm(x, gamma, beta, state: BatchNormState, training: bool = True) -> Tensor:
    """Normalize over every axis except the trailing channel axis."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(f"batchnorm: expected ({c},) scale/shift")
    axes = tuple(range(x.ndim - 1))
    m = x.data.size // c
    if training:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        mom = state.momentum
        state.mean = (mom * state.mean + (1 - mom) * mu).astype(state.mean.dtype)
        state.var = (mom * state.var + (1 - mom) * var).astype(state.var.dtype)
    else:
        mu, var = state.mean.astype(x.dtype), state.var.astype(x.dtype)
    inv_std = 1.0 / np.sqrt(var + state.eps)
    xhat = (x.data - mu) * inv_std
    out = gamma.data * xhat + beta.data

    def backward(g):
        if gamma.requires_grad:
            gamma.accumulate((g * xhat).sum(axis=axes))
        if beta.requires_grad:
            beta.accumulate(g.sum(axis=axes))
        if x.requires_grad:
            gx = g * gamma.data
            if training:
                gx = inv_std / m * (
                    m * gx - gx.sum(axis=axes) - xhat * (gx * xhat).sum(axis=axes)
                )
            else:
                gx = gx * inv_std
            x.accumulate(gx.astype(x.dtype))

    return _out(out.astype(x.dtype), (x, gamma, beta), backward)


# ---------------------------------------------------------------- losses


def _check_pair(a, b, name):
    if a.shape != b.shape:
        raise DimensionError(f"{name}: shapes {a.shape} and {b.shape} differ")


def l1_loss(a, b) -> Tensor:
    """Mean absolute difference."""
    a, b = as_tensor(a), as_tensor(b)
    _check_pair(a, b, "l1_loss")
    diff = a.data - b.data
    n = diff.size

    def backward(g):
        s = np.sign(diff) * (g / n)
        if a.requires_grad:
            a.accumulate(s.astype(a.dtype))
        if b.requires_grad:
            b.accumulate((-s).astype(b.dtype))

    return _out(np.abs(diff).mean(), (a, b), backward)


def l2_feature_loss(a, b) -> Tensor:
    """Batch mean of the per-sample root-mean-square feature difference.

    This is the L2 norm of the difference scaled by 1/sqrt(#elements per
    sample), which keeps the term comparable across layer sizes.
    """
    a, b = as_tensor(a), as_tensor(b)
    _check_pair(a, b, "l2_feature_loss")
    n = a.shape[0]
    diff = (a.data - b.data).reshape(n, -1)
    m = diff.shape[1]
    rms = np.sqrt((diff * diff).mean(axis=1))

    def backward(g):
        with np.errstate(invalid="ignore", divide="ignore"):
            coef = np.where(rms > 0, g / (n * m * rms), 0.0)
        ga = (diff * coef[:, None]).reshape(a.shape)
        if a.requires_grad:
            a.accumulate(ga.astype(a.dtype))
        if b.requires_grad:
            b.accumulate((-ga).astype(b.dtype))

    return _out(rms.mean(), (a, b), backward)


def mse_loss(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_pair(a, b, "mse_loss")
    diff = a.data - b.data

    def backward(g):
        s = 2.0 * diff * (g / diff.size)
        if a.requires_grad:
            a.accumulate(s.astype(a.dtype))
        if b.requires_grad:
            b.accumulate((-s).astype(b.dtype))

    return _out((diff * diff).mean(), (a, b), backward)
