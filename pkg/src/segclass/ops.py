"""Differentiable building blocks for the network graphs.

Every function takes and returns ``Tensor`` objects, validates shapes up
front (raising ``ShapeError`` with both offending shapes in the message),
and records a backward closure via ``Tensor.from_op``. Convolution and max
pooling dispatch to the selected kernel backend; everything else is plain
numpy. Activations follow the ``(batch, channels, *spatial)`` layout.
"""

import numpy as np

from . import kernels
from .errors import ConfigError, ShapeError
from .tensor import Tensor


def conv(x, w, b=None):
    """3^d convolution, stride 1, zero padding 1; preserves spatial shape."""
    if x.data.ndim != w.data.ndim or w.data.ndim not in (4, 5):
        raise ShapeError(f"conv expects matching 4-d or 5-d input/weight, got {x.shape} and {w.shape}")
    if any(k != 3 for k in w.shape[2:]):
        raise ShapeError(f"conv kernel edges must be 3, got weight shape {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv expects {w.shape[1]} input channels, got input {x.shape} for weight {w.shape}")
    y = kernels.conv_fwd(x.data, w.data)
    if b is not None:
        if b.shape != (w.shape[0],):
            raise ShapeError(f"conv bias must have shape ({w.shape[0]},), got {b.shape}")
        y = y + b.data.reshape((1, -1) + (1,) * (y.ndim - 2))

    def bwd(g):
        gx, gw = kernels.conv_bwd(x.data, w.data, g, need_gx=x.requires_grad)
        if gx is not None:
            x.accumulate(gx)
        w.accumulate(gw)
        if b is not None:
            b.accumulate(g.sum(axis=(0,) + tuple(range(2, g.ndim))))

    parents = (x, w) if b is None else (x, w, b)
    return Tensor.from_op(y, parents, bwd)


def conv1x(x, w, b=None):
    """1^d convolution: a per-position linear map across channels."""
    if w.data.ndim != 2:
        raise ShapeError(f"conv1x weight must be 2-d (out, in), got {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv1x expects {w.shape[1]} input channels, got input {x.shape}")
    y = np.moveaxis(np.tensordot(w.data, x.data, axes=([1], [1])), 0, 1)
    y = np.ascontiguousarray(y)
    if b is not None:
        if b.shape != (w.shape[0],):
            raise ShapeError(f"conv1x bias must have shape ({w.shape[0]},), got {b.shape}")
        y = y + b.data.reshape((1, -1) + (1,) * (y.ndim - 2))

    def bwd(g):
        if x.requires_grad:
            gx = np.moveaxis(np.tensordot(w.data, g, axes=([0], [1])), 0, 1)
            x.accumulate(np.ascontiguousarray(gx))
        red = (0,) + tuple(range(2, g.ndim))
        w.accumulate(np.tensordot(g, x.data, axes=(red, red)))
        if b is not None:
            b.accumulate(g.sum(axis=red))

    parents = (x, w) if b is None else (x, w, b)
    return Tensor.from_op(y, parents, bwd)


def maxpool(x):
    """Non-overlapping 2x max pooling; ties go to the first window position."""
    if x.data.ndim not in (4, 5):
        raise ShapeError(f"maxpool expects a 4-d or 5-d tensor, got {x.shape}")
    if any(n % 2 for n in x.shape[2:]):
        raise ShapeError(f"maxpool needs even spatial dims, got {x.shape}")
    y, idx = kernels.maxpool_fwd(x.data)

    def bwd(g):
        x.accumulate(kernels.maxpool_bwd(idx, g, x.shape))

    return Tensor.from_op(y, (x,), bwd)


def upsample(x):
    """Nearest-neighbour 2x upsampling along every spatial axis."""
    if x.data.ndim not in (4, 5):
        raise ShapeError(f"upsample expects a 4-d or 5-d tensor, got {x.shape}")
    y = x.data
    for axis in range(2, x.data.ndim):
        y = np.repeat(y, 2, axis=axis)

    def bwd(g):
        dim = g.ndim - 2
        shape = g.shape[:2]
        for n in g.shape[2:]:
            shape += (n // 2, 2)
        red = tuple(3 + 2 * i for i in range(dim))
        x.accumulate(g.reshape(shape).sum(axis=red))

    return Tensor.from_op(y, (x,), bwd)


def relu(x):
    y = np.maximum(x.data, 0)

    def bwd(g):
        x.accumulate(g * (x.data > 0))

    return Tensor.from_op(y, (x,), bwd)


def batchnorm(x, gamma, beta, running_mean, running_var, train, momentum=0.99, eps=1e-5):
    """Per-channel batch normalization (channel axis 1).

    Statistics are reduced over the batch and all spatial axes using the
    biased variance. In training mode the running arrays are updated in
    place: ``running = momentum * running + (1 - momentum) * batch_stat``.
    Evaluation mode normalizes with the running statistics and never
    mutates them.
    """
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"batchnorm scale/shift must have shape ({c},), got {gamma.shape} and {beta.shape}")
    axes = (0,) + tuple(range(2, x.data.ndim))
    bshape = (1, c) + (1,) * (x.data.ndim - 2)
    n = int(np.prod([x.shape[a] for a in axes]))
    gam = gamma.data.reshape(bshape)
    bet = beta.data.reshape(bshape)
    if train:
        if n < 2:
            raise ShapeError(f"batchnorm in training mode needs >1 value per channel, got input {x.shape}")
        mean = x.data.mean(axis=axes, keepdims=True)
        var = x.data.var(axis=axes, keepdims=True)
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mean.reshape(-1)
        running_var *= momentum
        running_var += (1.0 - momentum) * var.reshape(-1)
    else:
        mean = running_mean.reshape(bshape).astype(x.dtype)
        var = running_var.reshape(bshape).astype(x.dtype)
    ivar = 1.0 / np.sqrt(var + np.asarray(eps, dtype=x.dtype))
    xhat = (x.data - mean) * ivar
    y = gam * xhat + bet

    def bwd(g):
        gamma.accumulate((g * xhat).sum(axis=axes))
        beta.accumulate(g.sum(axis=axes))
        if x.requires_grad:
            if train:
                gm = g.mean(axis=axes, keepdims=True)
                gxm = (g * xhat).mean(axis=axes, keepdims=True)
                x.accumulate(gam * ivar * (g - gm - xhat * gxm))
            else:
                x.accumulate(g * gam * ivar)

    return Tensor.from_op(y, (x, gamma, beta), bwd)


def dropout(x, rate, train, rng=None):
    """Inverted dropout: scales kept activations by 1/(1-rate) in training."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    mask = (rng.random(x.shape) >= rate) / np.asarray(1.0 - rate, dtype=x.dtype)
    mask = mask.astype(x.dtype)

    def bwd(g):
        x.accumulate(g * mask)

    return Tensor.from_op(x.data * mask, (x,), bwd)


def concat(tensors, axis=1):
    """Concatenate along ``axis`` (default: channels)."""
    if not tensors:
        raise ShapeError("concat needs at least one tensor")
    base = list(tensors[0].shape)
    for t in tensors[1:]:
        other = list(t.shape)
        if len(other) != len(base) or any(
            i != axis and a != b for i, (a, b) in enumerate(zip(base, other))
        ):
            raise ShapeError(f"concat shapes differ off-axis: {tensors[0].shape} vs {t.shape}")
    y = np.concatenate([t.data for t in tensors], axis=axis)
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bwd(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            t.accumulate(piece)

    return Tensor.from_op(y, tuple(tensors), bwd)


def residual_add(a, b):
    """Elementwise skip connection; shapes must match exactly."""
    if a.shape != b.shape:
        raise ShapeError(f"residual_add shapes differ: {a.shape} vs {b.shape}")

    def bwd(g):
        a.accumulate(g)
        b.accumulate(g)

    return Tensor.from_op(a.data + b.data, (a, b), bwd)


def dense(x, w, b=None):
    """Fully connected layer: y = x @ w.T + b with w shaped (out, in)."""
    if x.data.ndim != 2 or w.data.ndim != 2:
        raise ShapeError(f"dense expects 2-d input and weight, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"dense expects {w.shape[1]} input features, got input {x.shape}")
    y = x.data @ w.data.T
    if b is not None:
        if b.shape != (w.shape[0],):
            raise ShapeError(f"dense bias must have shape ({w.shape[0]},), got {b.shape}")
        y = y + b.data

    def bwd(g):
        if x.requires_grad:
            x.accumulate(g @ w.data)
        w.accumulate(g.T @ x.data)
        if b is not None:
            b.accumulate(g.sum(axis=0))

    parents = (x, w) if b is None else (x, w, b)
    return Tensor.from_op(y, parents, bwd)


def flatten(x):
    """Collapse everything but the batch axis."""
    y = np.ascontiguousarray(x.data).reshape(x.shape[0], -1)

    def bwd(g):
        x.accumulate(g.reshape(x.shape))

    return Tensor.from_op(y, (x,), bwd)


def softmax(x, axis=1):
    """Numerically stable softmax along ``axis``."""
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        x.accumulate(s * (g - (g * s).sum(axis=axis, keepdims=True)))

    return Tensor.from_op(s, (x,), bwd)
