"""Pure-numpy kernels: same-padded 3^d convolution and 2x max pooling.

This is the fallback path used when numba is unavailable or when
``SEGCLASS_BACKEND=numpy`` is set. Convolutions go through an im2col view
plus one BLAS contraction, which favors layers with many channels and small
spatial extent; the numba twin in ``kernels_numba`` favors the opposite
regime. Both expose the same four functions with identical semantics.

Layout conventions: activations are ``(batch, channels, *spatial)``, weights
are ``(out_channels, in_channels, *kernel)`` with every kernel edge equal to
3, stride 1 and zero padding 1, so spatial shape is preserved. Pooling is
2x non-overlapping with ties broken toward the first window position in
row-major order.
"""

import numpy as np


def _patches(xp, dim):
    # strided (B, C, 3[,3,3], *spatial_out) view of the padded input
    s = xp.strides
    spatial = tuple(n - 2 for n in xp.shape[2:])
    shape = xp.shape[:2] + (3,) * dim + spatial
    strides = s[:2] + s[2:] + s[2:]
    return np.lib.stride_tricks.as_strided(xp, shape, strides)


def _pad(x):
    width = ((0, 0), (0, 0)) + ((1, 1),) * (x.ndim - 2)
    return np.pad(x, width)


def conv_fwd(x, w):
    """Correlate x (B,C,*sp) with w (Co,Ci,3..) at stride 1, padding 1."""
    dim = w.ndim - 2
    cols = _patches(_pad(x), dim)
    axes = list(range(1, dim + 2))
    y = np.tensordot(w, cols, axes=(axes, axes))
    return np.ascontiguousarray(np.moveaxis(y, 0, 1))


def conv_bwd(x, w, gy, need_gx=True):
    """Gradients of conv_fwd: returns (gx or None, gw)."""
    dim = w.ndim - 2
    cols = _patches(_pad(x), dim)
    # gw[o,i,k..] = sum_{b,p..} gy[b,o,p..] * xpad[b,i,p+k..]
    red = [0] + list(range(2, dim + 2))
    gw = np.tensordot(gy, cols, axes=(red, [0] + list(range(dim + 2, 2 * dim + 2))))
    gx = None
    if need_gx:
        # the same-padded correlation of gy with the flipped, transposed kernel
        wt = np.ascontiguousarray(np.flip(w, axis=tuple(range(2, w.ndim))).swapaxes(0, 1))
        gx = conv_fwd(gy, wt)
    return gx, np.ascontiguousarray(gw)


def _windows(x, dim):
    # (B, C, *half_spatial, 2^dim) window view, row-major window order
    b, c = x.shape[:2]
    spatial = x.shape[2:]
    shape = (b, c)
    for n in spatial:
        shape += (n // 2, 2)
    v = x.reshape(shape)
    # interleave: move the size-2 axes to the end, keeping their order
    order = [0, 1] + [2 + 2 * i for i in range(dim)] + [3 + 2 * i for i in range(dim)]
    return v.transpose(order).reshape((b, c) + tuple(n // 2 for n in spatial) + (2**dim,))


def maxpool_fwd(x):
    """2x max pool; returns (pooled, window_argmax) with first-max tie break."""
    dim = x.ndim - 2
    win = _windows(x, dim)
    idx = np.argmax(win, axis=-1).astype(np.uint8)
    y = np.take_along_axis(win, idx[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(y), idx


def maxpool_bwd(idx, gy, in_shape):
    """Scatter gy back to the argmax positions of the forward pass."""
    dim = len(in_shape) - 2
    win = np.zeros(gy.shape + (2**dim,), dtype=gy.dtype)
    np.put_along_axis(win, idx[..., None].astype(np.intp), gy[..., None], axis=-1)
    b, c = in_shape[:2]
    spatial = in_shape[2:]
    half = tuple(n // 2 for n in spatial)
    v = win.reshape((b, c) + half + (2,) * dim)
    order = [0, 1]
    for i in range(dim):
        order += [2 + i, 2 + dim + i]
    return np.ascontiguousarray(v.transpose(order).reshape(in_shape))
