"""Numba kernels: same-padded 3^d convolution and 2x max pooling.

Direct-loop implementations compiled with ``@njit``. The inner loops run
over output pixels so numba can vectorize them; this path is strongest for
wide spatial extents with moderate channel counts, which is where most of
the training time goes at desk scale. Contracts are identical to
``kernels_numpy`` (see that module for the layout conventions).

If numba is missing the decorators degrade to no-ops and the functions
still run (slowly) under plain Python; ``NUMBA_AVAILABLE`` tells the
dispatcher whether this module is worth selecting.
"""

import numpy as np

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        def wrap(func):
            return func

        if args and callable(args[0]):
            return args[0]
        return wrap


def _pad(x):
    width = ((0, 0), (0, 0)) + ((1, 1),) * (x.ndim - 2)
    return np.pad(x, width)


@njit(cache=True, nogil=True)
def _conv2d_fwd(xp, w, y):
    nb, ci, hp, wp = xp.shape
    co = w.shape[0]
    h, wd = hp - 2, wp - 2
    for b in range(nb):
        for o in range(co):
            for c in range(ci):
                for ki in range(3):
                    for kj in range(3):
                        wv = w[o, c, ki, kj]
                        for i in range(h):
                            for j in range(wd):
                                y[b, o, i, j] += wv * xp[b, c, i + ki, j + kj]


# reassoc+contract lets LLVM vectorize the dot-product reduction (a ~4x
# win) without relaxing NaN or infinity handling
@njit(cache=True, nogil=True, fastmath={"reassoc", "contract"})
def _conv2d_bwd_w(xp, gy, gw):
    nb, ci, hp, wp = xp.shape
    co = gy.shape[1]
    h, wd = hp - 2, wp - 2
    zero = xp[0, 0, 0, 0] * 0
    for o in range(co):
        for c in range(ci):
            for ki in range(3):
                for kj in range(3):
                    acc = zero
                    for b in range(nb):
                        for i in range(h):
                            for j in range(wd):
                                acc += gy[b, o, i, j] * xp[b, c, i + ki, j + kj]
                    gw[o, c, ki, kj] = acc


@njit(cache=True, nogil=True)
def _conv2d_bwd_x(gy, w, gxp):
    nb, co, h, wd = gy.shape
    ci = w.shape[1]
    for b in range(nb):
        for o in range(co):
            for c in range(ci):
                for ki in range(3):
                    for kj in range(3):
                        wv = w[o, c, ki, kj]
                        for i in range(h):
                            for j in range(wd):
                                gxp[b, c, i + ki, j + kj] += wv * gy[b, o, i, j]


@njit(cache=True, nogil=True)
def _conv3d_fwd(xp, w, y):
    nb, ci, dp, hp, wp = xp.shape
    co = w.shape[0]
    d, h, wd = dp - 2, hp - 2, wp - 2
    for b in range(nb):
        for o in range(co):
            for c in range(ci):
                for kk in range(3):
                    for ki in range(3):
                        for kj in range(3):
                            wv = w[o, c, kk, ki, kj]
                            for k in range(d):
                                for i in range(h):
                                    for j in range(wd):
                                        y[b, o, k, i, j] += wv * xp[b, c, k + kk, i + ki, j + kj]


@njit(cache=True, nogil=True, fastmath={"reassoc", "contract"})
def _conv3d_bwd_w(xp, gy, gw):
    nb, ci, dp, hp, wp = xp.shape
    co = gy.shape[1]
    d, h, wd = dp - 2, hp - 2, wp - 2
    zero = xp[0, 0, 0, 0, 0] * 0
    for o in range(co):
        for c in range(ci):
            for kk in range(3):
                for ki in range(3):
                    for kj in range(3):
                        acc = zero
                        for b in range(nb):
                            for k in range(d):
                                for i in range(h):
                                    for j in range(wd):
                                        acc += gy[b, o, k, i, j] * xp[b, c, k + kk, i + ki, j + kj]
                        gw[o, c, kk, ki, kj] = acc


@njit(cache=True, nogil=True)
def _conv3d_bwd_x(gy, w, gxp):
    nb, co, d, h, wd = gy.shape
    ci = w.shape[1]
    for b in range(nb):
        for o in range(co):
            for c in range(ci):
                for kk in range(3):
                    for ki in range(3):
                        for kj in range(3):
                            wv = w[o, c, kk, ki, kj]
                            for k in range(d):
                                for i in range(h):
                                    for j in range(wd):
                                        gxp[b, c, k + kk, i + ki, j + kj] += wv * gy[b, o, k, i, j]


@njit(cache=True, nogil=True)
def _maxpool2d_fwd(x, y, idx):
    nb, nc, h, wd = x.shape
    for b in range(nb):
        for c in range(nc):
            for i in range(h // 2):
                for j in range(wd // 2):
                    best = x[b, c, 2 * i, 2 * j]
                    k = 0
                    p = 0
                    for di in range(2):
                        for dj in range(2):
                            v = x[b, c, 2 * i + di, 2 * j + dj]
                            if v > best:
                                best = v
                                k = p
                            p += 1
                    y[b, c, i, j] = best
                    idx[b, c, i, j] = k


@njit(cache=True, nogil=True)
def _maxpool2d_bwd(idx, gy, gx):
    nb, nc, h2, w2 = gy.shape
    for b in range(nb):
        for c in range(nc):
            for i in range(h2):
                for j in range(w2):
                    k = idx[b, c, i, j]
                    gx[b, c, 2 * i + k // 2, 2 * j + k % 2] += gy[b, c, i, j]


@njit(cache=True, nogil=True)
def _maxpool3d_fwd(x, y, idx):
    nb, nc, d, h, wd = x.shape
    for b in range(nb):
        for c in range(nc):
            for m in range(d // 2):
                for i in range(h // 2):
                    for j in range(wd // 2):
                        best = x[b, c, 2 * m, 2 * i, 2 * j]
                        k = 0
                        p = 0
                        for dm in range(2):
                            for di in range(2):
                                for dj in range(2):
                                    v = x[b, c, 2 * m + dm, 2 * i + di, 2 * j + dj]
                                    if v > best:
                                        best = v
                                        k = p
                                    p += 1
                        y[b, c, m, i, j] = best
                        idx[b, c, m, i, j] = k


@njit(cache=True, nogil=True)
def _maxpool3d_bwd(idx, gy, gx):
    nb, nc, d2, h2, w2 = gy.shape
    for b in range(nb):
        for c in range(nc):
            for m in range(d2):
                for i in range(h2):
                    for j in range(w2):
                        k = idx[b, c, m, i, j]
                        gx[b, c, 2 * m + k // 4, 2 * i + (k // 2) % 2, 2 * j + k % 2] += gy[b, c, m, i, j]


def conv_fwd(x, w):
    """Correlate x (B,C,*sp) with w (Co,Ci,3..) at stride 1, padding 1."""
    xp = _pad(np.ascontiguousarray(x))
    y = np.zeros((x.shape[0], w.shape[0]) + x.shape[2:], dtype=x.dtype)
    w = np.ascontiguousarray(w)
    if w.ndim == 4:
        _conv2d_fwd(xp, w, y)
    else:
        _conv3d_fwd(xp, w, y)
    return y


def conv_bwd(x, w, gy, need_gx=True):
    """Gradients of conv_fwd: returns (gx or None, gw)."""
    xp = _pad(np.ascontiguousarray(x))
    gy = np.ascontiguousarray(gy)
    w = np.ascontiguousarray(w)
    gw = np.zeros_like(w)
    gx = None
    if w.ndim == 4:
        _conv2d_bwd_w(xp, gy, gw)
        if need_gx:
            gxp = np.zeros_like(xp)
            _conv2d_bwd_x(gy, w, gxp)
            gx = np.ascontiguousarray(gxp[:, :, 1:-1, 1:-1])
    else:
        _conv3d_bwd_w(xp, gy, gw)
        if need_gx:
            gxp = np.zeros_like(xp)
            _conv3d_bwd_x(gy, w, gxp)
            gx = np.ascontiguousarray(gxp[:, :, 1:-1, 1:-1, 1:-1])
    return gx, gw


def maxpool_fwd(x):
    """2x max pool; returns (pooled, window_argmax) with first-max tie break."""
    x = np.ascontiguousarray(x)
    half = tuple(n // 2 for n in x.shape[2:])
    y = np.empty(x.shape[:2] + half, dtype=x.dtype)
    idx = np.empty(y.shape, dtype=np.uint8)
    if x.ndim == 4:
        _maxpool2d_fwd(x, y, idx)
    else:
        _maxpool3d_fwd(x, y, idx)
    return y, idx


def maxpool_bwd(idx, gy, in_shape):
    """Scatter gy back to the argmax positions of the forward pass."""
    gy = np.ascontiguousarray(gy)
    gx = np.zeros(in_shape, dtype=gy.dtype)
    if len(in_shape) == 4:
        _maxpool2d_bwd(idx, gy, gx)
    else:
        _maxpool3d_bwd(idx, gy, gx)
    return gx
