"""Differentiable operations. Each op returns a Tensor whose backward maps the output
gradient to one gradient (or None) per input."""

from __future__ import annotations

import numpy as np

from .core import Tensor, as_tensor, make


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# -- elementwise -------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return make(a.data * b.data, (a, b), bw, "mul")


def relu(x) -> Tensor:
    x = as_tensor(x)
    m = x.data > 0
    return make(np.where(m, x.data, 0.0), (x,), lambda g: (g * m,), "relu")


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    # split by sign so exp never overflows
    z = np.exp(-np.abs(x.data))
    s = np.where(x.data >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    return make(s, (x,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def activation(x, kind: str) -> Tensor:
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ValueError(f"unknown activation {kind!r}")


def log(x) -> Tensor:
    x = as_tensor(x)
    return make(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def exp(x) -> Tensor:
    x = as_tensor(x)
    e = np.exp(x.data)
    return make(e, (x,), lambda g: (g * e,), "exp")


# -- reductions and shape ----------------------------------------------------

def sum(x, axis=None, keepdims=False) -> Tensor:  # noqa: A001 - mirrors numpy
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return make(out, (x,), bw, "sum")


def mean(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    n = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis, keepdims), 1.0 / float(n))


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    return make(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x, axes=None) -> Tensor:
    x = as_tensor(x)
    inv = None if axes is None else np.argsort(axes)
    return make(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),), "transpose")


def index(x, idx) -> Tensor:
    """``x[idx]`` for basic or advanced indices; repeated indices accumulate gradient."""
    x = as_tensor(x)

    def bw(g):
        out = np.zeros_like(x.data)
        np.add.at(out, idx, g)
        return (out,)

    return make(x.data[idx], (x,), bw, "index")


def concat(xs, axis=0) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    sizes = np.cumsum([x.shape[axis] for x in xs])[:-1]

    def bw(g):
        return tuple(np.split(g, sizes, axis=axis))

    return make(np.concatenate([x.data for x in xs], axis=axis), tuple(xs), bw, "concat")


def stack(xs, axis=0) -> Tensor:
    xs = [as_tensor(x) for x in xs]

    def bw(g):
        return tuple(np.moveaxis(g, axis, 0))

    return make(np.stack([x.data for x in xs], axis=axis), tuple(xs), bw, "stack")


# -- linear algebra ----------------------------------------------------------

def matmul(a, b) -> Tensor:
    """``(..., n) @ (n, m)``; leading dims of ``a`` are batch dims."""
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def bw(g):
        ga = g @ b.data.T
        gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, b.shape[1])
        return ga, gb

    return make(a.data @ b.data, (a, b), bw, "matmul")


def linear(x, W, b=None) -> Tensor:
    x, W = as_tensor(x), as_tensor(W)
    if W.ndim != 2 or x.shape[-1] != W.shape[0]:
        raise ValueError(f"linear: input shape {x.shape} incompatible with weight shape {W.shape}")
    y = matmul(x, W)
    if b is not None:
        b = as_tensor(b)
        if b.shape != (W.shape[1],):
            raise ValueError(f"linear: bias shape {b.shape} does not match weight shape {W.shape}")
        y = add(y, b)
    return y


def softmax(x, axis=-1) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return make(s, (x,), bw, "softmax")


def log_softmax(x, axis=-1) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    s = np.exp(out)

    def bw(g):
        return (g - s * g.sum(axis=axis, keepdims=True),)

    return make(out, (x,), bw, "log_softmax")


# -- sampling and convolution ------------------------------------------------

def bilinear_sample2d(plane, coords) -> Tensor:
    """Sample ``plane[H, W, F]`` at continuous (row, col) cell coordinates ``coords[N, 2]``.

    Integer coordinates hit cell values exactly. Samples within one cell of the border
    are clamped onto it; samples farther out (row <= -1, row >= H, ...) return zeros.
    """
    plane, coords = as_tensor(plane), as_tensor(coords)
    H, W, F = plane.shape
    r, c = coords.data[:, 0], coords.data[:, 1]
    valid = (r > -1.0) & (r < H) & (c > -1.0) & (c < W)
    rc = np.clip(r, 0.0, H - 1.0)
    cc = np.clip(c, 0.0, W - 1.0)
    r_free = valid & (rc == r)
    c_free = valid & (cc == c)
    r0 = np.clip(np.floor(rc), 0, max(H - 2, 0)).astype(np.int64)
    c0 = np.clip(np.floor(cc), 0, max(W - 2, 0)).astype(np.int64)
    r1 = np.minimum(r0 + 1, H - 1)
    c1 = np.minimum(c0 + 1, W - 1)
    fr = (rc - r0)[:, None]
    fc = (cc - c0)[:, None]
    v = valid[:, None].astype(np.float64)
    P = plane.data
    p00, p01, p10, p11 = P[r0, c0], P[r0, c1], P[r1, c0], P[r1, c1]
    w00, w01, w10, w11 = (1 - fr) * (1 - fc) * v, (1 - fr) * fc * v, fr * (1 - fc) * v, fr * fc * v
    out = w00 * p00 + w01 * p01 + w10 * p10 + w11 * p11

    def bw(g):
        gp = np.zeros_like(P)
        np.add.at(gp, (r0, c0), g * w00)
        np.add.at(gp, (r0, c1), g * w01)
        np.add.at(gp, (r1, c0), g * w10)
        np.add.at(gp, (r1, c1), g * w11)
        dfr = (g * ((1 - fc) * (p10 - p00) + fc * (p11 - p01))).sum(axis=1)
        dfc = (g * ((1 - fr) * (p01 - p00) + fr * (p11 - p10))).sum(axis=1)
        gc = np.stack([dfr * r_free, dfc * c_free], axis=1)
        return gp, gc

    return make(out, (plane, coords), bw, "bilinear_sample2d")


def conv2d(x, kernels, bias=None) -> Tensor:
    """Dense 'same' convolution: ``x[H, W, Cin]`` with ``kernels[k, k, Cin, Cout]``."""
    x, K = as_tensor(x), as_tensor(kernels)
    k = K.shape[0]
    if k % 2 == 0 or K.shape[1] != k:
        raise ValueError(f"conv2d needs an odd square kernel, got {K.shape}")
    if K.shape[2] != x.shape[-1]:
        raise ValueError(f"conv2d channel mismatch: input {x.shape}, kernels {K.shape}")
    H, W, _ = x.shape
    p = k // 2
    xp = np.pad(x.data, ((p, p), (p, p), (0, 0)))
    out = np.zeros((H, W, K.shape[3]))
    for i in range(k):
        for j in range(k):
            out += xp[i:i + H, j:j + W] @ K.data[i, j]

    def bw(g):
        gx = np.zeros_like(xp)
        gK = np.zeros_like(K.data)
        flat_g = g.reshape(-1, g.shape[-1])
        for i in range(k):
            for j in range(k):
                gK[i, j] = xp[i:i + H, j:j + W].reshape(-1, xp.shape[-1]).T @ flat_g
                gx[i:i + H, j:j + W] += g @ K.data[i, j].T
        return gx[p:p + H, p:p + W], gK

    y = make(out, (x, K), bw, "conv2d")
    return add(y, bias) if bias is not None else y


def depthwise3d(vol, kernels) -> Tensor:
    """Per-channel 'same' 3D convolution: ``vol[X, Y, Z, F]`` with ``kernels[k, k, k, F]``."""
    vol, K = as_tensor(vol), as_tensor(kernels)
    k = K.shape[0]
    if k % 2 == 0:
        raise ValueError(f"depthwise convolution kernel size must be odd, got {k}")
    if K.shape != (k, k, k, vol.shape[-1]):
        raise ValueError(f"depthwise kernels {K.shape} do not match volume {vol.shape}")
    X, Y, Z, _ = vol.shape
    p = k // 2
    vp = np.pad(vol.data, ((p, p), (p, p), (p, p), (0, 0)))
    out = np.zeros(vol.shape)
    for i in range(k):
        for j in range(k):
            for l in range(k):
                out += vp[i:i + X, j:j + Y, l:l + Z] * K.data[i, j, l]

    def bw(g):
        gv = np.zeros_like(vp)
        gK = np.zeros_like(K.data)
        for i in range(k):
            for j in range(k):
                for l in range(k):
                    gK[i, j, l] = (vp[i:i + X, j:j + Y, l:l + Z] * g).sum(axis=(0, 1, 2))
                    gv[i:i + X, j:j + Y, l:l + Z] += g * K.data[i, j, l]
        return gv[p:p + X, p:p + Y, p:p + Z], gK

    return make(out, (vol, K), bw, "depthwise3d")


def depthwise_conv3d(vol, kernels, pointwise) -> Tensor:
    """Depthwise 3D convolution followed by a 1x1x1 pointwise channel mix ``[F, F']``."""
    return matmul(depthwise3d(vol, kernels), pointwise)
