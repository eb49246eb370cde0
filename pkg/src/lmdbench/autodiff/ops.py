"""Differentiable ops. Each forward computes with numpy and registers a
backward rule mapping the output gradient to one gradient per input."""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from ..errors import ConfigError, ShapeError
from .core import as_tensor, make_result

_SQRT2 = math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _is_pow2(n):
    return n >= 1 and n & (n - 1) == 0


# ---------------------------------------------------------------- structure

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return make_result(a.data + b.data, (a, b),
                       lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def mul(a, b):
    """Elementwise product with broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return make_result(a.data * b.data, (a, b),
                       lambda g: (_unbroadcast(g * np.conj(b.data), sa),
                                  _unbroadcast(g * np.conj(a.data), sb)))


def real_dot(a, w):
    """Scalar sum(Re(conj(w) * a)); w is a constant array."""
    a = as_tensor(a)
    w = np.asarray(w)
    return make_result(np.sum(np.real(np.conj(w) * a.data)), (a,),
                       lambda g: (g * np.broadcast_to(w, a.shape),))


def scale(a, c):
    """Multiply by a constant scalar."""
    a = as_tensor(a)
    return make_result(a.data * c, (a,), lambda g: (g * np.conj(c),))


def reshape(a, shape):
    a = as_tensor(a)
    old = a.shape
    return make_result(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a, axes):
    a = as_tensor(a)
    inv = np.argsort(axes)
    return make_result(np.transpose(a.data, axes), (a,),
                       lambda g: (np.transpose(g, inv),))


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]
    return make_result(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors),
                       lambda g: tuple(np.split(g, cuts, axis=axis)))


def tensor_sum(a):
    a = as_tensor(a)
    shape = a.shape
    return make_result(np.sum(a.data), (a,), lambda g: (np.broadcast_to(g, shape).copy(),))


# ---------------------------------------------------------------- padding / conv

def _pad_index(n, p, mode):
    idx = np.arange(-p, n + p)
    if mode == "wrap":
        return idx % n
    if mode == "symmetric":
        idx = np.where(idx < 0, -idx - 1, idx)
        return np.where(idx >= n, 2 * n - 1 - idx, idx)
    raise ValueError(mode)


def pad2d(a, p, mode="zero"):
    """Pad the last two axes (H, W) of a C x H x W tensor by ``p``.

    ``mode`` is "zero" or "periodic_reflect" (wrap in W, mirror in H).
    """
    a = as_tensor(a)
    if p == 0:
        return a
    C, H, W = a.shape
    if mode == "zero":
        out = np.pad(a.data, ((0, 0), (p, p), (p, p)))
        return make_result(out, (a,), lambda g: (g[:, p:p + H, p:p + W],))
    if mode != "periodic_reflect":
        raise ConfigError(f"unknown pad mode {mode!r}")
    if p > H or p > W:
        raise ShapeError(f"pad {p} exceeds spatial dims {(H, W)}")
    ri = _pad_index(H, p, "symmetric")
    ci = _pad_index(W, p, "wrap")
    out = a.data[:, ri][:, :, ci]

    def back(g):
        gc = np.zeros(g.shape[:2] + (W,), dtype=g.dtype)
        np.add.at(gc, (slice(None), slice(None), ci), g)
        gr = np.zeros((g.shape[0], H, W), dtype=g.dtype)
        np.add.at(gr, (slice(None), ri), gc)
        return (gr,)

    return make_result(out, (a,), back)


def conv2d(x, w, b=None, stride=1, pad=0, pad_mode="zero"):
    """Cross-correlation of C_in x H x W with C_out x C_in x kh x kw."""
    x, w = as_tensor(x), as_tensor(w)
    if x.data.ndim != 3 or w.data.ndim != 4 or x.shape[0] != w.shape[1]:
        raise ShapeError(f"conv2d shape mismatch: input {x.shape}, kernel {w.shape}")
    xp = pad2d(x, pad, pad_mode)
    Ci, Hp, Wp = xp.shape
    Co, _, kh, kw = w.shape
    if Hp < kh or Wp < kw:
        raise ShapeError(f"conv2d shape mismatch: input {x.shape}, kernel {w.shape}")
    Ho = (Hp - kh) // stride + 1
    Wo = (Wp - kw) // stride + 1
    win = sliding_window_view(xp.data, (kh, kw), axis=(1, 2))[:, ::stride, ::stride][:, :Ho, :Wo]
    cols = win.transpose(0, 3, 4, 1, 2).reshape(Ci * kh * kw, Ho * Wo)
    wm = w.data.reshape(Co, -1)
    out = (wm @ cols).reshape(Co, Ho, Wo)
    inputs = (xp, w)
    if b is not None:
        b = as_tensor(b)
        out = out + b.data[:, None, None]
        inputs = (xp, w, b)

    def back(g):
        g2 = g.reshape(Co, -1)
        gw = (g2 @ cols.T).reshape(w.shape)
        gcols = (wm.T @ g2).reshape(Ci, kh, kw, Ho, Wo)
        gx = np.zeros((Ci, Hp, Wp), dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                gx[:, i:i + stride * Ho:stride, j:j + stride * Wo:stride] += gcols[:, i, j]
        if b is None:
            return gx, gw
        return gx, gw, g.sum(axis=(1, 2))

    return make_result(out, inputs, back)


def down2(a):
    """2 x 2 mean pooling over the last two axes."""
    a = as_tensor(a)
    C, H, W = a.shape
    if H % 2 or W % 2:
        raise ShapeError(f"down2 needs even spatial dims, got {(H, W)}")
    out = a.data.reshape(C, H // 2, 2, W // 2, 2).mean(axis=(2, 4))
    return make_result(out, (a,),
                       lambda g: (np.repeat(np.repeat(g, 2, axis=1), 2, axis=2) * 0.25,))


def up2(a):
    """Nearest-neighbour doubling of the last two axes."""
    a = as_tensor(a)
    C, H, W = a.shape
    out = np.repeat(np.repeat(a.data, 2, axis=1), 2, axis=2)
    return make_result(out, (a,),
                       lambda g: (g.reshape(C, H, 2, W, 2).sum(axis=(2, 4)),))


# ---------------------------------------------------------------- dense

def linear(x, w, b=None):
    """x (..., d_in) @ w (d_in, d_out) + b."""
    x, w = as_tensor(x), as_tensor(w)
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear shape mismatch: input {x.shape}, weight {w.shape}")
    out = x.data @ w.data
    inputs = (x, w)
    if b is not None:
        b = as_tensor(b)
        out = out + b.data
        inputs = (x, w, b)
    din, dout = w.shape

    def back(g):
        gx = g @ w.data.T
        gw = x.data.reshape(-1, din).T @ g.reshape(-1, dout)
        if b is None:
            return gx, gw
        return gx, gw, g.reshape(-1, dout).sum(axis=0)

    return make_result(out, inputs, back)


def _gelu(v):
    return 0.5 * v * (1.0 + erf(v / _SQRT2))


def _gelu_prime(v):
    return 0.5 * (1.0 + erf(v / _SQRT2)) + v * _INV_SQRT2PI * np.exp(-0.5 * v * v)


def gelu(a):
    a = as_tensor(a)
    v = a.data
    return make_result(_gelu(v), (a,), lambda g: (g * _gelu_prime(v),))


_S_LO = np.finfo(np.float64).tiny
_S_HI = np.nextafter(1.0, 0.0)


def sigmoid(a):
    """Logistic function, clamped so every output lies strictly inside (0, 1)."""
    a = as_tensor(a)
    s = np.clip(0.5 * (1.0 + np.tanh(0.5 * a.data)), _S_LO, _S_HI)
    return make_result(s, (a,), lambda g: (g * s * (1.0 - s),))


def softmax(a, axis=-1):
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    return make_result(s, (a,),
                       lambda g: (s * (g - (g * s).sum(axis=axis, keepdims=True)),))


def layernorm(x, gamma, beta, eps=1e-12):
    """Normalize the last axis to zero mean / unit variance, then scale and shift."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    d = x.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def back(g):
        gh = g * gamma.data
        gx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                    - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        flat = g.reshape(-1, d)
        return gx, (flat * xhat.reshape(-1, d)).sum(axis=0), flat.sum(axis=0)

    return make_result(out, (x, gamma, beta), back)


# ---------------------------------------------------------------- spectral

def _check_fft_dims(shape):
    if not (_is_pow2(shape[0]) and _is_pow2(shape[1])):
        raise ShapeError(f"fft2 needs power-of-two token dims, got {shape[:2]}")


def fft2(a):
    """Unitary 2D DFT over the two leading (token-grid) axes."""
    a = as_tensor(a)
    _check_fft_dims(a.shape)
    out = np.fft.fft2(a.data, axes=(0, 1), norm="ortho")
    return make_result(out, (a,), lambda g: (np.fft.ifft2(g, axes=(0, 1), norm="ortho"),))


def ifft2(a):
    """Real part of the unitary inverse 2D DFT over the two leading axes."""
    a = as_tensor(a)
    _check_fft_dims(a.shape)
    out = np.fft.ifft2(a.data, axes=(0, 1), norm="ortho").real
    return make_result(out, (a,), lambda g: (np.fft.fft2(g, axes=(0, 1), norm="ortho"),))


def block_complex_linear(X, W, b):
    """Per-mode, per-head complex matrix multiply plus bias.

    X: modes x heads x dh, W: modes x heads x dh x dh, b: heads x dh.
    Y[m, h] = X[m, h] @ W[m, h] + b[h].
    """
    X, W, b = as_tensor(X), as_tensor(W), as_tensor(b)
    if X.data.ndim != 3 or W.shape != X.shape + (X.shape[2],) or b.shape != X.shape[1:]:
        raise ShapeError(f"block_complex_linear shapes X {X.shape}, W {W.shape}, b {b.shape}")
    out = np.einsum("mhi,mhij->mhj", X.data, W.data) + b.data

    def back(g):
        gx = np.einsum("mhj,mhij->mhi", g, np.conj(W.data))
        gw = np.einsum("mhi,mhj->mhij", np.conj(X.data), g)
        return gx, gw, g.sum(axis=0)

    return make_result(out, (X, W, b), back)


def split_heads(d, heads):
    if heads < 1 or d % heads:
        raise ConfigError(f"channel count {d} not divisible by heads {heads}")
    return d // heads


def complex_gelu(a):
    """GELU applied separately to real and imaginary parts."""
    a = as_tensor(a)
    re, im = a.data.real, a.data.imag
    out = _gelu(re) + 1j * _gelu(im)
    return make_result(out, (a,),
                       lambda g: (g.real * _gelu_prime(re) + 1j * g.imag * _gelu_prime(im),))


def _shrink(v, lam):
    return np.sign(v) * np.maximum(np.abs(v) - lam, 0.0)


def softshrink(a, lam=0.0):
    """Soft threshold; complex inputs are shrunk part-wise."""
    a = as_tensor(a)
    if lam == 0.0:
        return make_result(a.data.copy(), (a,), lambda g: (g,))
    if a.is_complex:
        re, im = a.data.real, a.data.imag
        out = _shrink(re, lam) + 1j * _shrink(im, lam)
        return make_result(out, (a,),
                           lambda g: ((np.abs(re) > lam) * g.real + 1j * (np.abs(im) > lam) * g.imag,))
    v = a.data
    return make_result(_shrink(v, lam), (a,), lambda g: (g * (np.abs(v) > lam),))


# ---------------------------------------------------------------- loss

def mse_loss(pred, target):
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss shapes {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    n = diff.size
    return make_result(np.mean(diff * diff), (pred, target),
                       lambda g: (2.0 * g * diff / n, -2.0 * g * diff / n))
