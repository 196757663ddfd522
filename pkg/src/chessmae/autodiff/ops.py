"""Differentiable operations used by the masked autoencoder.

Only the op set the model needs is provided. Shapes must match exactly
except for bias addition and per-channel affine parameters; anything else
raises :class:`~chessmae.errors.ShapeError`.

Reductions run in numpy's fixed order for a given shape and dtype, so a
forward pass over identical inputs is bit-reproducible.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..errors import ConfigError, ShapeError
from . import _kernels
from .tensor import Tensor, as_tensor


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# elementwise / structural
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "add")
    return Tensor._from_op(a.data + b.data, "add", (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "sub")
    return Tensor._from_op(a.data - b.data, "sub", (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return Tensor._from_op(ad * bd, "mul", (a, b), lambda g: (g * bd, g * ad))


def scale(a: Tensor, c: float) -> Tensor:
    c = a.dtype.type(c)
    return Tensor._from_op(a.data * c, "scale", (a,), lambda g: (g * c,))


def sum(a: Tensor) -> Tensor:  # noqa: A001 - mirrors Tensor.sum
    shape = a.shape
    out = np.asarray(a.data.sum(dtype=a.dtype), dtype=a.dtype)
    return Tensor._from_op(out, "sum", (a,), lambda g: (np.full(shape, g, dtype=a.dtype),))


def mean(a: Tensor) -> Tensor:
    shape, n = a.shape, a.size
    out = np.asarray(a.data.mean(dtype=a.dtype), dtype=a.dtype)
    return Tensor._from_op(out, "mean", (a,), lambda g: (np.full(shape, g / n, dtype=a.dtype),))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    src = a.shape
    out = a.data.reshape(shape)
    if out.size != a.size:
        raise ShapeError(f"reshape: cannot view {src} as {tuple(shape)}")
    return Tensor._from_op(out, "reshape", (a,), lambda g: (g.reshape(src),))


def permute(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(a.ndim)):
        raise ShapeError(f"permute: {axes} is not a permutation of {a.ndim} axes")
    inv = tuple(np.argsort(axes))
    out = np.ascontiguousarray(a.data.transpose(axes))
    return Tensor._from_op(out, "permute", (a,), lambda g: (np.ascontiguousarray(g.transpose(inv)),))


def gelu(x: Tensor) -> Tensor:
    """Exact (erf-based) GELU."""
    xd = x.data
    out, cdf = _kernels.gelu_fwd(xd)

    def backward(g):
        return (_kernels.gelu_bwd(np.ascontiguousarray(g), xd, cdf),)

    return Tensor._from_op(out, "gelu", (x,), backward)


# ---------------------------------------------------------------------------
# linear layers
# ---------------------------------------------------------------------------

def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Affine map over the last axis: ``x @ weight.T + bias``.

    ``weight`` is ``[out, in]``; leading axes of ``x`` are treated as batch.
    """
    if weight.ndim != 2 or x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"linear: input last dim {x.shape[-1:]} incompatible with weight {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError(f"linear: bias shape {bias.shape} != ({weight.shape[0]},)")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, x.shape[-1])
    wd = weight.data
    out = x2 @ wd.T
    if bias is not None:
        out += bias.data
    out = out.reshape(lead + (wd.shape[0],))

    def backward(g):
        g2 = g.reshape(-1, wd.shape[0])
        gx = (g2 @ wd).reshape(x.shape)
        gw = g2.T @ x2
        gb = g2.sum(axis=0) if bias is not None else None
        return gx, gw, gb

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._from_op(out, "linear", inputs, backward)


def _conv_out(n: int, k: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - k) // stride + 1


def _pad(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def _window(xp: np.ndarray, i: int, j: int, s: int, ho: int, wo: int) -> np.ndarray:
    return xp[:, :, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s]


def _im2col(xp: np.ndarray, kh: int, kw: int, s: int, ho: int, wo: int) -> np.ndarray:
    b, c = xp.shape[:2]
    cols = np.empty((b, ho, wo, c, kh, kw), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[..., i, j] = _window(xp, i, j, s, ho, wo).transpose(0, 2, 3, 1)
    return cols.reshape(b * ho * wo, c * kh * kw)


def _dense_conv_fwd(xp, w, s, ho, wo):
    cout = w.shape[0]
    cols = _im2col(xp, w.shape[2], w.shape[3], s, ho, wo)
    wm = w.reshape(cout, -1)
    out = (cols @ wm.T).reshape(xp.shape[0], ho, wo, cout).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(out), cols


def _dense_conv_bwd(g, xp_shape, w, cols, s, ho, wo):
    b, cin = xp_shape[:2]
    cout, _, kh, kw = w.shape
    g2 = g.transpose(0, 2, 3, 1).reshape(-1, cout)
    gw = (g2.T @ cols).reshape(w.shape)
    dcols = (g2 @ w.reshape(cout, -1)).reshape(b, ho, wo, cin, kh, kw)
    gxp = np.zeros(xp_shape, dtype=w.dtype)
    for i in range(kh):
        for j in range(kw):
            _window(gxp, i, j, s, ho, wo)[...] += dcols[..., i, j].transpose(0, 3, 1, 2)
    return gxp, gw


def _depthwise_fwd(xp, w, s, ho, wo):
    return _kernels.depthwise_fwd(np.ascontiguousarray(xp), np.ascontiguousarray(w), s, ho, wo)


def _depthwise_bwd(g, xp, w, s, ho, wo):
    return _kernels.depthwise_bwd(np.ascontiguousarray(g), xp, np.ascontiguousarray(w), s)


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
           stride: int = 1, padding: int = 0, groups: int = 1) -> Tensor:
    """2-D cross-correlation over ``[B, Cin, H, W]`` with zero padding.

    ``weight`` is ``[Cout, Cin // groups, kh, kw]``. Depthwise convolution
    (``groups == Cin == Cout``) takes a shift-and-accumulate path; everything
    else goes through im2col + matmul, looping over groups.
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d: expected 4-D input and weight, got {x.shape} and {weight.shape}")
    b, cin, h, w_ = x.shape
    cout, cin_g, kh, kw = weight.shape
    if stride < 1 or padding < 0 or groups < 1:
        raise ConfigError(f"conv2d: invalid stride={stride} padding={padding} groups={groups}")
    if cin % groups or cout % groups:
        raise ShapeError(f"conv2d: channels in={cin} out={cout} not divisible by groups={groups}")
    if cin_g != cin // groups:
        raise ShapeError(f"conv2d: weight expects {cin_g * groups} input channels, input has {cin}")
    if bias is not None and bias.shape != (cout,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} != ({cout},)")
    ho, wo = _conv_out(h, kh, stride, padding), _conv_out(w_, kw, stride, padding)
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} with padding {padding} does not fit input {h}x{w_}")

    xp = _pad(x.data, padding)
    wd = weight.data
    depthwise = groups == cin and cout == cin and cin_g == 1
    if depthwise:
        out = _depthwise_fwd(xp, wd, stride, ho, wo)
        saved = None
    elif groups == 1:
        out, saved = _dense_conv_fwd(xp, wd, stride, ho, wo)
    else:
        og = cout // groups
        parts, saved = [], []
        for gi in range(groups):
            o, cols = _dense_conv_fwd(xp[:, gi * cin_g:(gi + 1) * cin_g], wd[gi * og:(gi + 1) * og],
                                      stride, ho, wo)
            parts.append(o)
            saved.append(cols)
        out = np.concatenate(parts, axis=1)
    if bias is not None:
        out += bias.data[:, None, None]

    def backward(g):
        if depthwise:
            gxp, gw = _depthwise_bwd(g, xp, wd, stride, ho, wo)
        elif groups == 1:
            gxp, gw = _dense_conv_bwd(g, xp.shape, wd, saved, stride, ho, wo)
        else:
            og = cout // groups
            gxp = np.empty_like(xp)
            gw = np.empty_like(wd)
            for gi in range(groups):
                cs, os_ = slice(gi * cin_g, (gi + 1) * cin_g), slice(gi * og, (gi + 1) * og)
                gxp[:, cs], gw[os_] = _dense_conv_bwd(
                    np.ascontiguousarray(g[:, os_]), (b, cin_g) + xp.shape[2:], wd[os_], saved[gi],
                    stride, ho, wo)
        gx = gxp[:, :, padding:padding + h, padding:padding + w_] if padding else gxp
        gb = g.sum(axis=(0, 2, 3)) if bias is not None else None
        return np.ascontiguousarray(gx), gw, gb

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._from_op(out, "conv2d", inputs, backward)


def depthwise_conv7x7(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Per-channel 7x7 convolution, stride 1, padding 3 (shape preserving)."""
    c = x.shape[1] if x.ndim == 4 else -1
    if weight.shape != (c, 1, 7, 7):
        raise ShapeError(f"depthwise_conv7x7: weight must be ({c}, 1, 7, 7), got {weight.shape}")
    return conv2d(x, weight, bias, stride=1, padding=3, groups=c)


# ---------------------------------------------------------------------------
# normalisation
# ---------------------------------------------------------------------------

def _affine_shape(ndim: int, axis: int) -> tuple:
    shape = [1] * ndim
    shape[axis] = -1
    return tuple(shape)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, axis: int = 1, eps: float = 1e-6) -> Tensor:
    """Normalise each position over ``axis`` then apply a per-channel affine."""
    if eps <= 0:
        raise ConfigError(f"layer_norm: eps must be positive, got {eps}")
    axis = axis % x.ndim
    c = x.shape[axis]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"layer_norm: affine params must be ({c},), got {gamma.shape} and {beta.shape}")
    aff = _affine_shape(x.ndim, axis)
    xd = x.data
    mu = xd.mean(axis=axis, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + x.dtype.type(eps))
    xhat = xc * inv
    g_ = gamma.data.reshape(aff)
    out = xhat * g_ + beta.data.reshape(aff)
    red = tuple(i for i in range(x.ndim) if i != axis)

    def backward(g):
        dxhat = g * g_
        m1 = dxhat.mean(axis=axis, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=axis, keepdims=True)
        gx = inv * (dxhat - m1 - xhat * m2)
        return gx, (g * xhat).sum(axis=red), g.sum(axis=red)

    return Tensor._from_op(out, "layer_norm", (x, gamma, beta), backward)


def grn(x: Tensor, gamma: Tensor, beta: Tensor, channel_axis: int = 1, eps: float = 1e-6) -> Tensor:
    """Global Response Normalization on a 4-D batch.

    Per sample, each channel's L2 norm over the spatial axes is divided by
    the mean norm across channels; the result rescales ``x`` and the block
    keeps a residual path: ``gamma * (x * n) + beta + x``.
    """
    if x.ndim != 4:
        raise ShapeError(f"grn: expected 4-D input, got {x.shape}")
    axis = channel_axis % 4
    if axis == 0:
        raise ShapeError("grn: channel axis cannot be the batch axis")
    c = x.shape[axis]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"grn: affine params must be ({c},), got {gamma.shape} and {beta.shape}")
    aff = _affine_shape(4, axis)
    spatial = tuple(i for i in (1, 2, 3) if i != axis)
    xd = x.data
    gx_norm = np.sqrt((xd * xd).sum(axis=spatial, keepdims=True))
    denom = gx_norm.mean(axis=axis, keepdims=True) + x.dtype.type(eps)
    n = gx_norm / denom
    g_ = gamma.data.reshape(aff)
    y = xd * n
    out = g_ * y + beta.data.reshape(aff) + xd

    def backward(g):
        gy = g * g_
        gx = g + gy * n
        dn = (gy * xd).sum(axis=spatial, keepdims=True)
        dnorm = dn / denom - (dn * gx_norm).sum(axis=axis, keepdims=True) / (denom * denom * c)
        safe = np.where(gx_norm > 0, gx_norm, 1)
        gx = gx + np.where(gx_norm > 0, dnorm / safe, 0) * xd
        red = tuple(i for i in range(4) if i != axis)
        return gx, (g * y).sum(axis=red), g.sum(axis=red)

    return Tensor._from_op(out, "grn", (x, gamma, beta), backward)


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------

def mse_loss(pred: Tensor, target) -> Tensor:
    """Mean of squared differences over every element."""
    target = as_tensor(target)
    _same_shape(pred, target, "mse_loss")
    diff = pred.data - target.data.astype(pred.dtype, copy=False)
    n = diff.size
    out = np.asarray((diff * diff).mean(dtype=pred.dtype), dtype=pred.dtype)

    def backward(g):
        gp = diff * (2.0 * g / n)
        return gp.astype(pred.dtype, copy=False), -gp

    return Tensor._from_op(out, "mse_loss", (pred, target), backward)
