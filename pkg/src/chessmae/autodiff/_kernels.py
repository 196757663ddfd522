"""Compiled inner loops for the hot ops.

Loops run in a fixed sequential order, so results are bit-reproducible.
"""

import math

import numba
import numpy as np

_SQRT1_2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@numba.njit(cache=True)
def depthwise_fwd(xp, w, stride, ho, wo):
    b_, c_ = xp.shape[0], xp.shape[1]
    kh, kw = w.shape[2], w.shape[3]
    out = np.zeros((b_, c_, ho, wo), dtype=xp.dtype)
    for b in range(b_):
        for c in range(c_):
            for y in range(ho):
                orow = out[b, c, y]
                for i in range(kh):
                    xrow = xp[b, c, y * stride + i]
                    for j in range(kw):
                        wv = w[c, 0, i, j]
                        if stride == 1:
                            for x in range(wo):
                                orow[x] += wv * xrow[x + j]
                        else:
                            for x in range(wo):
                                orow[x] += wv * xrow[x * stride + j]
    return out


@numba.njit(cache=True)
def depthwise_bwd(g, xp, w, stride):
    b_, c_, ho, wo = g.shape
    kh, kw = w.shape[2], w.shape[3]
    gxp = np.zeros_like(xp)
    gw = np.zeros_like(w)
    for b in range(b_):
        for c in range(c_):
            for y in range(ho):
                grow = g[b, c, y]
                for i in range(kh):
                    yy = y * stride + i
                    xrow = xp[b, c, yy]
                    gxrow = gxp[b, c, yy]
                    for j in range(kw):
                        wv = w[c, 0, i, j]
                        acc = 0.0
                        if stride == 1:
                            for x in range(wo):
                                acc += grow[x] * xrow[x + j]
                            for x in range(wo):
                                gxrow[x + j] += grow[x] * wv
                        else:
                            for x in range(wo):
                                acc += grow[x] * xrow[x * stride + j]
                                gxrow[x * stride + j] += grow[x] * wv
                        gw[c, 0, i, j] += acc
    return gxp, gw


@numba.njit(cache=True)
def gelu_fwd(x):
    flat = x.ravel()
    out = np.empty_like(flat)
    cdf = np.empty_like(flat)
    for k in range(flat.size):
        v = flat[k]
        c = 0.5 * (1.0 + math.erf(v * _SQRT1_2))
        cdf[k] = c
        out[k] = v * c
    return out.reshape(x.shape), cdf.reshape(x.shape)


@numba.njit(cache=True)
def gelu_bwd(g, x, cdf):
    gf, xf, cf = g.ravel(), x.ravel(), cdf.ravel()
    out = np.empty_like(xf)
    for k in range(xf.size):
        v = xf[k]
        out[k] = gf[k] * (cf[k] + v * math.exp(-0.5 * v * v) * _INV_SQRT_2PI)
    return out.reshape(x.shape)
