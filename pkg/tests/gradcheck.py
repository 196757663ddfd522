"""Gradient-check cases shared by the unit and acceptance suites."""

import numpy as np

from chessmae import autodiff as ad
from chessmae.model import MaeConfig, MaeModel, forward, reconstruction_loss

TOL = 1e-3
STEP = 1e-3


def cases(r):
    """(name, fn, input arrays) for every differentiable op."""
    x4 = r.normal(size=(2, 3, 9, 9))
    return [
        ("add", lambda t: ad.add(t[0], t[1]), [r.normal(size=(3, 4)), r.normal(size=(3, 4))]),
        ("sub", lambda t: ad.sub(t[0], t[1]), [r.normal(size=(3, 4)), r.normal(size=(3, 4))]),
        ("mul", lambda t: ad.mul(t[0], t[1]), [r.normal(size=(3, 4)), r.normal(size=(3, 4))]),
        ("scale", lambda t: ad.scale(t[0], -1.7), [r.normal(size=(5,))]),
        ("sum", lambda t: ad.sum(t[0]), [r.normal(size=(2, 3))]),
        ("mean", lambda t: ad.mean(t[0]), [r.normal(size=(2, 3))]),
        ("reshape", lambda t: ad.reshape(t[0], (6, 2)), [r.normal(size=(3, 4))]),
        ("permute", lambda t: ad.permute(t[0], (2, 0, 1)), [r.normal(size=(2, 3, 4))]),
        ("gelu", lambda t: ad.gelu(t[0]), [r.normal(size=(4, 5)) * 2]),
        ("linear", lambda t: ad.linear(t[0], t[1], t[2]),
         [r.normal(size=(2, 3, 5)), r.normal(size=(4, 5)), r.normal(size=(4,))]),
        ("linear_nobias", lambda t: ad.linear(t[0], t[1]), [r.normal(size=(6, 5)), r.normal(size=(2, 5))]),
        ("conv_dense", lambda t: ad.conv2d(t[0], t[1], t[2], stride=1, padding=1),
         [x4, r.normal(size=(4, 3, 3, 3)), r.normal(size=(4,))]),
        ("conv_stride", lambda t: ad.conv2d(t[0], t[1], t[2], stride=2, padding=0),
         [x4, r.normal(size=(5, 3, 2, 2)), r.normal(size=(5,))]),
        ("conv_groups", lambda t: ad.conv2d(t[0], t[1], None, stride=1, padding=1, groups=2),
         [r.normal(size=(1, 4, 6, 6)), r.normal(size=(6, 2, 3, 3))]),
        ("depthwise7", lambda t: ad.depthwise_conv7x7(t[0], t[1], t[2]),
         [x4, r.normal(size=(3, 1, 7, 7)), r.normal(size=(3,))]),
        ("depthwise_stride2", lambda t: ad.conv2d(t[0], t[1], None, stride=2, padding=1, groups=3),
         [x4, r.normal(size=(3, 1, 3, 3))]),
        ("layer_norm_c", lambda t: ad.layer_norm(t[0], t[1], t[2], axis=1),
         [x4, r.normal(size=(3,)), r.normal(size=(3,))]),
        ("layer_norm_last", lambda t: ad.layer_norm(t[0], t[1], t[2], axis=-1),
         [r.normal(size=(2, 4, 6)), r.normal(size=(6,)), r.normal(size=(6,))]),
        ("grn", lambda t: ad.grn(t[0], t[1], t[2], channel_axis=1),
         [x4, r.normal(size=(3,)), r.normal(size=(3,))]),
        ("grn_last", lambda t: ad.grn(t[0], t[1], t[2], channel_axis=-1),
         [r.normal(size=(2, 5, 5, 3)), r.normal(size=(3,)), r.normal(size=(3,))]),
        ("mse", lambda t: ad.mse_loss(t[0], t[1]), [r.normal(size=(2, 3)), r.normal(size=(2, 3))]),
        ("diamond", lambda t: ad.add(ad.mul(t[0], t[0]), ad.gelu(t[0])), [r.normal(size=(4,))]),
    ]


def model_gradient_error(seed, n_probe=3):
    r = np.random.default_rng(seed)
    with ad.float64_mode():
        m = MaeModel(MaeConfig.toy(16), seed=seed).astype(np.float64)
        for p in m.parameters():
            p.data[...] = r.normal(0, 0.3, p.shape)
        x = r.random((2, 1, 16, 16))
        target = r.random((2, 1, 16, 16))
        m.zero_grad()
        reconstruction_loss(forward(m, x), target).backward()

        def loss():
            with ad.no_grad():
                return reconstruction_loss(forward(m, x), target).item()

        worst, h = 0.0, STEP
        for _, p in m.named_parameters():
            for fi in r.choice(p.size, size=min(n_probe, p.size), replace=False):
                i = np.unravel_index(fi, p.shape)
                o = p.data[i]
                p.data[i] = o + h
                a = loss()
                p.data[i] = o - h
                b = loss()
                p.data[i] = o
                fd, an = (a - b) / (2 * h), p.grad[i]
                worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-6))
    return worst
