"""Slow, obviously-correct reference implementations used by the tests."""

import itertools

import numpy as np

from chessmae import autodiff as ad
from chessmae.model import reconstruct


def pairwise_auc(scores, labels):
    """O(n_p * n_n) Mann-Whitney count; ties count one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    pos, neg = scores[labels], scores[~labels]
    wins = 0.0
    for p in pos:
        wins += np.sum(p > neg) + 0.5 * np.sum(p == neg)
    return wins / (len(pos) * len(neg))


def topk_mean_full_sort(values, n):
    flat = sorted(np.asarray(values, dtype=np.float64).ravel().tolist(), reverse=True)
    return float(np.mean(flat[:n]))


def mask_pixel_loop(h, w, square, dy, dx):
    """Visibility by direct per-pixel evaluation of the parity rule."""
    out = np.zeros((h, w), dtype=np.uint8)
    for i in range(h):
        for j in range(w):
            out[i, j] = (((i + dy) % h) // square + ((j + dx) % w) // square) % 2 == 0
    return out


def error_map_loop(model, image, mask_set, fill=0.5):
    """Per-mask reconstruction one image at a time, summed in float64."""
    x = np.asarray(image, dtype=np.float32)[None]
    acc = np.zeros(x.shape[1:], dtype=np.float64)
    for m in mask_set:
        inp = np.where(m.grid.astype(bool), x, np.float32(fill))[None]
        r = reconstruct(model, inp, batch_size=1)[0]
        acc += ((r - x) * (r - x)).mean(axis=0)
    return (acc / len(mask_set)).astype(np.float32)


def finite_difference_check(fn, inputs, rng, n_probe=6, h=1e-3):
    """Largest relative error between analytic and central-difference grads.

    ``fn`` maps a list of Tensors to a scalar Tensor. Everything runs in
    float64; a random projection of the output turns it into a scalar when
    needed.
    """
    with ad.float64_mode():
        ts = [ad.Tensor(a, requires_grad=True) for a in inputs]
        out = fn(ts)
        proj = None
        if out.size != 1:
            proj = ad.Tensor(rng.normal(size=out.shape))
            out = ad.sum(ad.mul(out, proj))
        out.backward()

        def value():
            with ad.no_grad():
                o = fn(ts)
                return float(np.sum(o.data * proj.data)) if proj is not None else o.item()

        worst = 0.0
        for t in ts:
            flat_idx = rng.choice(t.size, size=min(n_probe, t.size), replace=False)
            for fi in flat_idx:
                i = np.unravel_index(fi, t.shape)
                orig = t.data[i]
                t.data[i] = orig + h
                a = value()
                t.data[i] = orig - h
                b = value()
                t.data[i] = orig
                fd = (a - b) / (2 * h)
                an = t.grad[i]
                denom = max(abs(fd), abs(an), 1e-6)
                worst = max(worst, abs(fd - an) / denom)
        return worst


def all_pairs(*ranges):
    return list(itertools.product(*ranges))
