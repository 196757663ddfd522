"""ROC-AUC at pixel and image level.

AUC is computed from the Mann-Whitney rank statistic with midranks for
ties, which equals the probability that a random positive outscores a
random negative (ties counting one half).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import ConfigError, ShapeError


@dataclass
class RocResult:
    auc: float
    n_positive: int
    n_negative: int
    thresholds: np.ndarray
    tpr: np.ndarray
    fpr: np.ndarray


def roc_points(scores: np.ndarray, labels: np.ndarray):
    """TPR/FPR when thresholding at every distinct score (``score >= t``)."""
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], labels[order]
    distinct = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    tps = np.cumsum(y)[distinct]
    fps = (distinct + 1) - tps
    n_pos, n_neg = y.sum(), y.size - y.sum()
    tpr = np.r_[0.0, tps / n_pos]
    fpr = np.r_[0.0, fps / n_neg]
    thresholds = np.r_[np.inf, s[distinct]]
    return thresholds, tpr, fpr


def auc(scores, labels, with_curve: bool = True) -> RocResult:
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(bool)
    if scores.shape != labels.shape:
        raise ShapeError(f"{scores.size} scores but {labels.size} labels")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ConfigError(f"AUC undefined with {n_pos} positives and {n_neg} negatives")
    ranks = rankdata(scores, method="average")
    value = (ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * float(n_neg))
    if with_curve:
        thresholds, tpr, fpr = roc_points(scores, labels.astype(np.int64))
    else:
        thresholds = tpr = fpr = np.empty(0)
    return RocResult(float(value), n_pos, n_neg, thresholds, tpr, fpr)


def pixel_auc(maps: Sequence[np.ndarray], gts: Sequence[np.ndarray], pooled: bool = True,
              with_curve: bool = False) -> RocResult:
    """Pixel-wise AUC.

    ``pooled=True`` ranks every pixel of every image together. With
    ``pooled=False`` the AUC is computed per image (images without positive
    pixels are skipped) and averaged; the returned counts are totals and
    no curve is attached.
    """
    if len(maps) != len(gts):
        raise ShapeError(f"{len(maps)} maps but {len(gts)} ground-truth masks")
    vals, labs = [], []
    for m, g in zip(maps, gts):
        m = getattr(m, "values", m)
        if np.shape(m) != np.shape(g):
            raise ShapeError(f"map shape {np.shape(m)} != ground truth {np.shape(g)}")
        vals.append(np.asarray(m, dtype=np.float64).ravel())
        labs.append(np.asarray(g).ravel() > 0)
    if not vals or not any(l.any() for l in labs):
        raise ConfigError("pixel AUC needs at least one positive pixel")
    if pooled:
        return auc(np.concatenate(vals), np.concatenate(labs), with_curve=with_curve)
    per = [auc(v, l, with_curve=False).auc for v, l in zip(vals, labs) if l.any() and not l.all()]
    n_pos = int(sum(l.sum() for l in labs))
    n_all = int(sum(l.size for l in labs))
    empty = np.empty(0)
    return RocResult(float(np.mean(per)), n_pos, n_all - n_pos, empty, empty, empty)


def image_auc(scores, labels) -> RocResult:
    """Image-wise AUC; ``labels`` are booleans or the strings normal/avulsion."""
    vals = [getattr(s, "value", s) for s in scores]
    labs = [(l == "avulsion") if isinstance(l, str) else bool(l) for l in labels]
    return auc(vals, labs)
