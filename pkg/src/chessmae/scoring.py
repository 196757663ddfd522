"""Reconstruction-error maps and image-level anomaly scores.

For a test image the model reconstructs once per shifted mask; the squared
error against the unmasked original is averaged over masks (full-image map).
The RoI map keeps that error only inside the detected bone box when the
detector is confident enough, and the image score is the mean of the top
``k`` percent of map values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from .errors import ConfigError, ShapeError
from .masking import MaskSet
from .model import MaeModel, reconstruct
from .roi import RoiResult

FULL = "full"
ROI = "roi"


@dataclass
class ErrorMap:
    values: np.ndarray
    kind: str = FULL
    n_masks_used: int = 0


@dataclass(frozen=True)
class ImageScore:
    value: float
    k_percent: float
    pixel_count_used: int


def _as_chw(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim == 2:
        return x[None]
    if x.ndim != 3:
        raise ShapeError(f"expected a [C, H, W] or [H, W] image, got shape {x.shape}")
    return x


def masked_inputs(x: np.ndarray, grids: np.ndarray, fill: float) -> np.ndarray:
    """Stack of masked copies ``[N, C, H, W]`` of one image for ``N`` grids."""
    return np.where(grids[:, None].astype(bool), x[None], np.asarray(fill, dtype=x.dtype))


def per_mask_errors(model: MaeModel, x: np.ndarray, mask_set: MaskSet, fill: float = 0.5,
                    batch_size: int = 32) -> np.ndarray:
    """Squared error of each mask's reconstruction, channel-averaged: ``[N, H, W]``."""
    x = _as_chw(x).astype(model.dtype, copy=False)
    if len(mask_set) == 0:
        raise ConfigError("empty mask set")
    grids = mask_set.stack()
    if grids.shape[1:] != x.shape[1:]:
        raise ShapeError(f"mask size {grids.shape[1:]} does not match image {x.shape[1:]}")
    errs = np.empty((len(grids),) + x.shape[1:], dtype=model.dtype)
    for i in range(0, len(grids), batch_size):
        recon = reconstruct(model, masked_inputs(x, grids[i:i + batch_size], fill), batch_size=batch_size)
        d = recon - x[None]
        errs[i:i + batch_size] = (d * d).mean(axis=1)
    return errs


def pixel_error_full(model: MaeModel, x: np.ndarray, mask_set: MaskSet, fill: float = 0.5,
                     batch_size: int = 32) -> ErrorMap:
    errs = per_mask_errors(model, x, mask_set, fill, batch_size)
    acc = np.zeros(errs.shape[1:], dtype=np.float64)
    for e in errs:  # sequential order keeps the sum reproducible
        acc += e
    return ErrorMap((acc / len(errs)).astype(np.float32), FULL, len(errs))


def pixel_error_roi(full: ErrorMap, roi: RoiResult, tau: float) -> ErrorMap:
    """Zero the map outside the box when ``roi.confidence >= tau``.

    Below the threshold the full map is returned unchanged (as a copy).
    """
    if not 0.0 <= tau <= 1.0:
        raise ConfigError(f"tau must lie in [0, 1], got {tau}")
    values = full.values.copy()
    if roi.confidence >= tau:
        values[~roi.contains(*values.shape)] = 0.0
    return ErrorMap(values, ROI, full.n_masks_used)


def topk_count(n_pixels: int, k_percent: float) -> int:
    """``max(1, round(k/100 * n))`` with halves rounded up."""
    return max(1, int(math.floor(k_percent / 100.0 * n_pixels + 0.5)))


def image_score(error_map: ErrorMap, k_percent: float) -> ImageScore:
    if not k_percent > 0:
        raise ConfigError(f"k_percent must be positive, got {k_percent}")
    if k_percent > 100:
        raise ConfigError(f"k_percent must not exceed 100, got {k_percent}")
    flat = np.asarray(error_map.values, dtype=np.float64).ravel()
    n = topk_count(flat.size, k_percent)
    # stable sort on the negated values: ties keep pixel-index order
    order = np.argsort(-flat, kind="stable")[:n]
    return ImageScore(float(flat[order].mean()), k_percent, n)


@dataclass
class SampleScores:
    id: str
    label: str
    full_map: ErrorMap
    roi_map: ErrorMap
    full_score: ImageScore
    roi_score: ImageScore
    roi: RoiResult


@dataclass(frozen=True)
class ScoringConfig:
    fill: float = 0.5
    tau: float = 0.5
    k_percent: float = 0.3
    batch_size: int = 32


def score_sample(model: MaeModel, sample, roi_provider: Callable, mask_set: MaskSet,
                 config: ScoringConfig = ScoringConfig()) -> SampleScores:
    try:
        full = pixel_error_full(model, sample.image, mask_set, config.fill, config.batch_size)
        roi = roi_provider(sample)
        gated = pixel_error_roi(full, roi, config.tau)
        return SampleScores(sample.id, sample.label, full, gated, image_score(full, config.k_percent),
                            image_score(gated, config.k_percent), roi)
    except Exception as exc:
        exc.args = (f"[sample {sample.id}] " + (str(exc.args[0]) if exc.args else ""),) + exc.args[1:]
        raise


def score_dataset(model: MaeModel, samples: Sequence, roi_provider: Callable, mask_set: MaskSet,
                  config: ScoringConfig = ScoringConfig(), n_jobs: int = 1) -> List[SampleScores]:
    """Score every sample; results come back in input order.

    With ``n_jobs > 1`` samples are distributed over worker processes. Each
    sample's computation is identical either way, so scores do not depend on
    the parallelism.
    """
    if not samples:
        return []
    if n_jobs == 1:
        return [score_sample(model, s, roi_provider, mask_set, config) for s in samples]
    from joblib import Parallel, delayed
    return Parallel(n_jobs=n_jobs)(delayed(score_sample)(model, s, roi_provider, mask_set, config)
                                   for s in samples)
