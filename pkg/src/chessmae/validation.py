"""Input checks for the public array API."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, ShapeError
from .roi import RoiResult


def check_images(X, size: Optional[int] = None, name: str = "X") -> np.ndarray:
    """Return ``X`` as a float32 ``[n, H, W]`` stack.

    Accepts a single ``[H, W]`` image, a ``[n, H, W]`` stack or a
    single-channel ``[n, 1, H, W]`` stack. Values must be finite.
    """
    try:
        x = np.asarray(X, dtype=np.float32)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} is not numeric: {exc}") from exc
    if x.ndim == 2:
        x = x[None]
    elif x.ndim == 4:
        if x.shape[1] != 1:
            raise ShapeError(f"{name} must be single-channel, got {x.shape[1]} channels")
        x = x[:, 0]
    if x.ndim != 3:
        raise ShapeError(f"{name} must be [H, W], [n, H, W] or [n, 1, H, W], got shape {x.shape}")
    if len(x) == 0:
        raise ShapeError(f"{name} contains no images")
    if size is not None and x.shape[1:] != (size, size):
        raise ShapeError(f"{name} images must be {size}x{size}, got {x.shape[1]}x{x.shape[2]}")
    if not np.isfinite(x).all():
        raise ConfigError(f"{name} contains NaN or Inf")
    return x


def check_labels(y, n: int) -> np.ndarray:
    """Boolean anomaly labels; accepts 0/1, bools or "normal"/"avulsion"."""
    labels = [(v == "avulsion") if isinstance(v, str) else bool(v) for v in np.asarray(y).ravel()]
    if len(labels) != n:
        raise ShapeError(f"{len(labels)} labels for {n} images")
    return np.asarray(labels, dtype=bool)


def check_rois(rois: Optional[Sequence], n: int, size: int) -> Optional[list]:
    """``None`` or one RoI per image, as RoiResult or ``(box, confidence)``."""
    if rois is None:
        return None
    if len(rois) != n:
        raise ShapeError(f"{len(rois)} RoIs for {n} images")
    out = []
    for r in rois:
        if not isinstance(r, RoiResult):
            box, conf = r
            r = RoiResult(tuple(int(v) for v in box), float(conf), "sidecar")
        out.append(r.validate(size, size))
    return out
