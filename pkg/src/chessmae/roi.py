"""Bone region of interest: a box plus a confidence score.

Three sources are supported: the phantom's ground-truth box (``oracle``),
detections computed elsewhere and stored in a ``roi.jsonl`` sidecar
(``sidecar``), and a brightness-threshold fallback (``naive``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, Optional, Tuple

import numpy as np
from scipy import ndimage

from .errors import ConfigError, FormatError, MissingRecordError

SOURCES = ("oracle", "sidecar", "naive")


@dataclass(frozen=True)
class RoiResult:
    box: Tuple[int, int, int, int]  # x0, y0, x1, y1, inclusive-exclusive
    confidence: float
    source: str = "oracle"

    def validate(self, width: Optional[int] = None, height: Optional[int] = None) -> "RoiResult":
        x0, y0, x1, y1 = self.box
        if not (0 <= x0 < x1 and 0 <= y0 < y1):
            raise ConfigError(f"invalid box {self.box}: need 0 <= x0 < x1 and 0 <= y0 < y1")
        if width is not None and x1 > width or height is not None and y1 > height:
            raise ConfigError(f"box {self.box} exceeds image {width}x{height}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ConfigError(f"confidence {self.confidence} outside [0, 1]")
        if self.source not in SOURCES:
            raise ConfigError(f"unknown roi source {self.source!r}")
        return self

    def contains(self, height: int, width: int) -> np.ndarray:
        """Boolean raster that is True inside the box."""
        x0, y0, x1, y1 = self.box
        inside = np.zeros((height, width), dtype=bool)
        inside[y0:y1, x0:x1] = True
        return inside


def roi_from_oracle(sample) -> RoiResult:
    box = getattr(sample, "gt_box", None)
    if box is None:
        raise ConfigError(f"sample {getattr(sample, 'id', '?')!r} has no ground-truth box")
    return RoiResult(tuple(int(v) for v in box), 1.0, "oracle").validate()


@dataclass(frozen=True)
class NaiveRoiConfig:
    quantile: float = 0.9


def roi_naive(image: np.ndarray, config: NaiveRoiConfig = NaiveRoiConfig()) -> RoiResult:
    """Box around the largest bright 4-connected component.

    Pixels strictly above the ``quantile`` of the image are foreground. The
    confidence is the component's fill ratio of its own bounding box, a crude
    proxy that is high for compact blobs and low for thin diagonal shapes.
    A blank image yields confidence 0 and a full-frame box.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3:
        img = img.mean(axis=0)
    h, w = img.shape
    full = RoiResult((0, 0, w, h), 0.0, "naive")
    if not np.any(img > img.min()):
        return full
    thr = np.quantile(img, config.quantile)
    fg = img > thr
    if not fg.any():
        return full
    labels, n = ndimage.label(fg)  # default structure is 4-connected in 2-D
    sizes = np.bincount(labels.ravel())[1:]
    best = int(np.argmax(sizes)) + 1  # first largest on ties
    ys, xs = np.nonzero(labels == best)
    x0, x1, y0, y1 = int(xs.min()), int(xs.max()) + 1, int(ys.min()), int(ys.max()) + 1
    fill = sizes[best - 1] / float((x1 - x0) * (y1 - y0))
    return RoiResult((x0, y0, x1, y1), float(fill), "naive").validate(w, h)


# ---------------------------------------------------------------------------
# sidecar
# ---------------------------------------------------------------------------

def write_roi_sidecar(path, entries: Iterable[Tuple[str, RoiResult]]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for sample_id, roi in entries:
            f.write(json.dumps({"id": sample_id, "box": list(roi.box), "score": roi.confidence}) + "\n")


def load_roi_sidecar(path) -> Dict[str, RoiResult]:
    out = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                box = tuple(int(v) for v in rec["box"])
                score = float(rec["score"])
                sid = str(rec["id"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"{path}:{lineno}: malformed roi record") from exc
            if len(box) != 4:
                raise FormatError(f"{path}:{lineno}: box must have 4 coordinates")
            out[sid] = RoiResult(box, score, "sidecar").validate()
    return out


def read_roi_sidecar(path, sample_id: str) -> RoiResult:
    rois = load_roi_sidecar(path)
    if sample_id not in rois:
        raise MissingRecordError(f"id {sample_id!r} not found in {Path(path).name}")
    return rois[sample_id]


def make_provider(source: str, sidecar_path=None, naive_config: NaiveRoiConfig = NaiveRoiConfig()):
    """Return ``f(sample) -> RoiResult`` for the chosen source."""
    if source == "oracle":
        return roi_from_oracle
    if source == "naive":
        return lambda sample: roi_naive(sample.image, naive_config)
    if source == "sidecar":
        if sidecar_path is None:
            raise ConfigError("roi source 'sidecar' needs a sidecar path")
        table = load_roi_sidecar(sidecar_path)

        def lookup(sample):
            if sample.id not in table:
                raise MissingRecordError(f"id {sample.id!r} not found in roi sidecar")
            return table[sample.id]
        return lookup
    raise ConfigError(f"unknown roi source {source!r}; expected one of {SOURCES}")
