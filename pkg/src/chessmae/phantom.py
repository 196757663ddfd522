"""Synthetic bone phantoms with known ground truth.

A phantom is a 128x128 greyscale image in [0, 1]: layered soft tissue, one
bright curved cortex line, an acoustic shadow beneath it, multiplicative
speckle and a few bright textured artifact blobs that never touch the bone
box. Avulsion phantoms cut a gap into the cortex and place a displaced bone
fragment next to it.

All random quantities are drawn in the same order for both classes, so the
normal and avulsion phantoms generated from the same seed are twins that
differ only inside the avulsion ground-truth region.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np
from scipy import ndimage

from .errors import ConfigError

Box = Tuple[int, int, int, int]  # x0, y0, x1, y1 (inclusive-exclusive)

NORMAL = "normal"
AVULSION = "avulsion"


@dataclass(frozen=True)
class PhantomParams:
    size: int = 128
    box_x0_range: Tuple[int, int] = (10, 24)
    box_x1_range: Tuple[int, int] = (104, 118)
    cortex_depth_range: Tuple[float, float] = (52.0, 72.0)
    curvature_range: Tuple[float, float] = (-0.005, 0.005)
    slope_range: Tuple[float, float] = (-0.12, 0.12)
    cortex_brightness: float = 0.9
    cortex_halfwidth: float = 2.5
    tissue_level_range: Tuple[float, float] = (0.14, 0.22)
    tissue_layer_amplitude: float = 0.05
    shadow_attenuation: float = 0.35
    speckle: float = 0.15
    artifact_count_range: Tuple[int, int] = (0, 3)
    artifact_intensity_range: Tuple[float, float] = (0.6, 1.0)
    artifact_radius_range: Tuple[float, float] = (3.0, 7.0)
    gap_width_range: Tuple[int, int] = (6, 14)
    fragment_length_range: Tuple[int, int] = (6, 12)
    fragment_clearance_range: Tuple[int, int] = (2, 5)
    gt_dilation: int = 3
    box_margin_top: int = 22
    box_margin_bottom: int = 10

    def validate(self) -> "PhantomParams":
        if self.gap_width_range[0] < 3:
            raise ConfigError("gap width must be at least 3 px")
        if self.fragment_clearance_range[0] < 2:
            raise ConfigError("fragment must be displaced at least 2 px from the cortex")
        if not 0 < self.cortex_brightness <= 1:
            raise ConfigError("cortex_brightness must lie in (0, 1]")
        if self.speckle < 0 or self.speckle >= 1:
            raise ConfigError("speckle must lie in [0, 1)")
        if self.size < 32:
            raise ConfigError("phantom size must be at least 32")
        lo, hi = self.artifact_count_range
        if lo < 0 or hi < lo:
            raise ConfigError("invalid artifact_count_range")
        band = 2 * (self.cortex_halfwidth + 1)
        reach = band + self.fragment_clearance_range[1] + band + self.gt_dilation
        if self.box_margin_top < reach - self.cortex_halfwidth:
            raise ConfigError("box_margin_top too small to contain a displaced fragment")
        return self


@dataclass
class Sample:
    image: np.ndarray
    label: str
    gt_pixels: np.ndarray
    gt_box: Optional[Box]
    id: str = ""
    split: str = ""

    @property
    def is_anomalous(self) -> bool:
        return self.label == AVULSION


@dataclass
class _Draw:
    """Every random quantity of one phantom, drawn up front."""

    x0: int
    x1: int
    depth: float
    curvature: float
    slope: float
    tissue: float
    layer_freq: float
    layer_phase: float
    speckle: np.ndarray
    artifacts: list
    gap_start: int
    gap_width: int
    frag_len: int
    frag_clearance: int
    frag_side: int
    frag_tilt: float


def _draw(p: PhantomParams, rng: np.random.Generator) -> _Draw:
    n = p.size
    x0 = int(rng.integers(p.box_x0_range[0], p.box_x0_range[1] + 1))
    x1 = int(rng.integers(p.box_x1_range[0], p.box_x1_range[1] + 1))
    depth = float(rng.uniform(*p.cortex_depth_range))
    curvature = float(rng.uniform(*p.curvature_range))
    slope = float(rng.uniform(*p.slope_range))
    tissue = float(rng.uniform(*p.tissue_level_range))
    layer_freq = float(rng.uniform(0.05, 0.15))
    layer_phase = float(rng.uniform(0, 2 * np.pi))
    speckle = rng.uniform(1 - p.speckle, 1 + p.speckle, size=(n, n))

    n_art = int(rng.integers(p.artifact_count_range[0], p.artifact_count_range[1] + 1))
    artifacts = []
    for _ in range(n_art):
        artifacts.append(dict(
            cy=float(rng.uniform(0, n)), cx=float(rng.uniform(0, n)),
            ry=float(rng.uniform(*p.artifact_radius_range)),
            rx=float(rng.uniform(*p.artifact_radius_range)) * 1.5,
            intensity=float(rng.uniform(*p.artifact_intensity_range)),
            texture=rng.random((n, n)),
        ))

    gap_width = int(rng.integers(p.gap_width_range[0], p.gap_width_range[1] + 1))
    frag_len = int(rng.integers(p.fragment_length_range[0], p.fragment_length_range[1] + 1))
    frag_clearance = int(rng.integers(p.fragment_clearance_range[0], p.fragment_clearance_range[1] + 1))
    frag_side = int(rng.integers(0, 2))
    frag_tilt = float(rng.uniform(-0.15, 0.15))
    edge = 6
    lo = x0 + edge + frag_len
    hi = x1 - edge - frag_len - gap_width
    gap_start = int(rng.integers(lo, max(lo, hi) + 1))
    return _Draw(x0, x1, depth, curvature, slope, tissue, layer_freq, layer_phase, speckle, artifacts,
                 gap_start, gap_width, frag_len, frag_clearance, frag_side, frag_tilt)


def _band(dist: np.ndarray, halfwidth: float) -> np.ndarray:
    """Smooth bump of compact support ``|dist| < halfwidth + 1``."""
    r = halfwidth + 1.0
    out = np.cos(0.5 * np.pi * np.clip(dist / r, -1, 1)) ** 2
    out[np.abs(dist) >= r] = 0.0
    return out


def _box(p: PhantomParams, d: _Draw, curve: np.ndarray) -> Box:
    seg = curve[d.x0:d.x1]
    y0 = int(np.floor(seg.min() - p.cortex_halfwidth - p.box_margin_top))
    y1 = int(np.ceil(seg.max() + p.cortex_halfwidth + p.box_margin_bottom)) + 1
    return d.x0, max(0, y0), d.x1, min(p.size, y1)


def render(params: PhantomParams, rng: np.random.Generator, avulsion: bool) -> Sample:
    p = params.validate()
    d = _draw(p, rng)
    n = p.size
    yy, xx = np.mgrid[0:n, 0:n].astype(np.float64)
    xs = np.arange(n, dtype=np.float64)
    xm = 0.5 * (d.x0 + d.x1)
    curve = d.depth + d.slope * (xs - xm) + d.curvature * (xs - xm) ** 2
    box = _box(p, d, curve)

    tissue = d.tissue + p.tissue_layer_amplitude * np.sin(d.layer_freq * yy + d.layer_phase) * (yy / n)
    in_span = (xx >= d.x0) & (xx < d.x1)
    below = (yy > curve[None, :] + p.cortex_halfwidth) & in_span
    clean = np.where(below, tissue * p.shadow_attenuation, tissue)

    dist = yy - curve[None, :]
    cortex = _band(dist, p.cortex_halfwidth) * in_span
    gap_cols = (xx >= d.gap_start) & (xx < d.gap_start + d.gap_width)
    gap_region = (cortex > 0) & gap_cols

    if d.frag_side == 0:
        f0 = d.gap_start + d.gap_width + 1
    else:
        f0 = d.gap_start - 1 - d.frag_len
    frag_cols = (xx >= f0) & (xx < f0 + d.frag_len)
    lift = 2 * (p.cortex_halfwidth + 1) + d.frag_clearance + 1
    frag_curve = curve[None, :] - lift + d.frag_tilt * (xx - (f0 + 0.5 * d.frag_len))
    fragment = _band(yy - frag_curve, p.cortex_halfwidth * 0.8) * frag_cols

    gt = np.zeros((n, n), dtype=bool)
    if avulsion:
        cortex = np.where(gap_cols, 0.0, cortex)
        bone = np.maximum(cortex, fragment)
        region = gap_region | (fragment > 0)
        disk = _disk(p.gt_dilation)
        gt = ndimage.binary_dilation(region, structure=disk)
    else:
        bone = cortex
    clean = np.maximum(clean, p.cortex_brightness * bone)

    art = _artifact_layer(d, box, n, xx, yy)
    clean = np.maximum(clean, art)
    image = np.clip(clean * d.speckle, 0.0, 1.0).astype(np.float32)
    return Sample(image=image, label=AVULSION if avulsion else NORMAL, gt_pixels=gt.astype(np.uint8),
                  gt_box=box)


def _disk(radius: int) -> np.ndarray:
    r = np.arange(-radius, radius + 1)
    return (r[:, None] ** 2 + r[None, :] ** 2) <= radius * radius


def _artifact_layer(d: _Draw, box: Box, n: int, xx: np.ndarray, yy: np.ndarray) -> np.ndarray:
    x0, y0, x1, y1 = box
    outside = ~((xx >= x0) & (xx < x1) & (yy >= y0) & (yy < y1))
    layer = np.zeros((n, n))
    for a in d.artifacts:
        r2 = ((yy - a["cy"]) / a["ry"]) ** 2 + ((xx - a["cx"]) / a["rx"]) ** 2
        blob = (r2 <= 1.0) & outside
        # bright, coarse-grained texture that a reconstruction cannot predict
        tex = (a["texture"] > 0.5).astype(np.float64)
        layer = np.maximum(layer, np.where(blob, a["intensity"] * (0.25 + 0.75 * tex), 0.0))
    return layer


def gen_normal(params: PhantomParams, rng: np.random.Generator) -> Sample:
    return render(params, rng, avulsion=False)


def gen_avulsion(params: PhantomParams, rng: np.random.Generator) -> Sample:
    return render(params, rng, avulsion=True)


def sample_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for one sample, keyed by (seed, *key)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key)]))


def without_artifacts(params: PhantomParams) -> PhantomParams:
    return replace(params, artifact_count_range=(0, 0))


# ---------------------------------------------------------------------------
# augmentation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AugmentConfig:
    """Probabilities and ranges for the training-time transforms.

    Transforms are composed into a single affine map and applied with one
    interpolation. The padding mode (image mean or reflection) is drawn per
    call.
    """

    p_rotate: float = 0.5
    rotation_range: Tuple[float, float] = (-15.0, 15.0)
    p_scale: float = 0.5
    scale_range: Tuple[float, float] = (0.85, 1.15)
    p_crop: float = 0.5
    min_crop_area: float = 0.8
    p_shift: float = 0.5
    max_shift: float = 10.0
    p_enlarge: float = 0.5
    enlarge_range: Tuple[float, float] = (1.0, 1.2)
    p_reflect: float = 0.5
    order: int = 1

    @classmethod
    def disabled(cls) -> "AugmentConfig":
        return cls(p_rotate=0, p_scale=0, p_crop=0, p_shift=0, p_enlarge=0)


def augment(image: np.ndarray, rng: np.random.Generator, config: AugmentConfig = AugmentConfig()) -> np.ndarray:
    img = np.asarray(image, dtype=np.float32)
    h, w = img.shape
    c = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    touched = False

    # draw in a fixed order so the sequence is reproducible per seed
    draws = rng.random(6)
    angle = np.deg2rad(rng.uniform(*config.rotation_range))
    scale = rng.uniform(*config.scale_range)
    area = rng.uniform(config.min_crop_area, 1.0)
    crop_pos = rng.random(2)
    shift = rng.uniform(-config.max_shift, config.max_shift, size=2)
    enlarge = rng.uniform(*config.enlarge_range)

    forward = np.eye(3)  # maps input pixel coords to output pixel coords

    def about_center(m):
        t = np.eye(3)
        t[:2, 2] = -c
        back = np.eye(3)
        back[:2, 2] = c
        mm = np.eye(3)
        mm[:2, :2] = m
        return back @ mm @ t

    if draws[0] < config.p_rotate:
        cs, sn = np.cos(angle), np.sin(angle)
        forward = about_center(np.array([[cs, -sn], [sn, cs]])) @ forward
        touched = True
    if draws[1] < config.p_scale:
        forward = about_center(np.eye(2) * scale) @ forward
        touched = True
    if draws[2] < config.p_crop:
        side = np.sqrt(area)
        # crop a window of relative side `side`, then resize it back to full size
        off = (1.0 - side) * (crop_pos - 0.5) * np.array([h, w])
        t = np.eye(3)
        t[:2, 2] = -off
        forward = about_center(np.eye(2) / side) @ t @ forward
        touched = True
    if draws[3] < config.p_shift:
        t = np.eye(3)
        t[:2, 2] = shift
        forward = t @ forward
        touched = True
    if draws[4] < config.p_enlarge:
        forward = about_center(np.eye(2) * enlarge) @ forward
        touched = True
    reflect = draws[5] < config.p_reflect

    if not touched:
        return img.copy()
    # snap round-off (e.g. sin(2*pi)) so exact identities stay exact at the borders
    inv = np.round(np.linalg.inv(forward), 12)
    mode = "reflect" if reflect else "constant"
    out = ndimage.affine_transform(img, inv[:2, :2], offset=inv[:2, 2], output_shape=(h, w),
                                   order=config.order, mode=mode, cval=float(img.mean()))
    return np.clip(out, 0.0, 1.0).astype(np.float32)
