"""Shifted chessboard masks.

A mask is a binary raster with 1 = visible and 0 = masked. The pattern for
square side ``s`` and pixel offset ``(dy, dx)`` is::

    visible(h, w) = (floor(((h + dy) mod H) / s) + floor(((w + dx) mod W) / s)) is even

so offset (0, 0) leaves the top-left square visible. Offsets wrap around the
image (toroidal), which keeps every shifted pattern full-frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from .errors import ConfigError, ShapeError


@dataclass(frozen=True, eq=False)
class ChessboardMask:
    grid: np.ndarray
    square: int
    offset: Tuple[int, int] = (0, 0)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.grid.shape

    @property
    def masked_fraction(self) -> float:
        return 1.0 - float(self.grid.mean())

    def complement(self) -> "ChessboardMask":
        dy, dx = self.offset
        return ChessboardMask(1 - self.grid, self.square, ((dy + self.square) % (2 * self.square), dx))

    @classmethod
    def all_visible(cls, height: int, width: int) -> "ChessboardMask":
        """Degenerate mask that hides nothing (the no-mask autoencoder)."""
        return cls(np.ones((height, width), dtype=np.uint8), square=max(height, width))

    def to_pgm(self, path) -> None:
        from .io import write_pgm
        write_pgm(path, self.grid.astype(np.uint8) * 255)


def make_mask(height: int, width: int, square: int, dy: int = 0, dx: int = 0) -> ChessboardMask:
    if square < 1:
        raise ConfigError(f"square must be >= 1, got {square}")
    if square > min(height, width) / 2:
        raise ConfigError(f"square {square} too large for a {height}x{width} image "
                          f"(max {min(height, width) // 2})")
    if not (0 <= dy < 2 * square and 0 <= dx < 2 * square):
        raise ConfigError(f"offset ({dy}, {dx}) outside [0, {2 * square})")
    rows = ((np.arange(height) + dy) % height) // square
    cols = ((np.arange(width) + dx) % width) // square
    grid = ((rows[:, None] + cols[None, :]) % 2 == 0).astype(np.uint8)
    return ChessboardMask(grid, square, (dy, dx))


@dataclass
class MaskSet:
    masks: List[ChessboardMask]
    stride: int
    square: int = 0
    offsets: List[Tuple[int, int]] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.masks)

    def __len__(self) -> int:
        return len(self.masks)

    def __iter__(self):
        return iter(self.masks)

    def __getitem__(self, i) -> ChessboardMask:
        return self.masks[i]

    def stack(self) -> np.ndarray:
        """All grids as one ``[N, H, W]`` uint8 array."""
        return np.stack([m.grid for m in self.masks])

    @classmethod
    def single(cls, mask: ChessboardMask) -> "MaskSet":
        return cls([mask], stride=0, square=mask.square, offsets=[mask.offset])


def enumerate_mask_set(height: int, width: int, square: int, stride: int) -> MaskSet:
    """All distinct shifted masks at the given pixel stride.

    ``dy`` runs over a full period ``[0, 2*square)`` and ``dx`` over half of
    it, ``[0, square)``: the shift ``(dy + s, dx + s)`` reproduces the same
    raster, so the half range on ``dx`` already removes every duplicate.
    The set therefore holds ``(2*square/stride) * (square/stride)`` masks.
    """
    if stride < 1 or (2 * square) % stride:
        raise ConfigError(f"stride {stride} must divide 2*square = {2 * square}")
    if square % stride:
        raise ConfigError(f"stride {stride} must divide square {square} to enumerate dx offsets")
    offsets = [(dy, dx) for dy in range(0, 2 * square, stride) for dx in range(0, square, stride)]
    masks = [make_mask(height, width, square, dy, dx) for dy, dx in offsets]
    return MaskSet(masks, stride=stride, square=square, offsets=offsets)


def apply_mask(x: np.ndarray, mask: ChessboardMask | np.ndarray, fill: float = 0.5) -> np.ndarray:
    """Replace masked pixels of ``x`` (``[..., H, W]``) by ``fill``."""
    grid = mask.grid if isinstance(mask, ChessboardMask) else np.asarray(mask)
    x = np.asarray(x)
    if x.shape[-2:] != grid.shape:
        raise ShapeError(f"image spatial dims {x.shape[-2:]} do not match mask {grid.shape}")
    return np.where(grid.astype(bool), x, np.asarray(fill, dtype=x.dtype)).astype(x.dtype, copy=False)


def sample_mask(mask_set: MaskSet, rng: np.random.Generator) -> ChessboardMask:
    if len(mask_set) == 0:
        raise ConfigError("cannot sample from an empty mask set")
    return mask_set.masks[int(rng.integers(len(mask_set)))]
