"""Training loop: random shifted mask + augmentation + full-image MSE."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, NumericError
from .masking import MaskSet, sample_mask
from .model import MaeModel, forward, reconstruct, reconstruction_loss
from .phantom import AugmentConfig, augment

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 1500
    batch_size: int = 8
    lr: float = 2e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    schedule: str = "cosine"  # or "constant"
    warmup_steps: int = 50
    val_every: int = 100
    fill: float = 0.5
    augment: bool = True
    augment_config: AugmentConfig = field(default_factory=AugmentConfig)
    seed: int = 0

    def validate(self) -> "TrainConfig":
        if self.steps < 0 or self.batch_size < 1 or self.val_every < 1:
            raise ConfigError("steps must be >= 0, batch_size and val_every >= 1")
        if self.schedule not in ("cosine", "constant"):
            raise ConfigError(f"unknown lr schedule {self.schedule!r}")
        return self

    def lr_at(self, step: int) -> float:
        """Learning rate for 1-based ``step``."""
        if self.warmup_steps and step <= self.warmup_steps:
            return self.lr * step / self.warmup_steps
        if self.schedule == "constant" or self.steps <= self.warmup_steps:
            return self.lr
        t = (step - self.warmup_steps) / max(1, self.steps - self.warmup_steps)
        return self.lr * 0.5 * (1.0 + math.cos(math.pi * min(1.0, t)))


@dataclass
class LossRecord:
    step: int
    train_loss: float
    val_loss: Optional[float] = None
    lr: float = 0.0


@dataclass
class TrainResult:
    log: List[LossRecord]
    best_step: int
    best_val: Optional[float]


def _as_nchw(images: np.ndarray) -> np.ndarray:
    x = np.asarray(images, dtype=np.float32)
    if x.ndim == 3:
        x = x[:, None]
    if x.ndim != 4:
        raise ConfigError(f"expected images as [N, H, W] or [N, C, H, W], got {x.shape}")
    return x


def validation_loss(model: MaeModel, images: np.ndarray, mask_set: MaskSet, fill: float = 0.5) -> float:
    """Loss with a fixed, cycling mask assignment (image i gets mask i mod N)."""
    x = _as_nchw(images)
    grids = mask_set.stack().astype(bool)
    inputs = np.empty_like(x)
    for i in range(len(x)):
        inputs[i] = np.where(grids[i % len(grids)], x[i], np.float32(fill))
    recon = reconstruct(model, inputs)
    return float(np.mean((recon.astype(np.float64) - x) ** 2))


def make_batch(images: np.ndarray, idx: np.ndarray, mask_set: MaskSet, rng: np.random.Generator,
               config: TrainConfig):
    targets = np.empty((len(idx),) + images.shape[1:], dtype=np.float32)
    inputs = np.empty_like(targets)
    for k, i in enumerate(idx):
        img = images[i]
        if config.augment:
            img = np.stack([augment(ch, rng, config.augment_config) for ch in img])
        grid = sample_mask(mask_set, rng).grid.astype(bool)
        targets[k] = img
        inputs[k] = np.where(grid, img, np.float32(config.fill))
    return inputs, targets


def train(model: MaeModel, images: np.ndarray, mask_set: MaskSet, config: TrainConfig = TrainConfig(),
          val_images: Optional[np.ndarray] = None, val_mask_set: Optional[MaskSet] = None,
          start_step: int = 0, callback: Optional[Callable[[LossRecord], None]] = None) -> TrainResult:
    """Fit ``model`` in place on normal images.

    ``config.steps`` is the total budget; a resumed run starts after
    ``start_step`` and follows the same learning-rate schedule. Optimiser
    moments are not checkpointed, so they restart from zero.

    When validation images are given the parameters with the lowest
    validation loss are restored at the end.
    """
    config.validate()
    x = _as_nchw(images)
    if len(x) == 0:
        raise ConfigError("no training images")
    # resumed runs draw from a fresh stream keyed on the resume point
    rng = np.random.default_rng([config.seed, start_step])
    params = model.parameters()
    opt = ad.Adam(params, lr=config.lr, betas=(config.beta1, config.beta2), eps=config.eps)
    val_masks = val_mask_set if val_mask_set is not None else mask_set
    log: List[LossRecord] = []
    best_val, best_step, best_state = None, start_step, None
    bs = min(config.batch_size, len(x))

    for step in range(start_step + 1, config.steps + 1):
        idx = rng.choice(len(x), size=bs, replace=False)
        inputs, targets = make_batch(x, idx, mask_set, rng, config)
        opt.lr = config.lr_at(step)
        opt.zero_grad()
        loss = reconstruction_loss(forward(model, inputs), targets)
        value = loss.item()
        if not math.isfinite(value):
            raise NumericError(f"non-finite training loss at step {step}")
        loss.backward()
        opt.step()
        rec = LossRecord(step, value, lr=opt.lr)
        if val_images is not None and len(val_images) and (step % config.val_every == 0 or step == config.steps):
            rec.val_loss = validation_loss(model, val_images, val_masks, config.fill)
            if best_val is None or rec.val_loss < best_val:
                best_val, best_step, best_state = rec.val_loss, rec.step, model.state_dict()
            logger.info("step %d train %.5f val %.5f", rec.step, value, rec.val_loss)
        log.append(rec)
        if callback is not None:
            callback(rec)
    if best_state is not None:
        model.load_state_dict(best_state)
    elif log:
        best_step = log[-1].step
    return TrainResult(log, best_step, best_val)
