"""scikit-learn style wrapper around the masked autoencoder detector.

``fit`` trains on normal images only. ``transform`` returns per-pixel
error maps and ``score_samples`` the top-k image scores; both accept an
optional list of RoIs to apply the box gating.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .checkpoint import load_checkpoint, save_checkpoint
from .errors import DataError
from .masking import ChessboardMask, MaskSet, enumerate_mask_set
from .model import MaeConfig, MaeModel
from .phantom import AugmentConfig
from .scoring import ErrorMap, image_score, pixel_error_full, pixel_error_roi
from .training import TrainConfig, train
from .validation import check_images, check_labels, check_rois


class ChessboardMAEDetector(BaseEstimator):
    """Anomaly detector trained by shifted-chessboard masked reconstruction.

    Parameters mirror :class:`chessmae.config.RunConfig`; ``random_state``
    seeds both initialisation and training.
    """

    def __init__(self, square=8, train_stride=1, test_stride=2, use_mask=True, fill=0.5, tau=0.5,
                 k_percent=0.3, depths=(1, 1), widths=(32, 64), stem_stride=4, mlp_ratio=4, steps=1500,
                 batch_size=8, lr=2e-3, warmup_steps=50, schedule="cosine", val_every=100, augment=False,
                 infer_batch_size=32, random_state=0):
        self.square = square
        self.train_stride = train_stride
        self.test_stride = test_stride
        self.use_mask = use_mask
        self.fill = fill
        self.tau = tau
        self.k_percent = k_percent
        self.depths = depths
        self.widths = widths
        self.stem_stride = stem_stride
        self.mlp_ratio = mlp_ratio
        self.steps = steps
        self.batch_size = batch_size
        self.lr = lr
        self.warmup_steps = warmup_steps
        self.schedule = schedule
        self.val_every = val_every
        self.augment = augment
        self.infer_batch_size = infer_batch_size
        self.random_state = random_state

    def _mask_set(self, size: int, stride: int) -> MaskSet:
        if not self.use_mask:
            return MaskSet.single(ChessboardMask.all_visible(size, size))
        return enumerate_mask_set(size, size, self.square, stride)

    def _train_config(self) -> TrainConfig:
        return TrainConfig(steps=self.steps, batch_size=self.batch_size, lr=self.lr,
                           warmup_steps=self.warmup_steps, schedule=self.schedule, val_every=self.val_every,
                           fill=self.fill, augment=self.augment, augment_config=AugmentConfig(),
                           seed=self.random_state).validate()

    def fit(self, X, y=None, X_val=None):
        """Train on normal images ``X``; ``y``, if given, must be all normal."""
        x = check_images(X)
        if y is not None and check_labels(y, len(x)).any():
            raise DataError("training images must all be normal")
        size = x.shape[1]
        if x.shape[2] != size:
            raise DataError(f"images must be square, got {x.shape[1]}x{x.shape[2]}")
        config = MaeConfig(input_size=size, depths=tuple(self.depths), widths=tuple(self.widths),
                           stem_stride=self.stem_stride, mlp_ratio=self.mlp_ratio)
        self.model_ = MaeModel(config, seed=self.random_state)
        val = None if X_val is None else check_images(X_val, size, "X_val")[:, None]
        self.train_result_ = train(self.model_, x[:, None], self._mask_set(size, self.train_stride),
                                   self._train_config(), val_images=val,
                                   val_mask_set=self._mask_set(size, self.test_stride))
        self.input_size_ = size
        return self

    @classmethod
    def from_checkpoint(cls, path, **params) -> "ChessboardMAEDetector":
        model = load_checkpoint(path)
        c = model.config
        est = cls(depths=c.depths, widths=c.widths, stem_stride=c.stem_stride, mlp_ratio=c.mlp_ratio, **params)
        est.model_, est.input_size_, est.train_result_ = model, c.input_size, None
        return est

    def save(self, path) -> None:
        check_is_fitted(self, "model_")
        save_checkpoint(self.model_, path)

    def _maps(self, X, rois) -> list:
        check_is_fitted(self, "model_")
        x = check_images(X, self.input_size_)
        rois = check_rois(rois, len(x), self.input_size_)
        masks = self._mask_set(self.input_size_, self.test_stride)
        maps = []
        for i, img in enumerate(x):
            m = pixel_error_full(self.model_, img, masks, self.fill, self.infer_batch_size)
            maps.append(m if rois is None else pixel_error_roi(m, rois[i], self.tau))
        return maps

    def transform(self, X, rois: Optional[Sequence] = None) -> np.ndarray:
        """Error maps ``[n, H, W]`` (RoI-gated when ``rois`` is given)."""
        return np.stack([m.values for m in self._maps(X, rois)])

    def score_samples(self, X, rois: Optional[Sequence] = None) -> np.ndarray:
        """Image anomaly scores; larger means more anomalous."""
        return np.array([image_score(m, self.k_percent).value for m in self._maps(X, rois)])

    def score_maps(self, maps) -> np.ndarray:
        """Top-k scores of precomputed error maps."""
        return np.array([image_score(ErrorMap(np.asarray(m)), self.k_percent).value for m in maps])
