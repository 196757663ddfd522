"""Shifted-chessboard masked autoencoder for avulsion fracture detection."""

from .config import RunConfig
from .errors import (ChessMAEError, CheckpointError, ConfigError, DataError, FormatError, GraphReleasedError,
                     MissingRecordError, NumericError, ShapeError)
from .estimator import ChessboardMAEDetector
from .evaluation import RocResult, auc, image_auc, pixel_auc
from .masking import ChessboardMask, MaskSet, apply_mask, enumerate_mask_set, make_mask, sample_mask
from .model import MaeConfig, MaeModel, forward, reconstruct
from .roi import RoiResult, roi_from_oracle, roi_naive
from .scoring import ErrorMap, ImageScore, image_score, pixel_error_full, pixel_error_roi

__version__ = "0.1.0"

__all__ = [
    "RunConfig", "ChessboardMAEDetector",
    "ChessMAEError", "CheckpointError", "ConfigError", "DataError", "FormatError", "GraphReleasedError",
    "MissingRecordError", "NumericError", "ShapeError",
    "RocResult", "auc", "image_auc", "pixel_auc",
    "ChessboardMask", "MaskSet", "apply_mask", "enumerate_mask_set", "make_mask", "sample_mask",
    "MaeConfig", "MaeModel", "forward", "reconstruct",
    "RoiResult", "roi_from_oracle", "roi_naive",
    "ErrorMap", "ImageScore", "image_score", "pixel_error_full", "pixel_error_roi",
]
