"""Run configuration: a flat ``key=value`` text file plus overrides.

Defaults reproduce the experimental settings (128x128 input, 8x8 squares,
1-pixel training shifts, 2-pixel test shifts, tau = 0.5, k = 0.3 %). The
model and optimiser defaults are the desk-scale values used for phantoms.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, Iterable, Optional, Tuple

from .errors import ConfigError
from .model import MaeConfig
from .phantom import AugmentConfig
from .roi import SOURCES
from .scoring import ScoringConfig
from .training import TrainConfig


@dataclass(frozen=True)
class RunConfig:
    # masking / scoring
    input_size: int = 128
    square: int = 8
    train_stride: int = 1
    test_stride: int = 2
    fill: float = 0.5
    tau: float = 0.5
    k_percent: float = 0.3
    use_mask: bool = True
    # model
    depths: Tuple[int, ...] = (1, 1)
    widths: Tuple[int, ...] = (32, 64)
    stem_stride: int = 4
    mlp_ratio: int = 4
    # optimiser
    steps: int = 1500
    batch_size: int = 8
    lr: float = 2e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    schedule: str = "cosine"
    warmup_steps: int = 50
    val_every: int = 100
    augment: bool = False
    # data
    seed: int = 0
    n_train: int = 256
    n_val: int = 32
    n_test_normal: int = 32
    n_test_avulsion: int = 32
    artifacts: bool = True
    # inference / evaluation
    roi_source: str = "oracle"
    roi_sidecar: str = ""
    naive_quantile: float = 0.9
    pooled_pixel_auc: bool = True
    infer_batch_size: int = 32
    n_jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "depths", tuple(int(v) for v in self.depths))
        object.__setattr__(self, "widths", tuple(int(v) for v in self.widths))
        self.validate()

    def validate(self) -> None:
        if self.input_size < 1 or self.square < 1:
            raise ConfigError("input_size and square must be positive")
        for name in ("train_stride", "test_stride"):
            s = getattr(self, name)
            if s < 1 or self.square % s:
                raise ConfigError(f"{name}={s} must be a positive divisor of square={self.square}")
        if not 0 <= self.tau <= 1:
            raise ConfigError(f"tau must lie in [0, 1], got {self.tau}")
        if not 0 < self.k_percent <= 100:
            raise ConfigError(f"k_percent must lie in (0, 100], got {self.k_percent}")
        if self.roi_source not in SOURCES:
            raise ConfigError(f"roi_source must be one of {SOURCES}, got {self.roi_source!r}")
        if min(self.n_train, self.n_val, self.n_test_normal, self.n_test_avulsion) < 0:
            raise ConfigError("sample counts must be non-negative")
        if self.n_jobs < 1 or self.infer_batch_size < 1:
            raise ConfigError("n_jobs and infer_batch_size must be >= 1")
        self.model_config()
        self.train_config()

    # -- derived configs ---------------------------------------------------
    def model_config(self) -> MaeConfig:
        return MaeConfig(input_size=self.input_size, depths=self.depths, widths=self.widths,
                         stem_stride=self.stem_stride, mlp_ratio=self.mlp_ratio)

    def train_config(self) -> TrainConfig:
        return TrainConfig(steps=self.steps, batch_size=self.batch_size, lr=self.lr, beta1=self.beta1,
                           beta2=self.beta2, eps=self.eps, schedule=self.schedule,
                           warmup_steps=self.warmup_steps, val_every=self.val_every, fill=self.fill,
                           augment=self.augment, augment_config=AugmentConfig(), seed=self.seed).validate()

    def scoring_config(self) -> ScoringConfig:
        return ScoringConfig(fill=self.fill, tau=self.tau, k_percent=self.k_percent,
                             batch_size=self.infer_batch_size)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    # -- text form ---------------------------------------------------------
    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            lines.append(f"{f.name}={_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, base: Optional["RunConfig"] = None) -> "RunConfig":
        return (base or cls()).with_overrides(parse_pairs(text.splitlines()))

    @classmethod
    def from_file(cls, path, overrides: Iterable[str] = ()) -> "RunConfig":
        base = cls.from_text(Path(path).read_text(encoding="utf-8")) if path else cls()
        return base.with_overrides(parse_pairs(overrides))

    def with_overrides(self, pairs: Dict[str, str]) -> "RunConfig":
        known = {f.name: f for f in fields(self)}
        changes = {}
        for key, raw in pairs.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            changes[key] = _coerce(key, raw, getattr(self, key))
        return dataclasses.replace(self, **changes)

    def write(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")


def parse_pairs(lines: Iterable[str]) -> Dict[str, str]:
    out = {}
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"expected key=value, got {line!r}")
        key, _, val = line.partition("=")
        out[key.strip()] = val.strip()
    return out


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(key: str, raw: str, current):
    try:
        if isinstance(current, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(current, tuple):
            return tuple(int(x) for x in raw.split(",") if x.strip())
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
