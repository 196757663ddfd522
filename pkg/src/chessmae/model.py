"""ConvNeXt V2 style masked autoencoder with a per-position linear decoder.

The encoder is a dense (not sparse) ConvNeXt V2 stack::

    stem: conv k=s stride=s -> LayerNorm
    stage i>0: LayerNorm -> conv k=2 stride=2
    block: dwconv7x7 -> LayerNorm -> Linear(4x) -> GELU -> GRN -> Linear -> +residual
    final LayerNorm

The decoder maps each feature vector of the last stage to the ``f*f*C``
pixel values of the patch it covers (``f`` = total downsampling) and the
patches are stitched back into a ``[B, C, H, W]`` image.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import truncnorm

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ShapeError


@dataclass(frozen=True)
class MaeConfig:
    input_size: int = 128
    in_chans: int = 1
    depths: Tuple[int, ...] = (2, 2, 4, 2)
    widths: Tuple[int, ...] = (40, 80, 160, 320)
    stem_stride: int = 4
    mlp_ratio: int = 4
    ln_eps: float = 1e-6
    init_std: float = 0.02

    def __post_init__(self):
        object.__setattr__(self, "depths", tuple(int(d) for d in self.depths))
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        self.validate()

    @property
    def downsample(self) -> int:
        return self.stem_stride * 2 ** (len(self.widths) - 1)

    @property
    def decoder_patch(self) -> int:
        return self.downsample

    def validate(self) -> None:
        if len(self.depths) != len(self.widths) or not self.depths:
            raise ConfigError(f"depths {self.depths} and widths {self.widths} must be non-empty and equal length")
        if any(d < 0 for d in self.depths) or any(w < 1 for w in self.widths):
            raise ConfigError("depths must be >= 0 and widths >= 1")
        if self.stem_stride < 1 or self.in_chans < 1 or self.mlp_ratio < 1:
            raise ConfigError("stem_stride, in_chans and mlp_ratio must be positive")
        if self.input_size % self.downsample:
            raise ConfigError(f"input_size {self.input_size} not divisible by total downsample {self.downsample}")

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MaeConfig":
        kw = {}
        types = {f.name: f.type for f in fields(cls)}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in types:
                raise ConfigError(f"unknown model config key {key!r}")
            kw[key] = _parse_field(key, val)
        return cls(**kw)

    @classmethod
    def toy(cls, input_size: int = 16) -> "MaeConfig":
        """Tiny two-stage network (f=8) for gradient checks and unit tests."""
        return cls(input_size=input_size, depths=(1, 1), widths=(4, 8), stem_stride=4, mlp_ratio=2)

    @classmethod
    def desk(cls, input_size: int = 128) -> "MaeConfig":
        """CPU-trainable configuration used by the phantom experiments."""
        return cls(input_size=input_size, depths=(1, 1), widths=(32, 64), stem_stride=4)

    @classmethod
    def nano(cls, input_size: int = 128) -> "MaeConfig":
        return cls(input_size=input_size, depths=(2, 2, 8, 2), widths=(80, 160, 320, 640), stem_stride=4)


def _parse_field(key: str, val: str):
    if key in ("depths", "widths"):
        return tuple(int(x) for x in val.split(",") if x.strip())
    if key in ("ln_eps", "init_std"):
        return float(val)
    return int(val)


def _trunc_normal(rng: np.random.Generator, shape, std: float) -> np.ndarray:
    return truncnorm.rvs(-2.0, 2.0, scale=std, size=shape, random_state=rng).astype(np.float32)


class MaeModel:
    """Parameters of the encoder/decoder plus the forward pass.

    Parameters live in an insertion-ordered ``dict`` of named tensors; the
    order is the serialisation order of checkpoints.
    """

    def __init__(self, config: MaeConfig, params: Optional[Dict[str, Tensor]] = None, seed: int = 0):
        self.config = config
        self.params: Dict[str, Tensor] = params if params is not None else self._init(seed)

    # -- construction ------------------------------------------------------
    def param_shapes(self) -> List[Tuple[str, Tuple[int, ...]]]:
        c = self.config
        out = []
        w0 = c.widths[0]
        out += [("stem.conv.weight", (w0, c.in_chans, c.stem_stride, c.stem_stride)),
                ("stem.conv.bias", (w0,)), ("stem.norm.weight", (w0,)), ("stem.norm.bias", (w0,))]
        for i, (depth, w) in enumerate(zip(c.depths, c.widths)):
            if i > 0:
                prev = c.widths[i - 1]
                out += [(f"stages.{i}.down.norm.weight", (prev,)), (f"stages.{i}.down.norm.bias", (prev,)),
                        (f"stages.{i}.down.conv.weight", (w, prev, 2, 2)), (f"stages.{i}.down.conv.bias", (w,))]
            hidden = c.mlp_ratio * w
            for j in range(depth):
                p = f"stages.{i}.blocks.{j}"
                out += [(f"{p}.dwconv.weight", (w, 1, 7, 7)), (f"{p}.dwconv.bias", (w,)),
                        (f"{p}.norm.weight", (w,)), (f"{p}.norm.bias", (w,)),
                        (f"{p}.pwconv1.weight", (hidden, w)), (f"{p}.pwconv1.bias", (hidden,)),
                        (f"{p}.grn.gamma", (hidden,)), (f"{p}.grn.beta", (hidden,)),
                        (f"{p}.pwconv2.weight", (w, hidden)), (f"{p}.pwconv2.bias", (w,))]
        wl = c.widths[-1]
        f = c.decoder_patch
        out += [("norm.weight", (wl,)), ("norm.bias", (wl,)),
                ("decoder.weight", (f * f * c.in_chans, wl)), ("decoder.bias", (f * f * c.in_chans,))]
        return out

    def _init(self, seed: int) -> Dict[str, Tensor]:
        rng = np.random.default_rng(seed)
        params = {}
        for name, shape in self.param_shapes():
            if name.endswith("norm.weight"):
                data = np.ones(shape, np.float32)
            elif name.endswith(".weight"):
                data = _trunc_normal(rng, shape, self.config.init_std)
            else:
                # biases, norm offsets and both GRN parameters start at zero
                data = np.zeros(shape, np.float32)
            params[name] = Tensor(data, requires_grad=True, dtype=np.float32, name=name)
        return params

    def astype(self, dtype) -> "MaeModel":
        params = {k: Tensor(np.array(v.data, dtype=dtype), requires_grad=True, dtype=dtype, name=k)
                  for k, v in self.params.items()}
        return MaeModel(self.config, params)

    def copy(self) -> "MaeModel":
        return self.astype(self.dtype)

    @property
    def dtype(self) -> np.dtype:
        return next(iter(self.params.values())).dtype

    def parameters(self) -> List[Tensor]:
        return list(self.params.values())

    def named_parameters(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(self.params.items())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        for k, v in state.items():
            if k not in self.params or self.params[k].shape != v.shape:
                raise ShapeError(f"state entry {k!r} with shape {v.shape} does not fit the model")
            self.params[k].data[...] = v

    # -- forward ---------------------------------------------------------
    def __call__(self, x) -> Tensor:
        return forward(self, x)


def _block(x: Tensor, p: Dict[str, Tensor], prefix: str, eps: float) -> Tensor:
    y = ad.depthwise_conv7x7(x, p[f"{prefix}.dwconv.weight"], p[f"{prefix}.dwconv.bias"])
    y = ad.permute(y, (0, 2, 3, 1))
    y = ad.layer_norm(y, p[f"{prefix}.norm.weight"], p[f"{prefix}.norm.bias"], axis=-1, eps=eps)
    y = ad.linear(y, p[f"{prefix}.pwconv1.weight"], p[f"{prefix}.pwconv1.bias"])
    y = ad.gelu(y)
    y = ad.grn(y, p[f"{prefix}.grn.gamma"], p[f"{prefix}.grn.beta"], channel_axis=-1)
    y = ad.linear(y, p[f"{prefix}.pwconv2.weight"], p[f"{prefix}.pwconv2.bias"])
    y = ad.permute(y, (0, 3, 1, 2))
    return ad.add(x, y)


def encode(model: MaeModel, x: Tensor) -> Tensor:
    c, p = model.config, model.params
    eps = c.ln_eps
    x = ad.conv2d(x, p["stem.conv.weight"], p["stem.conv.bias"], stride=c.stem_stride)
    x = ad.layer_norm(x, p["stem.norm.weight"], p["stem.norm.bias"], axis=1, eps=eps)
    for i, depth in enumerate(c.depths):
        if i > 0:
            x = ad.layer_norm(x, p[f"stages.{i}.down.norm.weight"], p[f"stages.{i}.down.norm.bias"], axis=1, eps=eps)
            x = ad.conv2d(x, p[f"stages.{i}.down.conv.weight"], p[f"stages.{i}.down.conv.bias"], stride=2)
        for j in range(depth):
            x = _block(x, p, f"stages.{i}.blocks.{j}", eps)
    return ad.layer_norm(x, p["norm.weight"], p["norm.bias"], axis=1, eps=eps)


def decode(model: MaeModel, feats: Tensor) -> Tensor:
    c, p = model.config, model.params
    f, ch = c.decoder_patch, c.in_chans
    b, _, gh, gw = feats.shape
    y = ad.permute(feats, (0, 2, 3, 1))
    y = ad.linear(y, p["decoder.weight"], p["decoder.bias"])
    y = ad.reshape(y, (b, gh, gw, f, f, ch))
    y = ad.permute(y, (0, 5, 1, 3, 2, 4))
    return ad.reshape(y, (b, ch, gh * f, gw * f))


def forward(model: MaeModel, x) -> Tensor:
    """Reconstruct ``[B, C, H, W]`` images from their (masked) inputs."""
    c = model.config
    if not isinstance(x, Tensor):
        x = Tensor(x, dtype=model.dtype)
    if x.ndim != 4 or x.shape[1] != c.in_chans or x.shape[2:] != (c.input_size, c.input_size):
        raise ShapeError(f"model expects [B, {c.in_chans}, {c.input_size}, {c.input_size}], got {x.shape}")
    return decode(model, encode(model, x))


def reconstruction_loss(recon: Tensor, target) -> Tensor:
    """Mean squared error over every pixel, masked and visible alike."""
    return ad.mse_loss(recon, target)


def reconstruct(model: MaeModel, x: np.ndarray, batch_size: int = 32) -> np.ndarray:
    """Inference helper: forward in chunks without recording a tape."""
    x = np.asarray(x, dtype=model.dtype)
    outs = []
    with ad.no_grad():
        for i in range(0, len(x), batch_size):
            outs.append(forward(model, x[i:i + batch_size]).data)
    if not outs:
        c = model.config
        return np.zeros((0, c.in_chans, c.input_size, c.input_size), dtype=model.dtype)
    return np.concatenate(outs, axis=0)
