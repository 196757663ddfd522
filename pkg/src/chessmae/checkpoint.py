"""Binary checkpoint format (version 1), all integers little-endian::

    b"MAEB"                      magic
    u32  version                 = 1
    u32  config length, bytes    followed by the UTF-8 model config (key=value lines)
    repeated until EOF:
        u16  name length, bytes  followed by the UTF-8 parameter name
        u8   ndim                followed by ndim x u32 dims
        float32 payload          prod(dims) values
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Optional

import numpy as np

from .autodiff import Tensor
from .errors import (BadMagicError, CheckpointError, ConfigError, ConfigMismatchError,
                     TruncatedCheckpointError, UnknownTensorError, VersionError)
from .model import MaeConfig, MaeModel

MAGIC = b"MAEB"
VERSION = 1


def save_checkpoint(model: MaeModel, path) -> None:
    cfg = model.config.to_text().encode("utf-8")
    chunks = [MAGIC, struct.pack("<II", VERSION, len(cfg)), cfg]
    for name, t in model.named_parameters():
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)) + raw)
        chunks.append(struct.pack("<B", t.ndim) + struct.pack(f"<{t.ndim}I", *t.shape))
        chunks.append(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedCheckpointError(f"checkpoint truncated while reading {what}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    @property
    def done(self) -> bool:
        return self.pos >= len(self.buf)


def load_checkpoint(path, expected_config: Optional[MaeConfig] = None) -> MaeModel:
    """Read a checkpoint, optionally insisting on a specific model config."""
    r = _Reader(Path(path).read_bytes())
    if r.take(4, "magic") != MAGIC:
        raise BadMagicError(f"{path}: not a checkpoint (bad magic)")
    (version,) = r.unpack("<I", "version")
    if version != VERSION:
        raise VersionError(f"{path}: unsupported checkpoint version {version}")
    (clen,) = r.unpack("<I", "config length")
    try:
        config = MaeConfig.from_text(r.take(clen, "config").decode("utf-8"))
    except (UnicodeDecodeError, ConfigError, ValueError) as exc:
        raise CheckpointError(f"{path}: unreadable model config: {exc}") from exc
    if expected_config is not None and config != expected_config:
        raise ConfigMismatchError(f"{path}: checkpoint config {config} does not match expected {expected_config}")

    model = MaeModel(config, params={})
    shapes = dict(model.param_shapes())
    params = {}
    while not r.done:
        (nlen,) = r.unpack("<H", "name length")
        name = r.take(nlen, "name").decode("utf-8")
        (ndim,) = r.unpack("<B", "ndim")
        dims = r.unpack(f"<{ndim}I", "dims")
        if name not in shapes:
            raise UnknownTensorError(f"{path}: unknown tensor {name!r}")
        if tuple(dims) != shapes[name]:
            raise ConfigMismatchError(f"{path}: tensor {name!r} has shape {dims}, expected {shapes[name]}")
        count = int(np.prod(dims)) if dims else 1
        data = np.frombuffer(r.take(4 * count, f"tensor {name!r}"), dtype="<f4").reshape(dims)
        params[name] = Tensor(data.astype(np.float32), requires_grad=True, dtype=np.float32, name=name)
    missing = [n for n in shapes if n not in params]
    if missing:
        raise TruncatedCheckpointError(f"{path}: missing tensors {missing[:3]}{'...' if len(missing) > 3 else ''}")
    model.params = {n: params[n] for n in shapes}
    return model
