"""Raster and dataset file formats.

* PGM: binary ``P5`` greyscale, maxval 255 only.
* PFM: single channel ``Pf``, little-endian float32 (scale ``-1.0``), rows
  stored bottom-to-top as the format prescribes.
* ``index.jsonl``: one JSON object per sample with keys ``id``,
  ``image_path``, ``mask_path``, ``label``, ``box`` and ``split``. Paths are
  relative to the dataset root.
"""

from __future__ import annotations

import json
import os
import re
from pathlib import Path
from typing import Dict, Iterable, List, Optional

import numpy as np

from .errors import FormatError, MissingRecordError

_TOKEN = re.compile(rb"\s*(#[^\n]*\n\s*)*(\S+)")


def _header_tokens(buf: bytes, count: int, path) -> tuple:
    if buf[:1] not in (b" ", b"\n", b"\r", b"\t"):
        raise FormatError(f"{path}: magic must be followed by whitespace")
    pos, out = 0, []
    for _ in range(count):
        m = _TOKEN.match(buf, pos)
        if m is None:
            raise FormatError(f"{path}: truncated header")
        out.append(m.group(2))
        pos = m.end()
    if pos >= len(buf) or buf[pos:pos + 1] not in (b" ", b"\n", b"\r", b"\t"):
        raise FormatError(f"{path}: header not terminated by a single whitespace byte")
    return out, pos + 1


def write_pgm(path, image: np.ndarray) -> None:
    """Write an 8-bit greyscale raster. Floats in [0, 1] are quantised once."""
    img = np.asarray(image)
    if img.ndim != 2:
        raise FormatError(f"PGM expects a 2-D raster, got shape {img.shape}")
    if img.dtype != np.uint8:
        img = quantize(img)
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(img.tobytes())


def quantize(image: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def read_pgm(path, as_float: bool = True) -> np.ndarray:
    buf = Path(path).read_bytes()
    if buf[:2] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (magic {buf[:2]!r})")
    tokens, start = _header_tokens(buf[2:], 3, path)
    try:
        w, h, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise FormatError(f"{path}: non-integer PGM header field") from exc
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 is supported, got {maxval}")
    if w <= 0 or h <= 0:
        raise FormatError(f"{path}: invalid dimensions {w}x{h}")
    payload = buf[2 + start:]
    if len(payload) != w * h:
        raise FormatError(f"{path}: expected {w * h} pixel bytes, found {len(payload)}")
    img = np.frombuffer(payload, dtype=np.uint8).reshape(h, w)
    return img.astype(np.float32) / 255.0 if as_float else img.copy()


def write_pfm(path, image: np.ndarray) -> None:
    img = np.asarray(image, dtype="<f4")
    if img.ndim != 2:
        raise FormatError(f"PFM writer expects a 2-D raster, got shape {img.shape}")
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n%d %d\n-1.0\n" % (w, h))
        f.write(np.ascontiguousarray(img[::-1]).tobytes())


def read_pfm(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    if buf[:2] == b"PF":
        raise FormatError(f"{path}: colour PFM is not supported")
    if buf[:2] != b"Pf":
        raise FormatError(f"{path}: not a greyscale PFM (magic {buf[:2]!r})")
    tokens, start = _header_tokens(buf[2:], 3, path)
    try:
        w, h = int(tokens[0]), int(tokens[1])
        scale = float(tokens[2])
    except ValueError as exc:
        raise FormatError(f"{path}: malformed PFM header") from exc
    if w <= 0 or h <= 0 or scale == 0.0:
        raise FormatError(f"{path}: invalid PFM header values w={w} h={h} scale={scale}")
    payload = buf[2 + start:]
    if len(payload) != 4 * w * h:
        raise FormatError(f"{path}: expected {4 * w * h} payload bytes, found {len(payload)}")
    dtype = "<f4" if scale < 0 else ">f4"
    img = np.frombuffer(payload, dtype=dtype).reshape(h, w)[::-1]
    return img.astype(np.float32)


# ---------------------------------------------------------------------------
# dataset index
# ---------------------------------------------------------------------------

INDEX_NAME = "index.jsonl"


def write_index(root, records: Iterable[Dict]) -> Path:
    path = Path(root) / INDEX_NAME
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    return path


def read_index(root, split: Optional[str] = None) -> List[Dict]:
    path = Path(root) / INDEX_NAME
    if not path.exists():
        raise MissingRecordError(f"no {INDEX_NAME} under {root}")
    records = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON") from exc
            missing = {"id", "image_path", "label", "box"} - rec.keys()
            if missing:
                raise FormatError(f"{path}:{lineno}: missing fields {sorted(missing)}")
            if split is None or rec.get("split") == split:
                records.append(rec)
    return records


def find_record(records: List[Dict], sample_id: str) -> Dict:
    for rec in records:
        if rec["id"] == sample_id:
            return rec
    raise MissingRecordError(f"sample id {sample_id!r} not in index")


def ensure_empty_dir(path, force: bool = False) -> Path:
    from .errors import ConfigError
    path = Path(path)
    if path.exists() and any(path.iterdir()) and not force:
        raise ConfigError(f"output directory {path} is not empty (use --force to overwrite)")
    path.mkdir(parents=True, exist_ok=True)
    return path


def relpath(path, root) -> str:
    return os.path.relpath(path, root).replace(os.sep, "/")
