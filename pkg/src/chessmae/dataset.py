"""Phantom datasets on disk.

Layout under a dataset root::

    index.jsonl          one record per sample (see :mod:`chessmae.io`)
    images/<id>.pgm      8-bit image
    masks/<id>.pgm       ground-truth avulsion pixels (0 / 255)

Images are quantised to 8 bits once, at write time.
"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import FormatError, MissingRecordError
from .io import find_record, quantize, read_index, read_pgm, relpath, write_index, write_pgm
from .phantom import AVULSION, NORMAL, PhantomParams, Sample, gen_avulsion, gen_normal, sample_rng

SPLITS = ("train", "val", "test")
_SPLIT_CODE = {("train", NORMAL): 0, ("val", NORMAL): 1, ("test", NORMAL): 2, ("test", AVULSION): 3,
               ("train", AVULSION): 4, ("val", AVULSION): 5}


def write_sample(root, sample: Sample) -> Dict:
    """Write the rasters of one sample and return its index record."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    img_path = root / "images" / f"{sample.id}.pgm"
    mask_path = root / "masks" / f"{sample.id}.pgm"
    write_pgm(img_path, quantize(sample.image))
    write_pgm(mask_path, (np.asarray(sample.gt_pixels) > 0).astype(np.uint8) * 255)
    return {"id": sample.id, "image_path": relpath(img_path, root), "mask_path": relpath(mask_path, root),
            "label": sample.label, "box": list(sample.gt_box) if sample.gt_box is not None else None,
            "split": sample.split}


def sample_from_record(root, rec: Dict) -> Sample:
    root = Path(root)
    image = read_pgm(root / rec["image_path"])
    if rec.get("mask_path"):
        gt = (read_pgm(root / rec["mask_path"], as_float=False) > 0).astype(np.uint8)
        if gt.shape != image.shape:
            raise FormatError(f"mask of {rec['id']} has shape {gt.shape}, image {image.shape}")
    else:
        gt = np.zeros(image.shape, dtype=np.uint8)
    if rec["label"] not in (NORMAL, AVULSION):
        raise FormatError(f"sample {rec['id']}: unknown label {rec['label']!r}")
    box = tuple(int(v) for v in rec["box"]) if rec.get("box") is not None else None
    return Sample(image=image, label=rec["label"], gt_pixels=gt, gt_box=box, id=rec["id"],
                  split=rec.get("split", ""))


def read_sample(root, sample_id: str) -> Sample:
    return sample_from_record(root, find_record(read_index(root), sample_id))


def write_dataset(root, samples: Sequence[Sample]) -> Path:
    records = [write_sample(root, s) for s in samples]
    return write_index(root, records)


def read_dataset(root, split: Optional[str] = None) -> List[Sample]:
    return [sample_from_record(root, rec) for rec in read_index(root, split)]


def split_counts(count: int) -> Dict[str, int]:
    """70 / 15 / 15 split of ``count``; test gets the remainder."""
    n_train = int(round(0.70 * count))
    n_val = int(round(0.15 * count))
    return {"train": n_train, "val": n_val, "test": max(0, count - n_train - n_val)}


def generate_phantoms(seed: int, n_train: int, n_val: int, n_test_normal: int, n_test_avulsion: int,
                      params: PhantomParams = PhantomParams()) -> List[Sample]:
    """Deterministic phantom set: normal train/val, mixed test."""
    plan = [("train", NORMAL, n_train), ("val", NORMAL, n_val), ("test", NORMAL, n_test_normal),
            ("test", AVULSION, n_test_avulsion)]
    out = []
    for split, label, n in plan:
        gen = gen_avulsion if label == AVULSION else gen_normal
        code = _SPLIT_CODE[(split, label)]
        for i in range(n):
            s = gen(params, sample_rng(seed, code, i))
            s.id = f"{split}-{label}-{i:04d}"
            s.split = split
            out.append(s)
    return out


def images_of(samples: Sequence[Sample]) -> np.ndarray:
    if not samples:
        raise MissingRecordError("no samples")
    return np.stack([np.asarray(s.image, dtype=np.float32) for s in samples])
