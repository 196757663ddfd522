"""End-to-end steps: generate -> train -> infer -> eval, plus ablations.

Each step reads and writes plain files so the CLI subcommands can be run
independently. Every step echoes its fully resolved configuration next to
its outputs as ``config.resolved.txt``.
"""

from __future__ import annotations

import csv
import logging
import shutil
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig
from .dataset import generate_phantoms, images_of, read_dataset, split_counts, write_dataset
from .errors import ConfigError, DataError, MissingRecordError
from .evaluation import image_auc, pixel_auc
from .io import INDEX_NAME, ensure_empty_dir, read_pfm, write_pfm
from .masking import ChessboardMask, MaskSet, enumerate_mask_set
from .model import MaeModel
from .phantom import NORMAL, PhantomParams, without_artifacts
from .roi import NaiveRoiConfig, make_provider
from .scoring import SampleScores, score_dataset
from .training import LossRecord, train

logger = logging.getLogger(__name__)

CONFIG_ECHO = "config.resolved.txt"
CHECKPOINT = "model.ckpt"
LOSS_LOG = "loss.csv"
SCORES = "scores.csv"
METRICS = "metrics.csv"
TIMING = "timing.txt"


def _fmt(v: Optional[float]) -> str:
    return "" if v is None else repr(float(v))


def train_mask_set(config: RunConfig) -> MaskSet:
    n = config.input_size
    if not config.use_mask:
        return MaskSet.single(ChessboardMask.all_visible(n, n))
    return enumerate_mask_set(n, n, config.square, config.train_stride)


def test_mask_set(config: RunConfig) -> MaskSet:
    n = config.input_size
    if not config.use_mask:
        return MaskSet.single(ChessboardMask.all_visible(n, n))
    return enumerate_mask_set(n, n, config.square, config.test_stride)


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------

def phantom_params(config: RunConfig) -> PhantomParams:
    params = PhantomParams(size=config.input_size)
    return params if config.artifacts else without_artifacts(params)


def generate_dataset(out_dir, config: RunConfig, count: Optional[int] = None, force: bool = False) -> Path:
    if count is not None:
        c = split_counts(count)
        n_test = c["test"]
        config = config.replace(n_train=c["train"], n_val=c["val"], n_test_normal=n_test - n_test // 2,
                                n_test_avulsion=n_test // 2)
    root = ensure_empty_dir(out_dir, force)
    # --force replaces an earlier dataset; unrelated files are left alone
    for sub in ("images", "masks"):
        shutil.rmtree(root / sub, ignore_errors=True)
    for name in (INDEX_NAME, CONFIG_ECHO):
        (root / name).unlink(missing_ok=True)
    samples = generate_phantoms(config.seed, config.n_train, config.n_val, config.n_test_normal,
                                config.n_test_avulsion, phantom_params(config))
    write_dataset(root, samples)
    config.write(root / CONFIG_ECHO)
    return root


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _read_loss_log(path: Path) -> List[Dict[str, str]]:
    if not path.exists():
        return []
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def train_from_dataset(data_dir, out_dir, config: RunConfig, resume: Optional[str] = None) -> MaeModel:
    """Train on the normal-only ``train`` split and write checkpoint + loss log."""
    train_samples = read_dataset(data_dir, "train")
    if not train_samples:
        raise MissingRecordError(f"dataset {data_dir} has no training samples")
    bad = [s.id for s in train_samples if s.label != NORMAL]
    if bad:
        raise DataError(f"training split must contain only normal images; found {len(bad)} "
                        f"abnormal (first: {bad[0]})")
    val_samples = read_dataset(data_dir, "val")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    start_step = 0
    log_path = out / LOSS_LOG
    if resume:
        model = load_checkpoint(resume, expected_config=config.model_config())
        prev = _read_loss_log(log_path)
        start_step = int(prev[-1]["step"]) if prev else 0
    else:
        model = MaeModel(config.model_config(), seed=config.seed)
        with open(log_path, "w", newline="") as f:
            f.write("step,train_loss,val_loss,lr\n")

    def append(rec: LossRecord) -> None:
        with open(log_path, "a", newline="") as f:
            f.write(f"{rec.step},{_fmt(rec.train_loss)},{_fmt(rec.val_loss)},{_fmt(rec.lr)}\n")

    val_images = images_of(val_samples)[:, None] if val_samples else None
    train(model, images_of(train_samples)[:, None], train_mask_set(config), config.train_config(),
          val_images=val_images, val_mask_set=test_mask_set(config), start_step=start_step, callback=append)
    save_checkpoint(model, out / CHECKPOINT)
    config.write(out / CONFIG_ECHO)
    return model


# ---------------------------------------------------------------------------
# infer
# ---------------------------------------------------------------------------

def roi_provider(config: RunConfig, data_dir=None):
    sidecar = config.roi_sidecar or None
    if sidecar and data_dir is not None and not Path(sidecar).is_absolute():
        sidecar = Path(data_dir) / sidecar
    return make_provider(config.roi_source, sidecar, NaiveRoiConfig(config.naive_quantile))


def score_samples(model: MaeModel, samples, config: RunConfig, data_dir=None,
                  mask_set: Optional[MaskSet] = None) -> List[SampleScores]:
    masks = mask_set if mask_set is not None else test_mask_set(config)
    return score_dataset(model, samples, roi_provider(config, data_dir), masks, config.scoring_config(),
                         n_jobs=config.n_jobs)


def write_scores(path, results: Sequence[SampleScores]) -> None:
    with open(path, "w", newline="") as f:
        f.write("id,label,full_score,roi_score,roi_source\n")
        for r in results:
            f.write(f"{r.id},{r.label},{_fmt(r.full_score.value)},{_fmt(r.roi_score.value)},{r.roi.source}\n")


def read_scores(path) -> List[Dict[str, str]]:
    if not Path(path).exists():
        raise MissingRecordError(f"no scores file at {path}")
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def infer(data_dir, checkpoint, out_dir, config: RunConfig, split: str = "test") -> List[SampleScores]:
    model = load_checkpoint(checkpoint, expected_config=config.model_config())
    samples = read_dataset(data_dir, split)
    out = Path(out_dir)
    maps_dir = out / "maps"
    maps_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    results = score_samples(model, samples, config, data_dir)
    elapsed = time.perf_counter() - t0
    for r in results:
        write_pfm(maps_dir / f"{r.id}_full.pfm", r.full_map.values)
        write_pfm(maps_dir / f"{r.id}_roi.pfm", r.roi_map.values)
    write_scores(out / SCORES, results)
    per_image = elapsed / max(1, len(samples))
    n_masks = len(test_mask_set(config))
    (out / TIMING).write_text(f"images={len(samples)}\nmasks_per_image={n_masks}\n"
                              f"seconds_total={elapsed:.4f}\nseconds_per_image={per_image:.4f}\n")
    logger.info("inference: %d images, %.4f s/image with %d masks", len(samples), per_image, n_masks)
    config.write(out / CONFIG_ECHO)
    return results


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

@dataclass
class Metrics:
    variant: str
    setting: str
    pixel_auc: float
    image_auc: float


def metrics_from_results(results: Sequence[SampleScores], gts: Sequence[np.ndarray], variant: str = "default",
                         pooled: bool = True) -> List[Metrics]:
    labels = [r.label for r in results]
    out = []
    for setting in ("full", "roi"):
        maps = [getattr(r, f"{setting}_map").values for r in results]
        scores = [getattr(r, f"{setting}_score").value for r in results]
        out.append(Metrics(variant, setting, pixel_auc(maps, gts, pooled=pooled).auc,
                           image_auc(scores, labels).auc))
    return out


def write_metrics(path, rows: Sequence[Metrics]) -> None:
    with open(path, "w", newline="") as f:
        f.write("variant,setting,pixel_auc,image_auc\n")
        for m in rows:
            f.write(f"{m.variant},{m.setting},{_fmt(m.pixel_auc)},{_fmt(m.image_auc)}\n")


def write_roc(path, roc) -> None:
    with open(path, "w", newline="") as f:
        f.write("threshold,tpr,fpr\n")
        for t, tp, fp in zip(roc.thresholds, roc.tpr, roc.fpr):
            f.write(f"{_fmt(t)},{_fmt(tp)},{_fmt(fp)}\n")


def evaluate(run_dir, data_dir, config: RunConfig, out_path=None, variant: str = "default",
             split: str = "test", roc_dir=None) -> List[Metrics]:
    """Compute the four AUC cells from an inference run directory.

    With ``roc_dir`` the ROC points of each cell are written as
    ``roc_<setting>_<pixel|image>.csv``.
    """
    run = Path(run_dir)
    rows = read_scores(run / SCORES)
    samples = {s.id: s for s in read_dataset(data_dir, split)}
    gts, labels = [], []
    maps: Dict[str, list] = {"full": [], "roi": []}
    scores: Dict[str, list] = {"full": [], "roi": []}
    for row in rows:
        if row["id"] not in samples:
            raise MissingRecordError(f"no ground truth for scored sample {row['id']!r}")
        gts.append(samples[row["id"]].gt_pixels)
        labels.append(row["label"])
        for setting in ("full", "roi"):
            path = run / "maps" / f"{row['id']}_{setting}.pfm"
            if not path.exists():
                raise MissingRecordError(f"missing error map {path}")
            maps[setting].append(read_pfm(path))
            scores[setting].append(float(row[f"{setting}_score"]))
    result = []
    for setting in ("full", "roi"):
        pix = pixel_auc(maps[setting], gts, pooled=config.pooled_pixel_auc, with_curve=roc_dir is not None)
        img = image_auc(scores[setting], labels)
        result.append(Metrics(variant, setting, pix.auc, img.auc))
        if roc_dir is not None:
            Path(roc_dir).mkdir(parents=True, exist_ok=True)
            write_roc(Path(roc_dir) / f"roc_{setting}_pixel.csv", pix)
            write_roc(Path(roc_dir) / f"roc_{setting}_image.csv", img)
    write_metrics(out_path or run / METRICS, result)
    return result


# ---------------------------------------------------------------------------
# ablation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Variant:
    name: str
    use_mask: bool = True
    train_stride: Optional[int] = None
    test_stride: Optional[int] = None


DEFAULT_VARIANTS = (
    Variant("masked"),
    Variant("no_mask", use_mask=False),
    Variant("test_stride_1", test_stride=1),
    Variant("test_stride_2", test_stride=2),
    Variant("test_stride_4", test_stride=4),
    Variant("test_stride_8", test_stride=8),
)


@dataclass
class AblationRow:
    variant: str
    use_mask: bool
    train_stride: int
    test_stride: int
    n_test_masks: int
    pixel_full: float
    pixel_roi: float
    image_full: float
    image_roi: float


ABLATION_COLUMNS = ("variant", "use_mask", "train_stride", "test_stride", "n_test_masks",
                    "pixel_full", "pixel_roi", "image_full", "image_roi")


def write_ablation(path, rows: Sequence[AblationRow]) -> None:
    with open(path, "w", newline="") as f:
        f.write(",".join(ABLATION_COLUMNS) + "\n")
        for r in rows:
            vals = [getattr(r, c) for c in ABLATION_COLUMNS]
            f.write(",".join(_fmt(v) if isinstance(v, float) else str(v).lower() if isinstance(v, bool)
                             else str(v) for v in vals) + "\n")


def ablation_run(config: RunConfig, variants: Sequence[Variant] = DEFAULT_VARIANTS, samples=None,
                 out_path=None, models: Optional[Dict[tuple, MaeModel]] = None) -> List[AblationRow]:
    """Train/evaluate each variant on one shared phantom set and seed.

    Variants that share training settings (mask on/off, train stride) share
    one trained model, only their test masking differs. ``models`` may carry
    already-trained models keyed by ``(use_mask, train_stride)``; it is
    filled in as a side effect.
    """
    if not variants:
        raise ConfigError("no ablation variants given")
    if samples is None:
        samples = generate_phantoms(config.seed, config.n_train, config.n_val, config.n_test_normal,
                                    config.n_test_avulsion, phantom_params(config))
    train_s = [s for s in samples if s.split == "train"]
    val_s = [s for s in samples if s.split == "val"]
    test_s = [s for s in samples if s.split == "test"]
    gts = [s.gt_pixels for s in test_s]
    models = {} if models is None else models
    rows: List[AblationRow] = []
    for v in variants:
        vc = config.replace(use_mask=v.use_mask, train_stride=v.train_stride or config.train_stride,
                            test_stride=v.test_stride or config.test_stride)
        key = (vc.use_mask, vc.train_stride if vc.use_mask else 0)
        if key not in models:
            model = MaeModel(vc.model_config(), seed=vc.seed)
            train(model, images_of(train_s)[:, None], train_mask_set(vc), vc.train_config(),
                  val_images=images_of(val_s)[:, None] if val_s else None, val_mask_set=test_mask_set(vc))
            models[key] = model
        masks = test_mask_set(vc)
        results = score_samples(models[key], test_s, vc, mask_set=masks)
        m = {r.setting: r for r in metrics_from_results(results, gts, v.name, vc.pooled_pixel_auc)}
        rows.append(AblationRow(v.name, vc.use_mask, vc.train_stride, vc.test_stride, len(masks),
                                m["full"].pixel_auc, m["roi"].pixel_auc, m["full"].image_auc,
                                m["roi"].image_auc))
        logger.info("ablation %s: %s", v.name, rows[-1])
    if out_path is not None:
        write_ablation(out_path, rows)
    return rows


def parse_variants(spec: str) -> List[Variant]:
    """``"masked,no_mask,test_stride_4"`` -> variants; names as in DEFAULT_VARIANTS."""
    known = {v.name: v for v in DEFAULT_VARIANTS}
    out = []
    for name in (t.strip() for t in spec.split(",")):
        if not name:
            continue
        if name not in known:
            raise ConfigError(f"unknown ablation variant {name!r}; known: {sorted(known)}")
        out.append(known[name])
    return out
