"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The phantom runs behind criteria 5 and 6 are computed once per session and
shared: for each seed the full CLI pipeline (gen, train, infer, eval) runs
on disk, then the no-mask model and the stride-1 / stride-4 test maskings
are evaluated on the same phantoms, reusing the CLI-trained masked model.
Expect roughly 7 minutes per seed on one core.
"""

import filecmp
import itertools
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

from chessmae import pipeline
from chessmae.checkpoint import load_checkpoint, save_checkpoint
from chessmae.cli import main
from chessmae.config import RunConfig
from chessmae.dataset import read_dataset
from chessmae.errors import FormatError
from chessmae.evaluation import auc
from chessmae.io import read_pfm, read_pgm
from chessmae.masking import enumerate_mask_set
from chessmae.model import MaeConfig, MaeModel
from chessmae.roi import RoiResult
from chessmae.scoring import ErrorMap, image_score, pixel_error_full, pixel_error_roi, topk_count

from acceptance_report import record
from gradcheck import TOL, cases, model_gradient_error
from oracles import error_map_loop, finite_difference_check, pairwise_auc, topk_mean_full_sort

SEEDS = (0, 1, 2)
MARGIN = 0.01
THRESHOLD = 0.85
TRAIN_BUDGET_S = 600.0


# ---------------------------------------------------------------------------
# shared phantom runs
# ---------------------------------------------------------------------------

@dataclass
class PhantomRun:
    seed: int
    train_seconds: float
    metrics: dict        # setting -> Metrics from the CLI eval
    ablation: dict       # variant name -> AblationRow


_RUNS = {}


def _phantom_run(seed, root) -> PhantomRun:
    if seed in _RUNS:
        return _RUNS[seed]
    root = Path(root) / f"seed{seed}"
    data, run, inf = root / "data", root / "run", root / "infer"
    opts = ["--set", f"seed={seed}"]
    assert main(["gen", "--out", str(data)] + opts) == 0
    t0 = time.perf_counter()
    assert main(["train", "--data", str(data), "--out", str(run)] + opts) == 0
    train_seconds = time.perf_counter() - t0
    assert main(["infer", "--data", str(data), "--checkpoint", str(run / pipeline.CHECKPOINT),
                 "--out", str(inf)] + opts) == 0
    assert main(["eval", "--run", str(inf), "--data", str(data)] + opts) == 0
    config = RunConfig().replace(seed=seed)
    metrics = {m.setting: m for m in pipeline.evaluate(inf, data, config)}

    masked = load_checkpoint(run / pipeline.CHECKPOINT, expected_config=config.model_config())
    variants = pipeline.parse_variants("no_mask,test_stride_1,test_stride_4")
    rows = pipeline.ablation_run(config, variants, samples=read_dataset(data),
                                 models={(True, config.train_stride): masked},
                                 out_path=root / "ablation.csv")
    ablation = {r.variant: r for r in rows}
    _RUNS[seed] = PhantomRun(seed, train_seconds, metrics, ablation)
    return _RUNS[seed]


@pytest.fixture(scope="session")
def run_root(tmp_path_factory):
    return tmp_path_factory.mktemp("phantom_runs")


@pytest.fixture(scope="session")
def all_runs(run_root):
    return [_phantom_run(s, run_root) for s in SEEDS]


# ---------------------------------------------------------------------------
# 1. mask combinatorics
# ---------------------------------------------------------------------------

def test_criterion_1_mask_combinatorics():
    t0 = time.perf_counter()
    train_set = enumerate_mask_set(128, 128, 8, 1)
    test_set = enumerate_mask_set(128, 128, 8, 2)
    elapsed = time.perf_counter() - t0

    def distinct(ms):
        return len({m.grid.tobytes() for m in ms})

    half = all(int(m.grid.sum()) * 2 == 128 * 128 for m in itertools.chain(train_set, test_set))
    covered = bool((np.stack([m.grid for m in test_set]) == 0).any(axis=0).all())
    ok = (len(train_set) == 128 and distinct(train_set) == 128 and len(test_set) == 32
          and distinct(test_set) == 32 and half and covered and elapsed < 1.0)
    record("1", ok, f"train masks {len(train_set)} ({distinct(train_set)} distinct), "
                    f"test masks {len(test_set)} ({distinct(test_set)} distinct), all half-masked={half}, "
                    f"stride-2 covers every pixel={covered}, {elapsed:.3f} s")
    assert ok


# ---------------------------------------------------------------------------
# 2. gradient correctness
# ---------------------------------------------------------------------------

def test_criterion_2_gradients():
    t0 = time.perf_counter()
    worst_op, worst_model, n_ops = 0.0, 0.0, 0
    for seed in range(5):
        r = np.random.default_rng(seed)
        for name, fn, inputs in cases(r):
            worst_op = max(worst_op, finite_difference_check(fn, inputs, r))
            n_ops += 1
        worst_model = max(worst_model, model_gradient_error(seed))
    elapsed = time.perf_counter() - t0
    ok = worst_op < TOL and worst_model < TOL and elapsed < 60.0
    record("2", ok, f"{n_ops // 5} ops x 5 seeds worst rel err {worst_op:.2e}, "
                    f"16x16 toy model worst {worst_model:.2e} (tol {TOL:g}), {elapsed:.1f} s")
    assert ok


# ---------------------------------------------------------------------------
# 3. oracle equivalences
# ---------------------------------------------------------------------------

def test_criterion_3_oracles(randomized_toy_model):
    r = np.random.default_rng(3)
    worst_auc = 0.0
    for _ in range(200):
        n = int(r.integers(2, 120))
        labels = r.random(n) < r.uniform(0.1, 0.9)
        labels[:2] = [True, False]
        scores = r.integers(0, 12, n).astype(float) if r.random() < 0.5 else r.normal(size=n)
        worst_auc = max(worst_auc, abs(auc(scores, labels).auc - pairwise_auc(scores, labels)))

    topk_exact = True
    for shape, k in [((128, 128), 0.3), ((128, 128), 1.0), ((16, 16), 5.0), ((33, 17), 0.3), ((8, 8), 100.0)]:
        m = r.random(shape).astype(np.float32)
        if r.random() < 0.5:
            m = np.round(m * 4) / 4
        topk_exact &= image_score(ErrorMap(m), k).value == topk_mean_full_sort(m, topk_count(m.size, k))

    map_exact = True
    for square, stride in [(8, 2), (8, 4), (4, 1)]:
        masks = enumerate_mask_set(16, 16, square, stride)
        img = r.random((16, 16)).astype(np.float32)
        got = pixel_error_full(randomized_toy_model, img, masks, 0.5).values
        map_exact &= np.array_equal(got, error_map_loop(randomized_toy_model, img, masks, 0.5))

    ok = worst_auc < 1e-9 and topk_exact and map_exact
    record("3", ok, f"(a) auc vs pairwise max |d|={worst_auc:.1e} over 200 instances, "
                    f"(b) top-k exact={topk_exact}, (c) error map vs loop exact={map_exact}")
    assert ok


# ---------------------------------------------------------------------------
# 4. RoI gating branches
# ---------------------------------------------------------------------------

def test_criterion_4_roi_branches():
    size = 12
    vals = np.random.default_rng(4).random((size, size)).astype(np.float32) + 0.05
    full = ErrorMap(vals)
    levels = np.round(np.linspace(0.0, 1.0, 21), 10)
    boxes = [(0, 0, 1, 1), (0, 0, size, size), (3, 2, 9, 7), (0, 5, 12, 6), (11, 11, 12, 12), (4, 0, 5, 12)]
    n_cases = n_boundary = 0
    ok = True
    for s, tau, box in itertools.product(levels, levels, boxes):
        out = pixel_error_roi(full, RoiResult(box, float(s)), float(tau)).values
        inside = RoiResult(box, 1.0).contains(size, size)
        if s >= tau:
            ok &= np.array_equal(out[inside], vals[inside]) and bool((out[~inside] == 0).all())
            n_boundary += int(s == tau)
        else:
            ok &= np.array_equal(out, vals)
        n_cases += 1
    record("4", ok, f"{n_cases} (S, tau, box) cases, {n_boundary} with S == tau keep the box")
    assert ok


# ---------------------------------------------------------------------------
# 5. end-to-end phantom run
# ---------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_5_end_to_end(run_root):
    run = _phantom_run(0, run_root)
    roi = run.metrics["roi"]
    ok = roi.pixel_auc >= THRESHOLD and roi.image_auc >= THRESHOLD and run.train_seconds <= TRAIN_BUDGET_S
    full = run.metrics["full"]
    record("5", ok, f"seed 0 RoI pixel AUC {roi.pixel_auc:.4f}, RoI image AUC {roi.image_auc:.4f} "
                    f"(>= {THRESHOLD}); full {full.pixel_auc:.4f}/{full.image_auc:.4f}; "
                    f"train {run.train_seconds:.0f} s (<= {TRAIN_BUDGET_S:.0f} s)")
    assert ok


# ---------------------------------------------------------------------------
# 6. ablation orderings, margin >= 0.01 on every seed
# ---------------------------------------------------------------------------

def _ordering(criterion, runs, better, worse, label):
    gaps = [better(r) - worse(r) for r in runs]
    ok = all(g >= MARGIN for g in gaps)
    per_seed = ", ".join(f"seed {r.seed}: {better(r):.4f} vs {worse(r):.4f}" for r in runs)
    record(criterion, ok, f"{label}; min gap {min(gaps):+.4f} (need >= {MARGIN}); {per_seed}")
    return ok


@pytest.mark.slow
def test_criterion_6a_masked_beats_no_mask(all_runs):
    pix = _ordering("6(a) pixel", all_runs, lambda r: r.metrics["roi"].pixel_auc,
                    lambda r: r.ablation["no_mask"].pixel_roi, "RoI pixel AUC masked vs no-mask")
    img = _ordering("6(a) image", all_runs, lambda r: r.metrics["roi"].image_auc,
                    lambda r: r.ablation["no_mask"].image_roi, "RoI image AUC masked vs no-mask")
    assert pix and img


@pytest.mark.slow
def test_criterion_6b_roi_beats_full_image(all_runs):
    assert _ordering("6(b)", all_runs, lambda r: r.metrics["roi"].image_auc,
                     lambda r: r.metrics["full"].image_auc, "image AUC RoI-aware vs full image")


@pytest.mark.slow
def test_criterion_6c_finer_test_stride(all_runs):
    assert _ordering("6(c)", all_runs, lambda r: r.ablation["test_stride_1"].pixel_roi,
                     lambda r: r.ablation["test_stride_4"].pixel_roi, "RoI pixel AUC test stride 1 vs 4")


# ---------------------------------------------------------------------------
# 7. determinism and formats
# ---------------------------------------------------------------------------

SMALL = ["--set", "widths=4,8", "--set", "mlp_ratio=2", "--set", "steps=8", "--set", "val_every=4",
         "--set", "batch_size=4", "--set", "test_stride=8", "--set", "seed=5"]

BAD_PGM = [b"", b"P2\n2 1\n255\n0 255", b"P5\n2 1\n128\n\x00\xff", b"P5\n2 1\n255\n\x00",
           b"P5\n2 1\n255\n\x00\xff\x00", b"P5\n2 x\n255\n\x00\xff", b"P5\n2 1", b"P52 1\n255\n\x00\xff",
           b"P5\n0 1\n255\n"]
BAD_PFM = [b"", b"PF\n1 1\n-1.0\n" + b"\x00" * 12, b"Pf\n1 1\n0.0\n" + b"\x00" * 4,
           b"Pf\n1 1\nabc\n" + b"\x00" * 4, b"Pf\n2 1\n-1.0\n" + b"\x00" * 4, b"Pf\n1 1\n-1.0",
           b"Pf\n-1 1\n-1.0\n" + b"\x00" * 4]


def _rejects(reader, path, blob):
    path.write_bytes(blob)
    try:
        reader(path)
    except FormatError:
        return True
    return False


def _same_tree(a: Path, b: Path) -> bool:
    files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    return files_a == files_b and all(filecmp.cmp(a / f, b / f, shallow=False) for f in files_a)


def test_criterion_7_determinism_and_formats(tmp_path, randomized_toy_model):
    gen_same = True
    for tag in ("a", "b"):
        assert main(["gen", "--out", str(tmp_path / f"full_{tag}"), "--set", "seed=11"]) == 0
    gen_same &= _same_tree(tmp_path / "full_a", tmp_path / "full_b")

    for tag in ("a", "b"):
        d = tmp_path / tag
        assert main(["gen", "--out", str(d / "data"), "--count", "24"] + SMALL) == 0
        assert main(["train", "--data", str(d / "data"), "--out", str(d / "run")] + SMALL) == 0
        assert main(["infer", "--data", str(d / "data"), "--checkpoint", str(d / "run" / pipeline.CHECKPOINT),
                     "--out", str(d / "inf")] + SMALL) == 0
    a, b = tmp_path / "a", tmp_path / "b"
    gen_same &= _same_tree(a / "data", b / "data")
    scores_same = filecmp.cmp(a / "inf" / pipeline.SCORES, b / "inf" / pipeline.SCORES, shallow=False)
    ckpt_same = filecmp.cmp(a / "run" / pipeline.CHECKPOINT, b / "run" / pipeline.CHECKPOINT, shallow=False)

    round_trip = True
    trained = load_checkpoint(a / "run" / pipeline.CHECKPOINT)
    for i, model in enumerate([randomized_toy_model, trained, MaeModel(MaeConfig(input_size=32), seed=2)]):
        p = tmp_path / f"rt{i}.ckpt"
        save_checkpoint(model, p)
        back = load_checkpoint(p)
        sa, sb = model.state_dict(), back.state_dict()
        round_trip &= back.config == model.config and sa.keys() == sb.keys()
        round_trip &= all(sa[k].dtype == sb[k].dtype and sa[k].tobytes() == sb[k].tobytes() for k in sa)
        save_checkpoint(back, tmp_path / f"rt{i}b.ckpt")
        round_trip &= filecmp.cmp(p, tmp_path / f"rt{i}b.ckpt", shallow=False)

    pgm_ok = sum(_rejects(read_pgm, tmp_path / "bad.pgm", blob) for blob in BAD_PGM)
    pfm_ok = sum(_rejects(read_pfm, tmp_path / "bad.pfm", blob) for blob in BAD_PFM)

    ok = gen_same and scores_same and ckpt_same and round_trip and pgm_ok == len(BAD_PGM) \
        and pfm_ok == len(BAD_PFM)
    record("7", ok, f"datasets byte-identical={gen_same}, scores.csv byte-identical={scores_same}, "
                    f"checkpoints identical={ckpt_same}, round trip bit-exact={round_trip}, "
                    f"malformed PGM rejected {pgm_ok}/{len(BAD_PGM)}, PFM {pfm_ok}/{len(BAD_PFM)}")
    assert ok
