import pytest

from chessmae.config import RunConfig, parse_pairs
from chessmae.errors import ConfigError
from chessmae.masking import enumerate_mask_set


def test_defaults():
    c = RunConfig()
    assert (c.input_size, c.square, c.fill, c.tau, c.k_percent) == (128, 8, 0.5, 0.5, 0.3)
    assert len(enumerate_mask_set(128, 128, c.square, c.train_stride)) == 128
    assert len(enumerate_mask_set(128, 128, c.square, c.test_stride)) == 32
    assert c.roi_source == "oracle" and c.pooled_pixel_auc


def test_text_round_trip(tmp_path):
    c = RunConfig(widths=(16, 32), tau=0.25, augment=True, roi_source="naive")
    assert RunConfig.from_text(c.to_text()) == c
    c.write(tmp_path / "c.txt")
    assert RunConfig.from_file(tmp_path / "c.txt") == c


def test_overrides_apply_after_file(tmp_path):
    (tmp_path / "c.txt").write_text("# comment\nsteps = 10\nseed=3\n")
    c = RunConfig.from_file(tmp_path / "c.txt", ["seed=4", "use_mask=false", "depths=2,2"])
    assert (c.steps, c.seed, c.use_mask, c.depths) == (10, 4, False, (2, 2))


@pytest.mark.parametrize("pairs", [["nope=1"], ["steps=abc"], ["use_mask=maybe"], ["tau=1.5"],
                                   ["test_stride=3"], ["k_percent=0"], ["roi_source=yolo"], ["widths=4"],
                                   ["n_jobs=0"], ["schedule=step"]])
def test_invalid_values(pairs):
    with pytest.raises(ConfigError):
        RunConfig.from_file(None, pairs)


def test_parse_pairs_requires_equals():
    with pytest.raises(ConfigError):
        parse_pairs(["just text"])
    assert parse_pairs(["a=b=c"]) == {"a": "b=c"}


def test_derived_configs():
    c = RunConfig(widths=(8, 16), steps=7, tau=0.4)
    assert c.model_config().widths == (8, 16)
    assert c.train_config().steps == 7
    assert c.scoring_config().tau == 0.4
