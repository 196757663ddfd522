import numpy as np
import pytest

from chessmae.dataset import generate_phantoms, images_of
from chessmae.errors import ConfigError, NumericError
from chessmae.masking import enumerate_mask_set
from chessmae.model import MaeConfig, MaeModel
from chessmae.phantom import AugmentConfig
from chessmae.training import TrainConfig, make_batch, train, validation_loss


@pytest.fixture(scope="module")
def phantoms():
    return images_of(generate_phantoms(0, 64, 0, 0, 0))


def test_loss_halves_in_200_steps(phantoms):
    model = MaeModel(MaeConfig(depths=(1, 1), widths=(8, 16)), seed=0)
    cfg = TrainConfig(steps=200, batch_size=8, lr=2e-3, warmup_steps=20, augment=True)
    res = train(model, phantoms, enumerate_mask_set(128, 128, 8, 1), cfg)
    first = np.mean([r.train_loss for r in res.log[:5]])
    last = np.mean([r.train_loss for r in res.log[-5:]])
    assert last < 0.5 * first


def test_zero_lr_keeps_loss_constant():
    x = np.random.default_rng(0).random((4, 16, 16)).astype(np.float32)
    model = MaeModel(MaeConfig.toy(16), seed=0)
    before = model.state_dict()
    cfg = TrainConfig(steps=5, batch_size=4, lr=0.0, warmup_steps=0, augment=False)
    # a single all-visible mask removes sampling noise from the inputs
    from chessmae.masking import ChessboardMask, MaskSet
    res = train(model, x, MaskSet.single(ChessboardMask.all_visible(16, 16)), cfg)
    assert len({r.train_loss for r in res.log}) == 1
    for k, v in model.state_dict().items():
        assert v.tobytes() == before[k].tobytes()


def test_best_validation_state_restored():
    x = np.random.default_rng(0).random((8, 16, 16)).astype(np.float32)
    ms = enumerate_mask_set(16, 16, 4, 2)
    model = MaeModel(MaeConfig.toy(16), seed=0)
    cfg = TrainConfig(steps=40, batch_size=4, lr=1e-2, val_every=10, warmup_steps=0, augment=False)
    res = train(model, x, ms, cfg, val_images=x[:4])
    vals = [r.val_loss for r in res.log if r.val_loss is not None]
    assert len(vals) == 4 and res.best_val == min(vals)
    assert validation_loss(model, x[:4], ms) == pytest.approx(res.best_val, rel=1e-6)


def test_training_is_deterministic():
    x = np.random.default_rng(0).random((8, 16, 16)).astype(np.float32)
    ms = enumerate_mask_set(16, 16, 4, 1)
    cfg = TrainConfig(steps=10, batch_size=4, augment=True)
    a, b = MaeModel(MaeConfig.toy(16), seed=0), MaeModel(MaeConfig.toy(16), seed=0)
    train(a, x, ms, cfg)
    train(b, x, ms, cfg)
    for k, v in a.state_dict().items():
        assert v.tobytes() == b.state_dict()[k].tobytes()


def test_resume_continues_step_index():
    x = np.random.default_rng(0).random((8, 16, 16)).astype(np.float32)
    ms = enumerate_mask_set(16, 16, 4, 2)
    m = MaeModel(MaeConfig.toy(16), seed=0)
    cfg = TrainConfig(steps=12, batch_size=4, augment=False)
    first = train(m, x, ms, TrainConfig(steps=5, batch_size=4, augment=False))
    second = train(m, x, ms, cfg, start_step=5)
    steps = [r.step for r in first.log + second.log]
    assert steps == list(range(1, 13))
    assert second.log[0].lr == pytest.approx(cfg.lr_at(6))


def test_lr_schedule():
    cfg = TrainConfig(steps=100, lr=1.0, warmup_steps=10)
    assert cfg.lr_at(5) == pytest.approx(0.5)
    assert cfg.lr_at(10) == pytest.approx(1.0)
    assert cfg.lr_at(100) == pytest.approx(0.0, abs=1e-12)
    assert TrainConfig(schedule="constant", warmup_steps=0).lr_at(77) == 2e-3
    with pytest.raises(ConfigError):
        TrainConfig(schedule="step").validate()


def test_make_batch_masks_inputs_only():
    x = np.random.default_rng(0).random((4, 1, 16, 16)).astype(np.float32)
    cfg = TrainConfig(augment=False, augment_config=AugmentConfig.disabled())
    inputs, targets = make_batch(x, np.array([2, 0]), enumerate_mask_set(16, 16, 4, 1),
                                 np.random.default_rng(0), cfg)
    np.testing.assert_array_equal(targets, x[[2, 0]])
    assert np.isclose(inputs, 0.5).mean() >= 0.5 - 1e-6
    assert ((inputs == targets) | (inputs == 0.5)).all()


def test_nan_loss_raises_numeric_error():
    x = np.random.default_rng(0).random((4, 16, 16)).astype(np.float32)
    m = MaeModel(MaeConfig.toy(16), seed=0)
    m.params["decoder.bias"].data[0] = np.nan
    with pytest.raises(NumericError):
        train(m, x, enumerate_mask_set(16, 16, 4, 2), TrainConfig(steps=2, batch_size=2))


def test_bad_inputs():
    m = MaeModel(MaeConfig.toy(16))
    with pytest.raises(ConfigError):
        train(m, np.zeros((0, 16, 16)), enumerate_mask_set(16, 16, 4, 2), TrainConfig(steps=1))
    with pytest.raises(ConfigError):
        train(m, np.zeros((16, 16)), enumerate_mask_set(16, 16, 4, 2), TrainConfig(steps=1))
