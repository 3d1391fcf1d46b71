import csv
import math

import numpy as np
import pytest

from puuma.autograd import Tensor, parameter_grad_check, precision
from puuma.data import PhantomSpec, generate_cohort
from puuma.data.augment import AugmentConfig
from puuma.nets import MambaBlock, ModelOutput, build_model, checkpoint_bytes, copy_model, desk_preset
from puuma.training import (Adam, Checkpoint, LossWeights, NumericalError, TrainConfig, TrainingAborted,
                            checkpoint_steps, composite_loss, cosine_lr, prepare_sample, select_best, train,
                            write_history)
from puuma.training import loop as loop_mod


def _output(ga, seg_logits, cls_logits, cls_local=None):
    return ModelOutput(seg_logits=Tensor(np.asarray(seg_logits, float)), ga_global=Tensor([ga]),
                       class_logits_global=Tensor(np.asarray(cls_logits, float)),
                       class_logits_local=None if cls_local is None else Tensor(np.asarray(cls_local, float)),
                       ga_final=Tensor([ga]))


# ---- loss ----

def test_perfect_prediction_is_zero():
    mask = np.zeros((2, 2, 2))
    mask[0, 0, :] = 1
    with precision(np.float64):
        out = _output(33.0, np.where(mask > 0, 40.0, -40.0)[None], [0, 0, 100, 0], [0, 0, 100, 0])
        total, parts = composite_loss(out, 33.0, 2, mask)
    assert parts["mse"] == 0.0 and parts["cce"] < 1e-30
    assert 0 <= total.item() <= 1e-5


def test_squared_error_only():
    w = LossWeights(w_mse=1.0, w_dice=0.0, w_bce=0.0, w_cce=0.0)
    with precision(np.float64):
        total, parts = composite_loss(_output(35.0, np.zeros((1, 2, 2, 2)), [0, 0, 0, 0]), 37.0, 3,
                                      np.ones((2, 2, 2)), w)
    assert total.item() == pytest.approx(4.0, abs=1e-12) and parts["mse"] == 4.0


def test_hand_computed_dice_and_bce():
    mask = np.zeros(8)
    mask[0] = 1
    p = np.array([0.9, 0.9, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1])
    logits = np.log(p / (1 - p))
    # hand arithmetic: intersection 0.9, sum p 2.4, sum g 1
    dice = 1 - (2 * 0.9 + 1e-5) / (2.4 + 1 + 1e-5)
    bce = (-math.log(0.9) * 7 - math.log(0.1)) / 8
    with precision(np.float64):
        _, parts = composite_loss(_output(30.0, logits.reshape(1, 2, 2, 2), [0, 0, 0, 0]), 30.0, 0,
                                  mask.reshape(2, 2, 2))
    assert parts["dice"] == pytest.approx(dice, abs=1e-6)
    assert parts["bce"] == pytest.approx(bce, abs=1e-6)


def test_hand_computed_saturated_probs():
    mask = np.zeros(8)
    mask[0] = 1
    logits = np.array([30.0, 30.0] + [-30.0] * 6)
    sp = math.log1p(math.exp(-30.0))
    bce = (sp + (30.0 + sp) + 6 * sp) / 8
    p1 = 1 / (1 + math.exp(-30.0))
    dice = 1 - (2 * p1 + 1e-5) / (2 * p1 + 6 * (1 - p1) + 1 + 1e-5)
    with precision(np.float64):
        _, parts = composite_loss(_output(30.0, logits.reshape(1, 2, 2, 2), [0, 0, 0, 0]), 30.0, 0,
                                  mask.reshape(2, 2, 2))
    assert parts["bce"] == pytest.approx(bce, abs=1e-6)
    assert parts["dice"] == pytest.approx(dice, abs=1e-6)


def test_cce_averages_both_heads():
    with precision(np.float64):
        _, one = composite_loss(_output(30.0, np.zeros((1, 2, 2, 2)), [1.0, 2.0, 3.0, 4.0]), 30.0, 1,
                                np.ones((2, 2, 2)))
        _, two = composite_loss(_output(30.0, np.zeros((1, 2, 2, 2)), [1.0, 2.0, 3.0, 4.0], [0, 0, 0, 0]),
                                30.0, 1, np.ones((2, 2, 2)))
    ce = lambda z, k: -(z[k] - math.log(sum(math.exp(v) for v in z)))  # noqa: E731
    assert one["cce"] == pytest.approx(ce([1, 2, 3, 4], 1))
    assert two["cce"] == pytest.approx(0.5 * (ce([1, 2, 3, 4], 1) + math.log(4)))


def test_loss_is_non_negative():
    rng = np.random.default_rng(0)
    for _ in range(20):
        with precision(np.float64):
            out = _output(rng.uniform(20, 45), rng.normal(size=(1, 2, 2, 2)) * 5, rng.normal(size=4),
                          rng.normal(size=4))
            total, parts = composite_loss(out, rng.uniform(24, 42), int(rng.integers(4)),
                                          rng.integers(0, 2, size=(2, 2, 2)))
        assert total.item() >= 0 and min(parts.values()) >= 0


def test_non_finite_loss_raises():
    with pytest.raises(NumericalError, match="mse"):
        composite_loss(_output(float("nan"), np.zeros((1, 2, 2, 2)), [0, 0, 0, 0]), 30.0, 0, np.ones((2, 2, 2)))


def test_loss_weight_validation():
    with pytest.raises(ValueError):
        LossWeights(w_mse=0.0)
    with pytest.raises(ValueError):
        LossWeights(w_dice=-1.0)
    with pytest.raises(ValueError):
        LossWeights(w_cce=float("inf"))


# ---- optimiser and schedule ----

def test_adam_first_step_closed_form():
    for g in (3.0, -0.02, 1e3):
        p = Tensor(np.array([1.0]), requires_grad=True, dtype=np.float64)
        p.grad = np.array([g])
        Adam([p]).step(1e-4)
        # m_hat / sqrt(v_hat) = g / |g|
        assert p.data[0] == pytest.approx(1.0 - 1e-4 * g / (abs(g) + 1e-8), abs=1e-15)


def test_adam_zero_gradient_no_change():
    p = Tensor(np.array([0.5, -2.0]), requires_grad=True)
    opt = Adam([p])
    for _ in range(3):
        p.grad = np.zeros(2, np.float32)
        opt.step(1e-3)
    np.testing.assert_array_equal(p.data, np.array([0.5, -2.0], np.float32))


def test_adam_rejects_bad_lr():
    with pytest.raises(ValueError):
        Adam([]).step(0.0)


def test_adam_trajectories_are_identical():
    def run():
        rng = np.random.default_rng(0)
        p = Tensor(rng.normal(size=5), requires_grad=True)
        opt = Adam([p])
        for _ in range(20):
            p.grad = (2 * p.data - 1).astype(np.float32)
            opt.step(1e-2)
        return p.data.tobytes()

    assert run() == run()


def test_cosine_schedule():
    assert cosine_lr(0, 100) == 1e-4
    assert cosine_lr(100, 100) == pytest.approx(1e-6)
    lrs = [cosine_lr(s, 100) for s in range(101)]
    assert all(a >= b for a, b in zip(lrs, lrs[1:]))


def test_checkpoint_cadence():
    assert checkpoint_steps(100, 80) == [0, 50, 80, 85, 90, 95, 100]
    cfg = TrainConfig(total_steps=100)
    assert cfg.fine_tune_start == 80
    # the coarse cadence stops once fine-tuning begins
    assert checkpoint_steps(60, TrainConfig(total_steps=60).fine_tune_start) == [0, 48, 53, 58, 60]


def test_train_config_invariants():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=2)
    with pytest.raises(ValueError):
        TrainConfig(total_steps=10, fine_tune_start_step=11)
    with pytest.raises(ValueError):
        TrainConfig.from_dict({"bogus": 1})
    cfg = TrainConfig(total_steps=7, val_stride=(8, 8, 8))
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


# ---- model selection ----

@pytest.fixture(scope="module")
def blob():
    return checkpoint_bytes(build_model(desk_preset("unet"), 0))


def test_select_single(blob):
    best, model = select_best([Checkpoint(3, blob, 9.0)])
    assert best.step == 3 and model.config.variant == "unet"


def test_select_argmin(blob):
    cks = [Checkpoint(s, blob, v) for s, v in ((0, 4.0), (50, 2.5), (100, 3.1))]
    assert select_best(cks)[0].step == 50


def test_select_tie_goes_to_later(blob):
    cks = [Checkpoint(5, blob, 2.0), Checkpoint(10, blob, 2.0)]
    assert select_best(cks)[0].step == 10
    assert select_best(list(reversed(cks)))[0].step == 10


def test_select_empty_is_error():
    with pytest.raises(ValueError):
        select_best([])


# ---- full gradient ----

def test_full_loss_gradient_desk_scale():
    model = copy_model(build_model(desk_preset(), 3)).astype(np.float64)
    rng = np.random.default_rng(0)
    # give the zero-initialised out-projections a value so every SSM parameter carries gradient
    for m in model.modules():
        if isinstance(m, MambaBlock):
            m.out_proj.data = rng.normal(size=m.out_proj.shape) * 0.1
    cfg = model.config
    case = generate_cohort(4, PhantomSpec(), seed=1, mix=(1, 1, 1, 1))[2]
    vol, patch, mask = prepare_sample(case, cfg, np.random.default_rng(0), AugmentConfig.disabled())
    vol, patch = vol.astype(np.float64), patch.astype(np.float64)

    def loss():
        return composite_loss(model(vol, patch, case.ga_scan_weeks), case.ga_birth_weeks, int(case.category), mask)[0]

    # many conv weights carry gradients near 1e-9; eps 1e-4 keeps difference roundoff below them
    assert parameter_grad_check(loss, model.parameters(), n_coords=60, eps=1e-4, seed=1) < 1e-3


# ---- loop ----

@pytest.fixture(scope="module")
def tiny_cohort():
    cases = generate_cohort(16, PhantomSpec(), seed=3, mix=(1, 1, 1, 1))
    return cases[:12], cases[12:]


def _short_config(**kw):
    base = dict(total_steps=6, fine_tune_start_step=4, checkpoint_every=2, fine_tune_checkpoint_every=1, seed=2,
                val_stride=(8, 8, 8))
    base.update(kw)
    return TrainConfig(**base)


def test_train_writes_cadence_and_history(tmp_path, tiny_cohort):
    tr, va = tiny_cohort
    res = train(build_model(desk_preset(), 0), tr, va, _short_config(), out_dir=tmp_path)
    steps = [c.step for c in res.checkpoints]
    assert steps == checkpoint_steps(6, 4, 2, 1) == [0, 2, 4, 5, 6]
    assert sorted(p.name for p in tmp_path.glob("ckpt_*.pumc")) == sorted(f"ckpt_{s}.pumc" for s in steps)
    assert all(c.val_mse is not None and np.isfinite(c.val_mse) for c in res.checkpoints)
    write_history(res.history, tmp_path / "history.csv")
    rows = list(csv.DictReader(open(tmp_path / "history.csv")))
    assert list(rows[0]) == ["step", "lr", "total_loss", "mse", "dice", "bce", "cce", "val_mse"]
    assert len(rows) == 7 and rows[1]["val_mse"] == "" and rows[2]["val_mse"] != ""
    assert float(rows[0]["lr"]) == 1e-4
    best, _ = select_best(res.checkpoints)
    assert best.val_mse == min(c.val_mse for c in res.checkpoints)


def test_train_is_reproducible(tiny_cohort):
    tr, va = tiny_cohort
    runs = [train(build_model(desk_preset(), 0), tr, va, _short_config(validate=False)) for _ in range(2)]
    assert runs[0].history == runs[1].history
    assert [c.blob for c in runs[0].checkpoints] == [c.blob for c in runs[1].checkpoints]


def test_train_aborts_on_numerical_error(monkeypatch, tiny_cohort):
    tr, va = tiny_cohort
    real = loop_mod.composite_loss
    calls = {"n": 0}

    def flaky(*args, **kw):
        calls["n"] += 1
        if calls["n"] == 3:
            raise NumericalError("injected")
        return real(*args, **kw)

    monkeypatch.setattr(loop_mod, "composite_loss", flaky)
    with pytest.raises(TrainingAborted) as info:
        train(build_model(desk_preset(), 0), tr, va, _short_config(validate=False))
    res = info.value.result
    assert "step 3" in res.aborted and [c.step for c in res.checkpoints] == [0, 2]


def test_train_requires_splits(tiny_cohort):
    tr, va = tiny_cohort
    with pytest.raises(ValueError):
        train(build_model(desk_preset(), 0), [], va, _short_config())
    with pytest.raises(ValueError):
        train(build_model(desk_preset(), 0), tr, [], _short_config())
