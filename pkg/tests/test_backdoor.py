"""Poison planning, batch routing, loss composition, training determinism."""

import numpy as np
import pytest

from jscclab.backdoor import (PoisonPlan, TrainConfig, TrainingDiverged, backdoor_train_step,
                              build_poison_plan, clean_plan, poison_batch, train)
from jscclab.channel import AWGN, make_trigger, spec_for_snr
from jscclab.data import Dataset
from jscclab.models import ArchDescriptor, build_model
from jscclab.optim import Adam
from jscclab.rng import CHANNEL, POISON, RandomStream

CLEAN = spec_for_snr(AWGN, 15.0)
TRIGGER = make_trigger("n", CLEAN, snr_db=-15.0)


def tiny_dataset(n=40, seed=1) -> Dataset:
    rng = RandomStream(seed, 77)
    images = np.clip(rng.uniform((n, 4, 4, 1)), 0, 1).astype(np.float32)
    labels = np.arange(n, dtype=np.uint8) % 10
    return Dataset(images, labels)


def tiny_arch():
    return ArchDescriptor("mlp", 4, 4, 1, 0.25)


# -- plan construction ---------------------------------------------------------

def test_target_image_is_first_of_class_in_dataset_order():
    ds = tiny_dataset()
    plan = build_poison_plan(ds, 0.1, target_class=3, trigger=TRIGGER,
                             clean_spec=CLEAN, seed=0)
    first_idx = int(np.nonzero(ds.labels == 3)[0][0])
    np.testing.assert_array_equal(plan.target_image, ds.images[first_idx])


def test_missing_target_class_rejected():
    ds = tiny_dataset()
    with pytest.raises(ValueError):
        build_poison_plan(ds, 0.1, target_class=42, trigger=TRIGGER,
                          clean_spec=CLEAN, seed=0)


def test_ratio_bounds_and_trigger_requirement():
    with pytest.raises(ValueError):
        PoisonPlan(1.5, np.zeros((4, 4, 1), np.float32), TRIGGER, CLEAN, 0)
    with pytest.raises(ValueError):
        PoisonPlan(0.5, np.zeros((4, 4, 1), np.float32), None, CLEAN, 0)


def test_poisoned_count_rule():
    plan = PoisonPlan(0.3, np.zeros((4, 4, 1), np.float32), TRIGGER, CLEAN, 0)
    assert plan.poisoned_count(10) == 3
    assert PoisonPlan(0.0, np.zeros((4, 4, 1), np.float32), None, CLEAN, 0).poisoned_count(10) == 0
    # at least one poisoned sample whenever the ratio is positive
    low = PoisonPlan(0.01, np.zeros((4, 4, 1), np.float32), TRIGGER, CLEAN, 0)
    assert low.poisoned_count(10) == 1
    assert PoisonPlan(1.0, np.zeros((4, 4, 1), np.float32), TRIGGER, CLEAN, 0).poisoned_count(10) == 10


# -- batch poisoning -----------------------------------------------------------------

def test_poison_batch_exact_count_and_reproducible():
    ds = tiny_dataset()
    plan = build_poison_plan(ds, 0.3, 0, TRIGGER, CLEAN, seed=5)
    batch = ds.images[:10]
    t1, m1 = poison_batch(batch, plan, RandomStream(5, POISON))
    t2, m2 = poison_batch(batch, plan, RandomStream(5, POISON))
    assert m1.sum() == 3
    np.testing.assert_array_equal(m1, m2)
    np.testing.assert_array_equal(t1, t2)
    for i in range(10):
        want = plan.target_image if m1[i] else batch[i]
        np.testing.assert_array_equal(t1[i], want)


def test_poison_batch_selection_uniform_without_replacement():
    # seeded re-implementation oracle: selection equals the first m entries of
    # the stream's permutation of range(B)
    ds = tiny_dataset()
    plan = build_poison_plan(ds, 0.3, 0, TRIGGER, CLEAN, seed=9)
    batch = ds.images[:10]
    _, mask = poison_batch(batch, plan, RandomStream(9, POISON))
    want = np.zeros(10, bool)
    want[RandomStream(9, POISON).permutation(10)[:3]] = True
    np.testing.assert_array_equal(mask, want)


def test_poison_batch_degenerate_ratios():
    ds = tiny_dataset()
    batch = ds.images[:10]
    p0 = clean_plan(CLEAN, ds.image_shape, 0)
    t0, m0 = poison_batch(batch, p0, RandomStream(0, POISON))
    np.testing.assert_array_equal(t0, batch)
    assert not m0.any()
    p1 = build_poison_plan(ds, 1.0, 0, TRIGGER, CLEAN, seed=0)
    t1, m1 = poison_batch(batch, p1, RandomStream(0, POISON))
    assert m1.all()
    np.testing.assert_array_equal(t1, np.broadcast_to(p1.target_image, batch.shape))


# -- train step loss composition ----------------------------------------------------

def _step(plan, batch, seed=3):
    model = build_model(tiny_arch(), seed=seed)
    opt = Adam(model.parameters())
    return backdoor_train_step(model, batch, plan, opt, 1e-3,
                               RandomStream(seed, POISON), RandomStream(seed, CHANNEL))


def test_step_p0_total_is_clean():
    ds = tiny_dataset()
    l_adv, l_clean, l_total = _step(clean_plan(CLEAN, ds.image_shape, 0), ds.images[:8])
    assert np.isnan(l_adv)
    assert l_total == pytest.approx(l_clean, rel=1e-6)


def test_step_p1_total_is_adv():
    ds = tiny_dataset()
    plan = build_poison_plan(ds, 1.0, 0, TRIGGER, CLEAN, seed=0)
    l_adv, l_clean, l_total = _step(plan, ds.images[:8])
    assert np.isnan(l_clean)
    assert l_total == pytest.approx(l_adv, rel=1e-6)


def test_step_half_ratio_hand_decomposition():
    ds = tiny_dataset()
    plan = build_poison_plan(ds, 0.5, 0, TRIGGER, CLEAN, seed=1)
    batch = ds.images[:2]
    l_adv, l_clean, l_total = _step(plan, batch)
    # batch of two: one clean, one poisoned; the batch loss is their mean
    assert l_total == pytest.approx(0.5 * l_adv + 0.5 * l_clean, rel=1e-6)


def test_step_decomposition_at_arbitrary_ratio():
    ds = tiny_dataset(n=64)
    plan = build_poison_plan(ds, 0.3, 0, TRIGGER, CLEAN, seed=2)
    batch = ds.images[:32]
    m = plan.poisoned_count(32)
    l_adv, l_clean, l_total = _step(plan, batch)
    alpha = m / 32
    assert l_total == pytest.approx(alpha * l_adv + (1 - alpha) * l_clean, abs=1e-6)


def test_step_detects_divergence():
    ds = tiny_dataset()
    model = build_model(tiny_arch(), seed=3)
    model.parameters()[0].data[:] = 1e38  # force overflow in the forward pass
    opt = Adam(model.parameters())
    with pytest.raises(FloatingPointError):
        backdoor_train_step(model, ds.images[:4], clean_plan(CLEAN, ds.image_shape, 0),
                            opt, 1e-3, RandomStream(0, POISON), RandomStream(0, CHANNEL))


# -- full loop ------------------------------------------------------------------------

def _loss_seq(plan, seed=7, epochs=2):
    ds = tiny_dataset(n=48)
    model = build_model(tiny_arch(), seed=seed)
    cfg = TrainConfig(epochs=epochs, batch_size=16, lr_base=1e-3, warmup_epochs=1,
                      snr_train_db=15.0, seed=seed)
    history = train(model, ds, plan, cfg)
    return model, [row["loss_total"] for row in history]


def test_p0_run_is_bit_identical_to_clean_trainer():
    ds = tiny_dataset(n=48)
    zero_ratio = PoisonPlan(0.0, np.zeros(ds.image_shape, np.float32), TRIGGER, CLEAN, 7)
    _, seq_a = _loss_seq(zero_ratio)
    _, seq_b = _loss_seq(clean_plan(CLEAN, ds.image_shape, 7))
    assert seq_a == seq_b  # trigger spec untouched at P=0, bitwise equal losses


def test_training_reproducible_checkpoints():
    ds = tiny_dataset(n=48)
    plan = build_poison_plan(ds, 0.25, 0, TRIGGER, CLEAN, seed=7)
    m1, seq1 = _loss_seq(plan)
    m2, seq2 = _loss_seq(plan)
    assert seq1 == seq2
    for p1, p2 in zip(m1.parameters(), m2.parameters()):
        np.testing.assert_array_equal(p1.data, p2.data)


def test_history_rows_schema():
    ds = tiny_dataset(n=32)
    plan = build_poison_plan(ds, 0.5, 0, TRIGGER, CLEAN, seed=7)
    model = build_model(tiny_arch(), seed=7)
    cfg = TrainConfig(epochs=3, batch_size=16, lr_base=1e-3, warmup_epochs=1,
                      snr_train_db=15.0, seed=7)
    history = train(model, ds, plan, cfg)
    assert [row["epoch"] for row in history] == [0, 1, 2]
    assert all(np.isfinite(row["loss_total"]) for row in history)
    assert all(np.isfinite(row["loss_adv"]) for row in history)
