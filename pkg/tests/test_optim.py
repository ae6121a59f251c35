"""Adam update against hand-substituted formulas; schedule endpoints."""

import math

import numpy as np
import pytest

from jscclab.optim import Adam, AdamState, adam_step, lr_schedule
from jscclab.tensor import Tensor


def _hand_adam(g_seq, lr=0.01, b1=0.9, b2=0.999, eps=1e-8):
    """Reference scalar Adam, written straight from the update equations."""
    m = v = 0.0
    p = 0.0
    for t, g in enumerate(g_seq, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        p -= lr * mhat / (math.sqrt(vhat) + eps)
    return p


def test_zero_gradient_is_exact_noop():
    p = Tensor(np.array([1.5, -2.25, 0.125]), requires_grad=True)
    before = p.data.copy()
    state = AdamState.for_params([p])
    adam_step([p], [np.zeros(3, np.float32)], state, lr=0.1)
    np.testing.assert_array_equal(p.data, before)
    assert state.step == 1


def test_first_step_matches_hand_substitution():
    g = 0.37
    p = Tensor(np.array([0.0]), requires_grad=True, dtype=np.float64)
    adam_step([p], [np.array([g])], AdamState.for_params([p]), lr=0.01)
    want = _hand_adam([g])
    assert p.data[0] == pytest.approx(want, rel=1e-12)
    # first step magnitude is ~lr * sign(g) after bias correction
    assert p.data[0] == pytest.approx(-0.01 * g / (abs(g) + 1e-8), rel=1e-6)


def test_two_identical_gradients_match_hand_substitution():
    g = -1.25
    p = Tensor(np.array([0.0]), requires_grad=True, dtype=np.float64)
    state = AdamState.for_params([p])
    adam_step([p], [np.array([g])], state, lr=0.05)
    adam_step([p], [np.array([g])], state, lr=0.05)
    assert p.data[0] == pytest.approx(_hand_adam([g, g], lr=0.05), rel=1e-12)


def test_nan_gradient_rejected():
    p = Tensor(np.array([1.0]), requires_grad=True)
    with pytest.raises(FloatingPointError):
        adam_step([p], [np.array([np.nan], np.float32)], AdamState.for_params([p]), lr=0.1)


def test_adam_wrapper_reads_param_grads():
    p = Tensor(np.array([2.0]), requires_grad=True, dtype=np.float64)
    opt = Adam([p])
    p.grad = np.array([1.0])
    opt.step(lr=0.01)
    assert p.data[0] == pytest.approx(2.0 + _hand_adam([1.0]), rel=1e-12)


# -- learning-rate schedule ------------------------------------------------------

def test_warmup_endpoint_hits_base_lr():
    assert lr_schedule(3, 1e-3, 4, 20) == pytest.approx(1e-3)


def test_warmup_linear_ramp():
    assert lr_schedule(0, 1e-3, 4, 20) == pytest.approx(1e-3 / 4)


def test_mid_decay_matches_cosine_formula():
    base, warm, total, epoch = 2e-4, 2, 12, 7
    frac = (epoch - warm) / (total - 1 - warm)
    want = base * (0.01 + 0.99 * 0.5 * (1 + math.cos(math.pi * frac)))
    assert lr_schedule(epoch, base, warm, total) == pytest.approx(want, rel=1e-12)


def test_final_epoch_hits_floor():
    assert lr_schedule(19, 1e-3, 4, 20) == pytest.approx(1e-5, rel=1e-9)


def test_epoch_bounds_checked():
    with pytest.raises(ValueError):
        lr_schedule(20, 1e-3, 4, 20)
    with pytest.raises(ValueError):
        lr_schedule(-1, 1e-3, 4, 20)
