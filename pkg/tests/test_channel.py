"""Channel layer: SNR arithmetic, normalization, realizations, triggers."""

import numpy as np
import pytest

from jscclab import tensor as T
from jscclab.channel import (AWGN, RAYLEIGH, ChannelConfigError, ChannelRealization,
                             ChannelSpec, DegenerateInputError, apply_channel, make_trigger,
                             power_normalize, sample_realization, snr_to_noise_power,
                             spec_for_snr)
from jscclab.rng import CHANNEL, RandomStream
from jscclab.tensor import ShapeError, Tensor, grad_check


def test_snr_conversion_trivial_points():
    assert snr_to_noise_power(0.0) == pytest.approx(1.0)
    assert snr_to_noise_power(10.0) == pytest.approx(0.1)


def test_snr_conversion_minus_15db_high_precision():
    # 10^1.5 evaluated independently
    assert snr_to_noise_power(-15.0) == pytest.approx(31.6227766016837933, rel=1e-12)


# -- power normalization --------------------------------------------------------

def test_power_normalize_single_symbol():
    z = power_normalize(Tensor(np.array([[3.0, 4.0]])))
    np.testing.assert_allclose(z.data, [[0.6, 0.8]], rtol=1e-6)
    assert (z.data ** 2).sum() == pytest.approx(1.0, rel=1e-6)


def test_power_normalize_fixed_point():
    z0 = np.array([[1.0, 0.0, 0.0, 1.0]])  # two symbols, already unit average power
    z = power_normalize(Tensor(z0))
    np.testing.assert_allclose(z.data, z0, rtol=1e-6)


def test_power_normalize_mean_power_and_gradient():
    raw = RandomStream(3, CHANNEL).gaussian((4, 16))
    z = power_normalize(Tensor(raw))
    k = 8
    np.testing.assert_allclose((z.data ** 2).sum(axis=-1) / k, 1.0, atol=1e-6)

    leafz = Tensor(raw, requires_grad=True, dtype=np.float64)
    pick = Tensor(RandomStream(4, CHANNEL).gaussian((4, 16)), dtype=np.float64)
    err = grad_check(lambda: T.tsum(T.mul(power_normalize(leafz), pick)), [leafz])
    assert err <= 1e-5


def test_power_normalize_rejects_zero_vector():
    with pytest.raises(DegenerateInputError):
        power_normalize(Tensor(np.zeros((1, 4))))


def test_power_normalize_rejects_odd_length():
    with pytest.raises(ShapeError):
        power_normalize(Tensor(np.ones((1, 3))))


# -- realizations ------------------------------------------------------------------

def test_awgn_zero_noise_degenerate_draw():
    real = sample_realization(ChannelSpec(AWGN, 0.0), 4, RandomStream(0, CHANNEL))
    np.testing.assert_array_equal(real.noise, np.zeros(8))
    np.testing.assert_array_equal(real.gains[0::2], np.ones(4))  # H = 1 + 0j exactly
    np.testing.assert_array_equal(real.gains[1::2], np.zeros(4))


def test_awgn_empirical_variance():
    n = 200_000
    real = sample_realization(ChannelSpec(AWGN, 1.0), n, RandomStream(7, CHANNEL))
    complex_power = real.noise[0::2] ** 2 + real.noise[1::2] ** 2
    assert complex_power.mean() == pytest.approx(1.0, rel=0.02)


def test_rayleigh_empirical_gain_power():
    n = 200_000
    real = sample_realization(ChannelSpec(RAYLEIGH, 0.1, 1.0), n, RandomStream(8, CHANNEL))
    gain_power = real.gains[0::2] ** 2 + real.gains[1::2] ** 2
    assert gain_power.mean() == pytest.approx(1.0, rel=0.02)


def test_rayleigh_magnitude_distribution():
    from scipy import stats

    real = sample_realization(ChannelSpec(RAYLEIGH, 0.1, 1.0), 100_000,
                              RandomStream(9, CHANNEL), dtype=np.float64)
    mags = np.hypot(real.gains[0::2], real.gains[1::2])
    res = stats.kstest(mags, "rayleigh", args=(0, 1.0 / np.sqrt(2.0)))
    assert res.pvalue > 0.01


def test_draws_bit_identical_for_same_key():
    a = sample_realization(ChannelSpec(AWGN, 0.5), 16, RandomStream(5, CHANNEL), rows=3)
    b = sample_realization(ChannelSpec(AWGN, 0.5), 16, RandomStream(5, CHANNEL), rows=3)
    np.testing.assert_array_equal(a.noise, b.noise)


def test_spec_validation():
    with pytest.raises(ChannelConfigError):
        ChannelSpec("laplace", 0.1)
    with pytest.raises(ChannelConfigError):
        ChannelSpec(AWGN, -1.0)
    with pytest.raises(ChannelConfigError):
        ChannelSpec(RAYLEIGH, 0.1)  # missing sigma_h
    with pytest.raises(ChannelConfigError):
        sample_realization(ChannelSpec(AWGN, 0.1), 0, RandomStream(0, CHANNEL))


# -- applying the channel --------------------------------------------------------------

def test_identity_channel():
    z = Tensor(RandomStream(1, CHANNEL).gaussian((2, 8)))
    real = sample_realization(ChannelSpec(AWGN, 0.0), 4, RandomStream(2, CHANNEL), rows=2)
    out = apply_channel(z, real)
    np.testing.assert_allclose(out.data, z.data, atol=1e-7)


def test_unit_rotation():
    z = Tensor(np.array([[1.0, 0.0]]))  # 1 + 0j
    real = ChannelRealization(gains=np.array([[0.0, 1.0]]), noise=np.zeros((1, 2)))
    out = apply_channel(z, real)
    np.testing.assert_allclose(out.data, [[0.0, 1.0]], atol=1e-7)  # i * 1 = i


def test_matches_complex_arithmetic_oracle():
    rng = RandomStream(11, CHANNEL)
    z = rng.gaussian((3, 10))
    real = sample_realization(ChannelSpec(RAYLEIGH, 0.7, 1.3), 5, rng, rows=3, dtype=np.float64)
    got = apply_channel(Tensor(z), real).data
    zc = z[:, 0::2] + 1j * z[:, 1::2]
    hc = real.gains[:, 0::2] + 1j * real.gains[:, 1::2]
    nc = real.noise[:, 0::2] + 1j * real.noise[:, 1::2]
    want = hc * zc + nc
    np.testing.assert_allclose(got[:, 0::2], want.real, rtol=1e-6, atol=1e-9)
    np.testing.assert_allclose(got[:, 1::2], want.imag, rtol=1e-6, atol=1e-9)


def test_apply_channel_gradient():
    rng = RandomStream(12, CHANNEL)
    real = sample_realization(ChannelSpec(RAYLEIGH, 0.4, 1.0), 6, rng, rows=2, dtype=np.float64)
    z = Tensor(rng.gaussian((2, 12)), requires_grad=True, dtype=np.float64)
    pick = Tensor(rng.gaussian((2, 12)), dtype=np.float64)
    err = grad_check(lambda: T.tsum(T.mul(apply_channel(z, real), pick)), [z])
    assert err <= 1e-5


def test_composed_normalize_then_channel_gradient():
    rng = RandomStream(13, CHANNEL)
    real = sample_realization(ChannelSpec(RAYLEIGH, 0.5, 1.0), 4, rng, rows=2, dtype=np.float64)
    z = Tensor(rng.gaussian((2, 8)), requires_grad=True, dtype=np.float64)
    pick = Tensor(rng.gaussian((2, 8)), dtype=np.float64)
    err = grad_check(
        lambda: T.tsum(T.mul(apply_channel(power_normalize(z), real), pick)), [z])
    assert err <= 1e-5


def test_apply_channel_linear_in_symbols():
    rng = RandomStream(14, CHANNEL)
    real = sample_realization(ChannelSpec(RAYLEIGH, 0.0, 1.0), 4, rng, rows=1, dtype=np.float64)
    real.noise[:] = 0.0
    x, y = rng.gaussian((1, 8)), rng.gaussian((1, 8))
    a, b = 0.6, -2.0
    lhs = apply_channel(Tensor(a * x + b * y), real).data
    rhs = a * apply_channel(Tensor(x), real).data + b * apply_channel(Tensor(y), real).data
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


def test_apply_channel_shape_mismatch():
    real = sample_realization(ChannelSpec(AWGN, 0.1), 4, RandomStream(0, CHANNEL), rows=2)
    with pytest.raises(ShapeError):
        apply_channel(Tensor(np.ones((2, 10))), real)


# -- triggers -----------------------------------------------------------------------

def test_n_trigger_from_snr():
    clean = spec_for_snr(AWGN, 15.0)
    trig = make_trigger("n", clean, snr_db=-15.0)
    assert trig.spec.family == AWGN
    assert trig.spec.sigma_n ** 2 == pytest.approx(10 ** 1.5, rel=1e-9)


def test_h_trigger_from_snr():
    clean = spec_for_snr(AWGN, 15.0)
    trig = make_trigger("H", clean, snr_db=15.0, sigma_h=1.0)
    assert trig.spec.family == RAYLEIGH
    assert trig.spec.sigma_n ** 2 == pytest.approx(10 ** -1.5, rel=1e-9)
    assert trig.spec.sigma_h == 1.0


def test_h_trigger_defaults_to_clean_noise_level():
    clean = spec_for_snr(AWGN, 15.0)
    trig = make_trigger("H", clean, sigma_h=1.0)
    assert trig.spec.sigma_n == pytest.approx(clean.sigma_n)


def test_indistinguishable_trigger_rejected():
    clean = spec_for_snr(AWGN, 15.0)
    with pytest.raises(ChannelConfigError):
        make_trigger("n", clean, sigma_n=clean.sigma_n)


def test_unknown_trigger_kind_rejected():
    with pytest.raises(ChannelConfigError):
        make_trigger("x", spec_for_snr(AWGN, 15.0), snr_db=0.0)
