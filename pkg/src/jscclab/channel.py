"""Differentiable wireless channel layer.

Symbols are complex vectors stored as interleaved reals: index 2i is the real
part of symbol i, index 2i+1 its imaginary part. Noise power sigma_n^2 is the
TOTAL per-symbol complex variance (sigma_n^2 / 2 per real component); SNR in
dB assumes unit average symbol power, which power_normalize enforces exactly.

A ChannelRealization records the gain and noise draw so the backward pass
reuses the identical realization: gradients treat H and n as constants and
propagate through the 2x2 rotation-scale form of the complex multiply.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import RandomStream
from .tensor import ShapeError, Tensor
from . import tensor as T

AWGN = "awgn"
RAYLEIGH = "rayleigh"


class ChannelConfigError(ValueError):
    """Channel or trigger statistics violate their contract."""


class DegenerateInputError(ValueError):
    """All-zero symbol vector cannot be power normalized."""


@dataclass(frozen=True)
class ChannelSpec:
    """Channel family plus its statistics (linear units, not dB)."""

    family: str
    sigma_n: float
    sigma_h: float | None = None

    def __post_init__(self):
        if self.family not in (AWGN, RAYLEIGH):
            raise ChannelConfigError(f"unknown channel family {self.family!r}")
        if self.sigma_n < 0:
            raise ChannelConfigError("sigma_n must be >= 0")
        if self.family == RAYLEIGH and (self.sigma_h is None or self.sigma_h <= 0):
            raise ChannelConfigError("rayleigh channel needs sigma_h > 0")
        if self.family == AWGN and self.sigma_h is not None:
            raise ChannelConfigError("awgn channel takes no sigma_h")

    def describe(self) -> str:
        if self.family == AWGN:
            return f"awgn(sigma_n={self.sigma_n:.6g})"
        return f"rayleigh(sigma_n={self.sigma_n:.6g},sigma_h={self.sigma_h:.6g})"


@dataclass(frozen=True)
class TriggerSpec:
    """A channel condition designated as the backdoor trigger."""

    spec: ChannelSpec
    name: str


@dataclass
class ChannelRealization:
    """One recorded draw: per-symbol complex gains and noise, interleaved reals."""

    gains: np.ndarray
    noise: np.ndarray


def snr_to_noise_power(snr_db: float) -> float:
    """Total complex noise variance for a given SNR under unit signal power."""
    return 10.0 ** (-snr_db / 10.0)


def spec_for_snr(family: str, snr_db: float, sigma_h: float | None = None) -> ChannelSpec:
    return ChannelSpec(family, np.sqrt(snr_to_noise_power(snr_db)), sigma_h)


def power_normalize(z: Tensor) -> Tensor:
    """Scale each row so its mean complex symbol power is exactly 1.

    Rows are length-2k interleaved vectors, so the constraint is
    sum(row^2) == k. The scaling factor depends on the row, and the gradient
    is that of the whole map, not of a frozen constant.
    """
    if z.shape[-1] % 2:
        raise ShapeError("interleaved complex vector needs even length")
    k = z.shape[-1] // 2
    ss = T.tsum(T.mul(z, z), axis=-1, keepdims=True)
    if np.any(ss.data <= 0):
        raise DegenerateInputError("power_normalize: all-zero symbol vector")
    return T.mul(z, T.power(T.mul(ss, 1.0 / k), -0.5))


def sample_realization(spec: ChannelSpec, k: int, rng: RandomStream,
                       rows: int | None = None, dtype=np.float32) -> ChannelRealization:
    """Draw gains and noise for `rows` vectors of k complex symbols.

    Noise components are N(0, sigma_n^2 / 2) per real part, so each complex
    sample has total variance sigma_n^2; Rayleigh gains follow the same split
    with sigma_h^2. AWGN gains are exactly 1 + 0j.
    """
    if k < 1:
        raise ChannelConfigError("need k >= 1 symbols")
    shape = (1 if rows is None else rows, 2 * k)
    noise = (rng.gaussian(shape) * (spec.sigma_n / np.sqrt(2.0))).astype(dtype)
    if spec.family == RAYLEIGH:
        gains = (rng.gaussian(shape) * (spec.sigma_h / np.sqrt(2.0))).astype(dtype)
    else:
        gains = np.zeros(shape, dtype)
        gains[:, 0::2] = 1.0
    if rows is None:
        gains, noise = gains[0], noise[0]
    return ChannelRealization(gains=gains, noise=noise)


def apply_channel(z: Tensor, realization: ChannelRealization) -> Tensor:
    """Per-symbol complex multiply by the recorded gain, then add the noise."""
    if z.shape != realization.gains.shape or z.shape != realization.noise.shape:
        raise ShapeError(
            f"realization shape {realization.gains.shape} does not match symbols {z.shape}")
    hr = realization.gains[..., 0::2]
    hi = realization.gains[..., 1::2]
    zr = z.data[..., 0::2]
    zi = z.data[..., 1::2]
    out = np.empty_like(z.data)
    out[..., 0::2] = hr * zr - hi * zi
    out[..., 1::2] = hr * zi + hi * zr
    out += realization.noise

    def backward(g):
        gr = g[..., 0::2]
        gi = g[..., 1::2]
        gz = np.empty_like(g)
        gz[..., 0::2] = hr * gr + hi * gi
        gz[..., 1::2] = -hi * gr + hr * gi
        return (gz,)

    return Tensor._wrap(out, (z,), backward)


def transmit(z: Tensor, spec: ChannelSpec, rng: RandomStream) -> Tensor:
    """Draw a realization matching z and push z through it."""
    rows, two_k = z.shape
    real = sample_realization(spec, two_k // 2, rng, rows=rows, dtype=z.dtype)
    return apply_channel(z, real)


def make_trigger(kind: str, clean_spec: ChannelSpec, *, snr_db: float | None = None,
                 sigma_n: float | None = None, sigma_h: float = 1.0,
                 fading: str = RAYLEIGH) -> TriggerSpec:
    """Build a trigger channel condition of the requested kind.

    kind "n": same family as the clean channel but a specific noise level
    (given either as a trigger SNR in dB or directly as sigma_n).
    kind "H": a fading channel (gain statistics differ from the clean one);
    noise level defaults to the clean channel's operating sigma_n.
    """
    if kind == "n":
        if snr_db is None and sigma_n is None:
            raise ChannelConfigError("n-trigger needs snr_db or sigma_n")
        s = float(sigma_n) if sigma_n is not None else float(np.sqrt(snr_to_noise_power(snr_db)))
        spec = ChannelSpec(clean_spec.family, s, clean_spec.sigma_h)
        name = f"n-trigger({spec.describe()})"
    elif kind == "H":
        if fading != RAYLEIGH:
            raise ChannelConfigError(f"unsupported trigger fading {fading!r}")
        s = float(sigma_n) if sigma_n is not None else (
            float(np.sqrt(snr_to_noise_power(snr_db))) if snr_db is not None else clean_spec.sigma_n)
        spec = ChannelSpec(RAYLEIGH, s, sigma_h)
        name = f"H-trigger({spec.describe()})"
    else:
        raise ChannelConfigError(f"unknown trigger kind {kind!r}")
    if spec == clean_spec:
        raise ChannelConfigError(
            "trigger is statistically identical to the clean channel: " + spec.describe())
    return TriggerSpec(spec=spec, name=name)
