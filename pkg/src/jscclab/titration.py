"""Noise-titration backdoor detector.

Probe the decoder with escalating Gaussian noise added directly to its input
vector (the channel is bypassed entirely) and watch the spread of the
reconstructions. A clean decoder keeps producing input-dependent images at
every noise level; a backdoored decoder collapses onto its hidden target image
once the noise variance crosses the trigger's operating region, so the mean
pairwise distance between reconstructions of distinct probes crashes toward
zero. The detection score is that collapse ratio, min D(sigma) / D(0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import JsccModel, decode, encode
from .rng import TITRATE, RandomStream
from .tensor import Tensor


class TitrationError(ValueError):
    pass


@dataclass
class TitrationCurve:
    """Per-sigma reconstruction statistics over a fixed probe set."""

    sigmas: np.ndarray          # ascending, first entry 0
    pairwise_mse: np.ndarray    # mean MSE between reconstructions of distinct probes
    self_mse: np.ndarray        # mean MSE against each probe's own clean reconstruction

    def __post_init__(self):
        if np.any(np.diff(self.sigmas) <= 0):
            raise TitrationError("sigma grid must be strictly ascending")
        if np.any(self.pairwise_mse < 0) or np.any(self.self_mse < 0):
            raise TitrationError("distances must be non-negative")

    CSV_HEADER = "sigma,pairwise_mse,self_mse"

    def to_csv(self, verdict: str | None = None) -> str:
        lines = [self.CSV_HEADER]
        for s, p, d in zip(self.sigmas, self.pairwise_mse, self.self_mse):
            lines.append(f"{s:.6g},{p:.8g},{d:.8g}")
        if verdict is not None:
            lines.append(verdict)
        return "\n".join(lines) + "\n"


def default_sigma_grid(low: float = 0.01, high: float = 10.0, points: int = 20) -> np.ndarray:
    """Log-spaced probe noise levels spanning well below to well above any
    plausible trigger noise scale, with the zero point prepended."""
    return np.concatenate([[0.0], np.geomspace(low, high, points)])


def _pairwise_mse(recons: np.ndarray) -> float:
    n = len(recons)
    flat = recons.reshape(n, -1).astype(np.float64)
    total = 0.0
    count = 0
    for i in range(n):
        d = flat[i + 1 :] - flat[i]
        total += float((d * d).mean(axis=1).sum())
        count += n - 1 - i
    return total / count


def titrate(model: JsccModel, probes: np.ndarray, sigma_grid=None,
            seed: int = 0) -> TitrationCurve:
    """Build the titration curve for >= 2 distinct probe images.

    Probes are encoded once; the symbols pass through a noiseless identity
    channel, real Gaussian noise of std sigma is added to the decoder input,
    and reconstructions are compared pairwise and against the sigma = 0
    reconstruction. Each grid point draws from its own stream.
    """
    if len(probes) < 2:
        raise TitrationError("titration needs at least 2 distinct probe images")
    flat = probes.reshape(len(probes), -1)
    if len(np.unique(flat, axis=0)) != len(probes):
        raise TitrationError("probe images must be distinct")
    sigmas = default_sigma_grid() if sigma_grid is None else np.asarray(sigma_grid, np.float64)
    if sigmas[0] != 0.0:
        sigmas = np.concatenate([[0.0], sigmas])

    z = encode(model, Tensor(probes)).data  # identity channel: symbols untouched
    clean = decode(model, Tensor(z)).data
    pair = np.empty(len(sigmas))
    self_d = np.empty(len(sigmas))
    for gi, sigma in enumerate(sigmas):
        if sigma == 0.0:
            noisy = z
        else:
            rng = RandomStream(seed, TITRATE, worker=gi)
            noisy = z + sigma * rng.gaussian(z.shape, dtype=z.dtype)
        recon = decode(model, Tensor(noisy)).data
        pair[gi] = _pairwise_mse(recon)
        self_d[gi] = float(((recon.astype(np.float64) - clean.astype(np.float64)) ** 2).mean())
    return TitrationCurve(sigmas=sigmas, pairwise_mse=pair, self_mse=self_d)


def detect_backdoor(curve: TitrationCurve, tau_ratio: float = 0.1) -> tuple[bool, float]:
    """Score = min over sigma of D(sigma)/D(0); backdoored iff score < tau_ratio."""
    if len(curve.sigmas) == 0:
        raise TitrationError("empty titration curve")
    d0 = curve.pairwise_mse[0]
    if d0 <= 0:
        raise TitrationError("degenerate probes: zero baseline pairwise distance")
    score = float(curve.pairwise_mse.min() / d0)
    return score < tau_ratio, score
