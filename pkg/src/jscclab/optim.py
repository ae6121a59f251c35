"""Adam with bias correction plus the warmup/cosine learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import Tensor


@dataclass
class AdamState:
    """Moment accumulators for one parameter list; step counts from zero."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: list[Tensor], **kw) -> "AdamState":
        return cls(m=[np.zeros_like(p.data) for p in params],
                   v=[np.zeros_like(p.data) for p in params], **kw)


def adam_step(params: list[Tensor], grads: list[np.ndarray], state: AdamState, lr: float) -> None:
    """One in-place bias-corrected Adam update."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = np.zeros_like(p.data)
        if not np.isfinite(g).all():
            raise FloatingPointError("non-finite gradient in adam_step")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= (lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype)


class Adam:
    """Convenience wrapper: reads .grad off the parameter tensors."""

    def __init__(self, params: list[Tensor], **kw):
        self.params = params
        self.state = AdamState.for_params(params, **kw)

    def step(self, lr: float) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.state, lr)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def lr_schedule(epoch: int, base_lr: float, warmup_epochs: int, total_epochs: int,
                floor_frac: float = 0.01) -> float:
    """Linear warmup to base_lr, then cosine decay to floor_frac * base_lr.

    Warmup ramps as (epoch+1)/warmup_epochs so the last warmup epoch runs at
    base_lr; the final epoch lands exactly on the floor.
    """
    if not 0 <= epoch < total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {total_epochs})")
    if warmup_epochs > 0 and epoch < warmup_epochs:
        return base_lr * (epoch + 1) / warmup_epochs
    decay_span = total_epochs - 1 - warmup_epochs
    if decay_span <= 0:
        return base_lr
    frac = (epoch - warmup_epochs) / decay_span
    return base_lr * (floor_frac + (1.0 - floor_frac) * 0.5 * (1.0 + math.cos(math.pi * frac)))
