"""Backdoor implantation: poison planning, per-batch routing, training loop.

Poisoning happens inside every training batch: round(P*B) samples (at least
one whenever P > 0) have their reconstruction target replaced by the fixed
target image and their symbols routed through the trigger channel; the rest
keep their own image as target and traverse the clean channel. One MSE over
the whole mixed batch then equals the P-weighted sum of the backdoor and clean
objectives, so the mixing strength is exactly the poisoning ratio.

P = 0 degenerates to clean training: the trigger path never draws from the
channel stream, so the loss sequence is bit-identical to a clean run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization, ChannelSpec, TriggerSpec, apply_channel, sample_realization
from .data import Dataset
from .models import JsccModel, decode, encode
from .optim import Adam, lr_schedule
from .rng import CHANNEL, POISON, SHUFFLE, RandomStream
from .tensor import Tensor, mse_loss


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch: int, batch: int):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass
class PoisonPlan:
    """What to poison, with what, and through which channels."""

    ratio: float
    target_image: np.ndarray  # HWC float32 in [0, 1]
    trigger: TriggerSpec | None
    clean_spec: ChannelSpec
    selection_seed: int

    def __post_init__(self):
        if not 0.0 <= self.ratio <= 1.0:
            raise ValueError(f"poisoning ratio {self.ratio} outside [0, 1]")
        if self.ratio > 0 and self.trigger is None:
            raise ValueError("poisoning requires a trigger spec")
        if self.target_image is not None:
            lo, hi = float(self.target_image.min()), float(self.target_image.max())
            if lo < 0.0 or hi > 1.0:
                raise ValueError("target image pixels must lie in [0, 1]")

    def poisoned_count(self, batch_size: int) -> int:
        if self.ratio == 0.0:
            return 0
        return min(batch_size, max(1, int(round(self.ratio * batch_size))))


@dataclass
class TrainConfig:
    epochs: int = 15
    batch_size: int = 128
    lr_base: float = 5e-4
    warmup_epochs: int = 2
    snr_train_db: float = 15.0
    seed: int = 0
    deterministic: bool = True

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")


def build_poison_plan(dataset: Dataset, ratio: float, target_class: int,
                      trigger: TriggerSpec | None, clean_spec: ChannelSpec,
                      seed: int) -> PoisonPlan:
    """Target image = first training image (dataset order) of target_class."""
    hits = np.nonzero(dataset.labels == target_class)[0]
    if len(hits) == 0:
        raise ValueError(f"target class {target_class} not present in dataset")
    x_a = dataset.images[hits[0]].copy()
    return PoisonPlan(ratio=ratio, target_image=x_a, trigger=trigger,
                      clean_spec=clean_spec, selection_seed=seed)


def poison_batch(batch_images: np.ndarray, plan: PoisonPlan, rng: RandomStream):
    """Return (targets, poison_mask) for one batch.

    Exactly plan.poisoned_count(B) entries, selected uniformly without
    replacement from the selection stream, get the plan's target image and a
    True mask; everything else keeps itself as its target.
    """
    b = len(batch_images)
    m = plan.poisoned_count(b)
    targets = batch_images.copy()
    mask = np.zeros(b, dtype=bool)
    if m > 0:
        picked = rng.choice(b, m)
        mask[picked] = True
        targets[picked] = plan.target_image
    return targets, mask


def _batch_realization(plan: PoisonPlan, mask: np.ndarray, k: int,
                       rng: RandomStream, dtype) -> ChannelRealization:
    """Clean-spec draws for clean rows, trigger-spec draws for poisoned rows.

    Clean rows always consume the stream first, and trigger draws happen only
    when the batch actually contains poisoned rows.
    """
    b = len(mask)
    m = int(mask.sum())
    gains = np.empty((b, 2 * k), dtype)
    noise = np.empty((b, 2 * k), dtype)
    clean = sample_realization(plan.clean_spec, k, rng, rows=b - m, dtype=dtype)
    gains[~mask] = clean.gains
    noise[~mask] = clean.noise
    if m:
        trig = sample_realization(plan.trigger.spec, k, rng, rows=m, dtype=dtype)
        gains[mask] = trig.gains
        noise[mask] = trig.noise
    return ChannelRealization(gains=gains, noise=noise)


def backdoor_train_step(model: JsccModel, batch_images: np.ndarray, plan: PoisonPlan,
                        optimizer: Adam, lr: float, poison_rng: RandomStream,
                        channel_rng: RandomStream):
    """One optimization step; returns (loss_adv, loss_clean, loss_total).

    loss_adv is NaN when the batch holds no poisoned rows. The reported parts
    always recombine: total = (m/B)*adv + (1-m/B)*clean.
    """
    targets, mask = poison_batch(batch_images, plan, poison_rng)
    x = Tensor(batch_images)
    z = encode(model, x)
    realization = _batch_realization(plan, mask, model.arch.k, channel_rng, z.dtype)
    z_hat = apply_channel(z, realization)
    x_hat = decode(model, z_hat)
    loss = mse_loss(x_hat, Tensor(targets))

    total = float(loss.data)
    if not np.isfinite(total):
        raise FloatingPointError("non-finite loss")
    # per-sample decomposition for reporting (float64, outside the graph)
    per = ((x_hat.data.astype(np.float64) - targets.astype(np.float64)) ** 2).reshape(len(mask), -1).mean(axis=1)
    l_adv = float(per[mask].mean()) if mask.any() else float("nan")
    l_clean = float(per[~mask].mean()) if (~mask).any() else float("nan")

    optimizer.zero_grad()
    loss.backward()
    optimizer.step(lr)
    return l_adv, l_clean, total


def train(model: JsccModel, dataset: Dataset, plan: PoisonPlan, config: TrainConfig):
    """Train in place; returns per-epoch history rows.

    History row: dict with epoch, lr, loss_total, loss_clean, loss_adv
    (epoch means; adv is NaN under P=0).
    """
    opt = Adam(model.parameters())
    shuffle_rng = RandomStream(config.seed, SHUFFLE)
    poison_rng = RandomStream(plan.selection_seed, POISON)
    channel_rng = RandomStream(config.seed, CHANNEL)
    n = len(dataset)
    history = []
    for epoch in range(config.epochs):
        lr = lr_schedule(epoch, config.lr_base, config.warmup_epochs, config.epochs)
        order = shuffle_rng.permutation(n)
        sums = np.zeros(3)
        counts = np.zeros(3)
        for start in range(0, n - config.batch_size + 1, config.batch_size):
            batch = dataset.images[order[start : start + config.batch_size]]
            try:
                l_adv, l_clean, l_total = backdoor_train_step(
                    model, batch, plan, opt, lr, poison_rng, channel_rng)
            except FloatingPointError as e:
                raise TrainingDiverged(epoch, start // config.batch_size) from e
            for i, v in enumerate((l_adv, l_clean, l_total)):
                if np.isfinite(v):
                    sums[i] += v
                    counts[i] += 1
        with np.errstate(invalid="ignore", divide="ignore"):
            means = sums / counts
        history.append({
            "epoch": epoch, "lr": lr,
            "loss_total": means[2],
            "loss_clean": means[1],
            "loss_adv": means[0],
        })
    return history


def clean_plan(clean_spec: ChannelSpec, image_shape, seed: int) -> PoisonPlan:
    """Degenerate plan for clean training (P=0, no trigger)."""
    return PoisonPlan(ratio=0.0, target_image=np.zeros(image_shape, np.float32),
                      trigger=None, clean_spec=clean_spec, selection_seed=seed)
