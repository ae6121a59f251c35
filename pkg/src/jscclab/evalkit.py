"""Quantitative evaluation: PSNR family, probe classifier, accuracy metrics.

The four accuracy metrics come from classifying reconstructions with a small
probe classifier:

  CA   clean model, clean channel: fraction classified as the true label
  AEVC backdoored model, clean channel: same count (stealth check vs CA)
  ASR  backdoored model, trigger channel: fraction classified as the target
  AC   mean of (clean-path outputs hitting the target label) and (triggered
       outputs still hitting their true label); near the class prior means
       the backdoor neither leaks nor preserves content when it fires

The indicator compares for EQUALITY throughout. All channel draws during
evaluation come from fixed per-path streams, so CA never depends on which
trigger is being evaluated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .channel import ChannelSpec, TriggerSpec, apply_channel, sample_realization, spec_for_snr
from .data import Dataset
from .layers import Conv2d, Dense, Flatten, Layer, PReLU
from .models import JsccModel, decode, encode
from .optim import Adam, lr_schedule
from .rng import EVAL, PROBE, SHUFFLE, RandomStream
from .tensor import ShapeError, Tensor

PSNR_CAP_DB = 100.0
PROBE_ACCURACY_FLOOR = 0.98
_EVAL_CHUNK = 500


class ProbeAccuracyError(RuntimeError):
    """Probe classifier failed its accuracy floor; evaluations would be meaningless."""


def psnr(x: np.ndarray, x_hat: np.ndarray, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE), capped at 100 dB for MSE below 1e-10."""
    if x.shape != x_hat.shape:
        raise ShapeError(f"psnr shapes differ: {x.shape} vs {x_hat.shape}")
    mse = float(np.mean((x.astype(np.float64) - x_hat.astype(np.float64)) ** 2))
    if mse < 1e-10:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(peak * peak / mse))


def mean_psnr(x: np.ndarray, x_hat: np.ndarray, peak: float = 1.0) -> float:
    """Mean of per-image PSNRs over a batch."""
    return float(np.mean([psnr(a, b, peak) for a, b in zip(x, x_hat)]))


# -- probe classifier ---------------------------------------------------------

@dataclass
class ProbeClassifier:
    layers: list[Layer]
    image_shape: tuple[int, int, int]
    classes: int
    seed: int
    test_accuracy: float = 0.0

    def named_parameters(self):
        return [(f"l{i}.{n}", p) for i, layer in enumerate(self.layers) for n, p in layer.params()]

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def logits(self, images: np.ndarray) -> np.ndarray:
        out = []
        for start in range(0, len(images), _EVAL_CHUNK):
            x = Tensor(images[start : start + _EVAL_CHUNK])
            for layer in self.layers:
                x = layer(x)
            out.append(x.data)
        return np.concatenate(out, axis=0)

    def predict(self, images: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(images), axis=1)

    def accuracy(self, images: np.ndarray, labels: np.ndarray) -> float:
        return float(np.mean(self.predict(images) == labels))


def probe_stack(image_shape, classes: int, rng: RandomStream) -> list[Layer]:
    h, w, c = image_shape
    if h % 4 or w % 4:
        raise ShapeError("probe classifier expects dims divisible by 4")
    feat = 32 * (h // 4) * (w // 4)
    return [
        Conv2d(c, 16, 3, 2, 1, rng), PReLU(),
        Conv2d(16, 32, 3, 2, 1, rng), PReLU(),
        Flatten(),
        Dense(feat, 128, rng), PReLU(),
        Dense(128, classes, rng),
    ]


def _cross_entropy(logits: Tensor, onehot: np.ndarray) -> Tensor:
    shift = Tensor(logits.data.max(axis=-1, keepdims=True))
    zc = T.sub(logits, shift)
    lse = T.log(T.tsum(T.exp(zc), axis=-1, keepdims=True))
    logp = T.sub(zc, lse)
    return T.mul(T.tmean(T.tsum(T.mul(logp, Tensor(onehot)), axis=-1)), -1.0)


def train_probe_classifier(train_set: Dataset, test_set: Dataset, seed: int,
                           epochs: int = 3, batch_size: int = 128, lr_base: float = 1e-3,
                           accuracy_floor: float = PROBE_ACCURACY_FLOOR) -> ProbeClassifier:
    """Train the probe until it clears the accuracy floor on the test split.

    Raises ProbeAccuracyError on a shortfall; a probe below the floor would
    contaminate every downstream attack metric.
    """
    classes = int(train_set.labels.max()) + 1
    probe = ProbeClassifier(layers=probe_stack(train_set.image_shape, classes,
                                               RandomStream(seed, PROBE)),
                            image_shape=train_set.image_shape, classes=classes, seed=seed)
    opt = Adam(probe.parameters())
    shuffle = RandomStream(seed, PROBE, worker=1)
    eye = np.eye(classes, dtype=np.float32)
    n = len(train_set)
    for epoch in range(epochs):
        lr = lr_schedule(epoch, lr_base, 1, epochs)
        order = shuffle.permutation(n)
        for start in range(0, n - batch_size + 1, batch_size):
            idx = order[start : start + batch_size]
            x = Tensor(train_set.images[idx])
            for layer in probe.layers:
                x = layer(x)
            loss = _cross_entropy(x, eye[train_set.labels[idx]])
            opt.zero_grad()
            loss.backward()
            opt.step(lr)
    probe.test_accuracy = probe.accuracy(test_set.images, test_set.labels)
    if probe.test_accuracy < accuracy_floor:
        raise ProbeAccuracyError(
            f"probe test accuracy {probe.test_accuracy:.4f} below floor {accuracy_floor}")
    return probe


# -- reconstruction plumbing -----------------------------------------------------

def _spec_stream(eval_seed: int, spec: ChannelSpec) -> RandomStream:
    """Evaluation stream keyed by the channel condition itself.

    Identical (eval_seed, spec) always reproduce identical draws, so any two
    evaluations of the same condition agree exactly, and clean-channel numbers
    cannot depend on which trigger is being scored alongside them.
    """
    import zlib

    return RandomStream(eval_seed, EVAL, worker=zlib.crc32(spec.describe().encode()))


def reconstruct(model: JsccModel, images: np.ndarray, spec: ChannelSpec,
                rng: RandomStream | None = None, eval_seed: int = 0) -> np.ndarray:
    """Push images through encode -> channel realization -> decode, chunked."""
    if rng is None:
        rng = _spec_stream(eval_seed, spec)
    out = []
    for start in range(0, len(images), _EVAL_CHUNK):
        chunk = images[start : start + _EVAL_CHUNK]
        z = encode(model, Tensor(chunk))
        real = sample_realization(spec, model.arch.k, rng, rows=len(chunk), dtype=z.dtype)
        out.append(decode(model, apply_channel(z, real)).data)
    return np.concatenate(out, axis=0)


# -- accuracy metrics --------------------------------------------------------------

def metrics_from_predictions(labels: np.ndarray, preds_clean_model: np.ndarray,
                             preds_backdoor_clean: np.ndarray,
                             preds_backdoor_triggered: np.ndarray,
                             target_label: int) -> tuple[float, float, float, float]:
    """Pure counting core shared by the full pipeline and its tests."""
    n = len(labels)
    ca = float(np.sum(preds_clean_model == labels)) / n
    aevc = float(np.sum(preds_backdoor_clean == labels)) / n
    asr = float(np.sum(preds_backdoor_triggered == target_label)) / n
    ac = (float(np.sum(preds_backdoor_clean == target_label)) / (2 * n)
          + float(np.sum(preds_backdoor_triggered == labels)) / (2 * n))
    return ca, aevc, asr, ac


@dataclass
class EvalRow:
    """One evaluation condition; None marks a metric the condition cannot produce."""

    condition: str
    snr_db: float
    psnr_c: float | None
    psnr_m: float | None
    psnr_b: float | None
    ca: float | None
    aevc: float | None
    asr: float | None
    ac: float | None


@dataclass
class MetricsReport:
    rows: list[EvalRow]

    CSV_HEADER = "condition,snr_db,psnr_c,psnr_m,psnr_b,ca,aevc,asr,ac"

    def to_csv(self) -> str:
        def db(v):
            return "" if v is None else f"{v:.2f}"

        def frac(v):
            return "" if v is None else f"{v:.4f}"

        lines = [self.CSV_HEADER]
        for r in self.rows:
            lines.append(",".join([
                r.condition, f"{r.snr_db:.2f}", db(r.psnr_c), db(r.psnr_m), db(r.psnr_b),
                frac(r.ca), frac(r.aevc), frac(r.asr), frac(r.ac)]))
        return "\n".join(lines) + "\n"


def accuracy_metrics(clean_model: JsccModel, backdoor_model: JsccModel,
                     classifier: ProbeClassifier, test_set: Dataset,
                     clean_spec: ChannelSpec, trigger: TriggerSpec, target_label: int,
                     eval_seed: int = 0) -> tuple[float, float, float, float]:
    """CA, AEVC, ASR, AC for one (clean channel, trigger) condition."""
    _check_probe(classifier)
    recon_c = reconstruct(clean_model, test_set.images, clean_spec, eval_seed=eval_seed)
    recon_m = reconstruct(backdoor_model, test_set.images, clean_spec, eval_seed=eval_seed)
    recon_b = reconstruct(backdoor_model, test_set.images, trigger.spec, eval_seed=eval_seed)
    return metrics_from_predictions(
        test_set.labels, classifier.predict(recon_c), classifier.predict(recon_m),
        classifier.predict(recon_b), target_label)


def _check_probe(classifier: ProbeClassifier):
    if classifier.test_accuracy < PROBE_ACCURACY_FLOOR:
        raise ProbeAccuracyError(
            f"probe accuracy {classifier.test_accuracy:.4f} below floor; retrain it")


def evaluate_suite(clean_model: JsccModel, backdoor_model: JsccModel,
                   classifier: ProbeClassifier, test_set: Dataset,
                   clean_spec: ChannelSpec, trigger: TriggerSpec,
                   target_image: np.ndarray, target_label: int,
                   snr_db: float, condition: str = "", eval_seed: int = 0) -> MetricsReport:
    """Full protocol for one condition: three reconstruction passes, all metrics."""
    _check_probe(classifier)
    x = test_set.images
    recon_c = reconstruct(clean_model, x, clean_spec, eval_seed=eval_seed)
    recon_m = reconstruct(backdoor_model, x, clean_spec, eval_seed=eval_seed)
    recon_b = reconstruct(backdoor_model, x, trigger.spec, eval_seed=eval_seed)
    ca, aevc, asr, ac = metrics_from_predictions(
        test_set.labels, classifier.predict(recon_c), classifier.predict(recon_m),
        classifier.predict(recon_b), target_label)
    target_batch = np.broadcast_to(target_image, recon_b.shape)
    row = EvalRow(
        condition=condition or trigger.name,
        snr_db=snr_db,
        psnr_c=mean_psnr(x, recon_c),
        psnr_m=mean_psnr(x, recon_m),
        psnr_b=mean_psnr(target_batch, recon_b),
        ca=ca, aevc=aevc, asr=asr, ac=ac,
    )
    return MetricsReport(rows=[row])


def snr_sweep(backdoor_model: JsccModel, family: str, snr_grid_db, classifier: ProbeClassifier,
              test_set: Dataset, target_image: np.ndarray, target_label: int,
              sigma_h: float | None = None, eval_seed: int = 0,
              condition: str = "") -> MetricsReport:
    """Sweep the test channel SNR; one row per grid point.

    At each SNR the same received batch is scored against both references:
    the true images (psnr_m, aevc) and the adversary's target (psnr_b, asr).
    """
    grid = list(snr_grid_db)
    if not grid:
        raise ValueError("snr_sweep needs a non-empty grid")
    _check_probe(classifier)
    rows = []
    x = test_set.images
    for snr_db in grid:
        spec = spec_for_snr(family, snr_db, sigma_h)
        recon = reconstruct(backdoor_model, x, spec, eval_seed=eval_seed)
        preds = classifier.predict(recon)
        target_batch = np.broadcast_to(target_image, recon.shape)
        rows.append(EvalRow(
            condition=condition or f"sweep-{family}",
            snr_db=float(snr_db),
            psnr_c=None,
            psnr_m=mean_psnr(x, recon),
            psnr_b=mean_psnr(target_batch, recon),
            ca=None,
            aevc=float(np.mean(preds == test_set.labels)),
            asr=float(np.mean(preds == target_label)),
            ac=None,
        ))
    return MetricsReport(rows=rows)
