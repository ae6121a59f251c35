"""Deterministic handwritten-digit corpus in MNIST layout.

Offline environments rarely ship the original MNIST files, so this module
materializes a drop-in surrogate: the bundled UCI handwritten-digit glyphs
(8x8, real pen strokes, ~180 writers per class via scikit-learn) are upsampled
to 28x28 and expanded with small random affine jitter and intensity variation
into train/test IDX files. Train and test draw from disjoint glyph pools, and
every draw comes from one seeded stream, so the corpus is a pure function of
(seed, sizes).

Usage: python -m jscclab.synth OUTDIR [--train N] [--test N] [--seed S]
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from .data import write_idx_images, write_idx_labels
from .rng import DATA, RandomStream

TRAIN_IMAGES = "train-images-idx3-ubyte"
TRAIN_LABELS = "train-labels-idx1-ubyte"
TEST_IMAGES = "t10k-images-idx3-ubyte"
TEST_LABELS = "t10k-labels-idx1-ubyte"

_SIZE = 28
_GLYPH_TEST_FRACTION = 0.2


def _glyph_bank():
    from sklearn.datasets import load_digits

    d = load_digits()
    return d.images.astype(np.float64) / 16.0, d.target.astype(np.uint8)


def _bilinear_resize(img: np.ndarray, out: int) -> np.ndarray:
    """Resize a square single-channel image with bilinear sampling."""
    n = img.shape[0]
    # map output pixel centers into input coordinates
    coords = (np.arange(out) + 0.5) * n / out - 0.5
    c0 = np.clip(np.floor(coords).astype(int), 0, n - 1)
    c1 = np.clip(c0 + 1, 0, n - 1)
    frac = np.clip(coords - c0, 0.0, 1.0)
    rows = img[c0][:, c0] * np.outer(1 - frac, 1 - frac)
    rows += img[c0][:, c1] * np.outer(1 - frac, frac)
    rows += img[c1][:, c0] * np.outer(frac, 1 - frac)
    rows += img[c1][:, c1] * np.outer(frac, frac)
    return rows


def _affine_sample(img: np.ndarray, angle: float, scale: float, dx: float, dy: float) -> np.ndarray:
    """Rotate/scale about the center, translate, bilinear interpolation."""
    n = img.shape[0]
    c = (n - 1) / 2.0
    ys, xs = np.meshgrid(np.arange(n, dtype=np.float64), np.arange(n, dtype=np.float64), indexing="ij")
    ca, sa = np.cos(angle), np.sin(angle)
    # inverse map: output pixel -> source location
    yr = (ys - c - dy) / scale
    xr = (xs - c - dx) / scale
    sy = ca * yr + sa * xr + c
    sx = -sa * yr + ca * xr + c
    y0 = np.floor(sy).astype(int)
    x0 = np.floor(sx).astype(int)
    fy = sy - y0
    fx = sx - x0

    def at(yi, xi):
        inside = (yi >= 0) & (yi < n) & (xi >= 0) & (xi < n)
        v = np.zeros_like(sy)
        v[inside] = img[yi[inside], xi[inside]]
        return v

    out = (at(y0, x0) * (1 - fy) * (1 - fx) + at(y0, x0 + 1) * (1 - fy) * fx
           + at(y0 + 1, x0) * fy * (1 - fx) + at(y0 + 1, x0 + 1) * fy * fx)
    return out


def _render(glyph28: np.ndarray, rng: RandomStream) -> np.ndarray:
    angle = rng.uniform() * 0.42 - 0.21  # about +-12 degrees
    scale = 0.85 + 0.3 * rng.uniform()
    dx = rng.uniform() * 4.0 - 2.0
    dy = rng.uniform() * 4.0 - 2.0
    gain = 0.75 + 0.25 * rng.uniform()
    img = _affine_sample(glyph28, angle, scale, dx, dy) * gain
    img += rng.gaussian(img.shape) * 0.02
    return np.clip(img, 0.0, 1.0)


def _build_split(glyphs: np.ndarray, labels: np.ndarray, count: int, rng: RandomStream):
    images = np.empty((count, _SIZE, _SIZE), np.uint8)
    out_labels = np.empty(count, np.uint8)
    order = rng.permutation(len(glyphs))
    for i in range(count):
        g = order[i % len(order)]
        img = _render(glyphs[g], rng)
        images[i] = np.round(img * 255.0).astype(np.uint8)
        out_labels[i] = labels[g]
    return images, out_labels


def generate(out_dir, train: int = 60000, test: int = 10000, seed: int = 20240901) -> dict:
    """Write the four IDX files into out_dir; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    raw, labels = _glyph_bank()
    up = np.stack([_bilinear_resize(g, _SIZE) for g in raw])

    split_rng = RandomStream(seed, DATA, worker=0)
    order = split_rng.permutation(len(up))
    n_test_glyphs = int(len(up) * _GLYPH_TEST_FRACTION)
    test_idx, train_idx = order[:n_test_glyphs], order[n_test_glyphs:]

    tr_images, tr_labels = _build_split(up[train_idx], labels[train_idx], train,
                                        RandomStream(seed, DATA, worker=1))
    te_images, te_labels = _build_split(up[test_idx], labels[test_idx], test,
                                        RandomStream(seed, DATA, worker=2))

    paths = {
        "train_images": out / TRAIN_IMAGES,
        "train_labels": out / TRAIN_LABELS,
        "test_images": out / TEST_IMAGES,
        "test_labels": out / TEST_LABELS,
    }
    write_idx_images(paths["train_images"], tr_images)
    write_idx_labels(paths["train_labels"], tr_labels)
    write_idx_images(paths["test_images"], te_images)
    write_idx_labels(paths["test_labels"], te_labels)
    return {k: str(v) for k, v in paths.items()}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out_dir")
    ap.add_argument("--train", type=int, default=60000)
    ap.add_argument("--test", type=int, default=10000)
    ap.add_argument("--seed", type=int, default=20240901)
    args = ap.parse_args(argv)
    paths = generate(args.out_dir, args.train, args.test, args.seed)
    for k, v in paths.items():
        print(f"{k}: {v}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
