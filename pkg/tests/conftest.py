"""Shared fixtures: the surrogate corpus and disk-cached trained artifacts.

Everything expensive is cached under .cache/ keyed by a content tag, so a
fresh checkout pays the training cost once and later pytest runs are fast.
All cached artifacts are deterministic functions of their tags.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np
import pytest

from jscclab.backdoor import PoisonPlan, TrainConfig, train
from jscclab.checkpoint import (load_checkpoint, load_probe, save_checkpoint, save_probe)
from jscclab.data import Dataset, load_mnist
from jscclab.models import ArchDescriptor, build_model
from jscclab.evalkit import train_probe_classifier
from jscclab import synth

CACHE = Path(__file__).resolve().parent.parent / ".cache"
CORPUS_SEED = 20240901
PROBE_SEED = 5


def _corpus(tmp_name: str, train_n: int, test_n: int) -> dict:
    out = CACHE / tmp_name
    paths = {
        "train_images": out / synth.TRAIN_IMAGES,
        "train_labels": out / synth.TRAIN_LABELS,
        "test_images": out / synth.TEST_IMAGES,
        "test_labels": out / synth.TEST_LABELS,
    }
    if not all(p.exists() for p in paths.values()):
        synth.generate(out, train=train_n, test=test_n, seed=CORPUS_SEED)
    return {k: str(v) for k, v in paths.items()}


@pytest.fixture(scope="session")
def corpus_paths() -> dict:
    """Full-size corpus (60k/10k) used by acceptance and the CLI pipeline."""
    return _corpus("corpus", 60000, 10000)


@pytest.fixture(scope="session")
def corpus(corpus_paths):
    train = load_mnist(corpus_paths["train_images"], corpus_paths["train_labels"])
    test = load_mnist(corpus_paths["test_images"], corpus_paths["test_labels"])
    return train, test


@pytest.fixture(scope="session")
def small_corpus() -> tuple[Dataset, Dataset]:
    paths = _corpus("corpus_small", 3000, 600)
    return (load_mnist(paths["train_images"], paths["train_labels"]),
            load_mnist(paths["test_images"], paths["test_labels"]))


def train_cached(tag: str, arch: ArchDescriptor, dataset: Dataset, plan: PoisonPlan,
                 config: TrainConfig):
    """Train (or reload) a model cached under a content-derived name."""
    key = hashlib.sha256("|".join([
        tag, str(arch.to_dict()), str(len(dataset)),
        f"{plan.ratio}:{plan.selection_seed}:{plan.clean_spec.describe()}",
        plan.trigger.spec.describe() if plan.trigger else "no-trigger",
        str(config),
    ]).encode()).hexdigest()[:16]
    path = CACHE / f"model_{tag}_{key}.ckpt"
    if path.exists():
        return load_checkpoint(path)
    model = build_model(arch, seed=config.seed)
    train(model, dataset, plan, config)
    save_checkpoint(model, path)
    return model


@pytest.fixture(scope="session")
def probe(corpus):
    """Full-corpus probe classifier, cached; must clear the 0.98 floor."""
    train_set, test_set = corpus
    path = CACHE / f"probe_{PROBE_SEED}_{len(train_set)}.ckpt"
    if path.exists():
        return load_probe(path)
    p = train_probe_classifier(train_set, test_set, seed=PROBE_SEED, epochs=3)
    save_probe(p, path)
    return p
