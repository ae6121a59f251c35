"""Command-line interface.

Subcommands: train (clean or backdoor per config), eval, sweep, titrate,
report. Exit codes: 0 success, 1 usage error (bad invocation or config), 2
runtime failure (divergence, corrupt files, probe shortfall).

Conventions: train writes <mode>.ckpt, <mode>_history.csv and the effective
config into --out; eval/sweep/titrate look for backdoor.ckpt / clean.ckpt /
probe.ckpt there unless --model/--classifier point elsewhere; report collects
every eval*/sweep*/titration* CSV in --out into summary tables and figures.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .backdoor import (TrainConfig, TrainingDiverged, build_poison_plan, clean_plan, train)
from .channel import AWGN, ChannelConfigError, make_trigger, spec_for_snr
from .checkpoint import CheckpointError, load_checkpoint, load_probe, save_checkpoint, save_probe
from .config import ConfigError, RunConfig, load_config
from .data import Dataset, IdxFormatError, load_mnist
from .evalkit import ProbeAccuracyError, evaluate_suite, snr_sweep, train_probe_classifier
from .models import ArchDescriptor, ModelConfigError, build_model
from .report import build_report
from .titration import TitrationError, detect_backdoor, titrate

USAGE_ERRORS = (ConfigError, FileNotFoundError, ModelConfigError)
RUNTIME_ERRORS = (TrainingDiverged, CheckpointError, ProbeAccuracyError, IdxFormatError,
                  TitrationError, ChannelConfigError, ValueError, FloatingPointError)

HISTORY_HEADER = "epoch,lr,loss_total,loss_clean,loss_adv"


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems on stderr with exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    p = _Parser(prog="jscclab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, model=False, classifier=False):
        sp.add_argument("--config", required=True, help="run configuration file")
        sp.add_argument("--out", default=".", help="output directory (default: .)")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        if model:
            sp.add_argument("--model", default=None, help="model checkpoint path")
        if classifier:
            sp.add_argument("--classifier", default=None, help="probe classifier checkpoint path")

    common(sub.add_parser("train", help="train a clean or backdoored codec"))
    common(sub.add_parser("eval", help="evaluate the clean/backdoor model pair"),
           model=True, classifier=True)
    common(sub.add_parser("sweep", help="sweep test SNR for the backdoored model"),
           model=True, classifier=True)
    common(sub.add_parser("titrate", help="noise-titration backdoor probe"), model=True)
    rp = sub.add_parser("report", help="summarize emitted CSVs into tables and figures")
    rp.add_argument("--out", default=".", help="directory holding the CSVs")
    return p


# -- config plumbing -----------------------------------------------------------

def _effective_config(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _load_train_set(cfg: RunConfig) -> Dataset:
    ds = load_mnist(cfg["dataset.images"], cfg["dataset.labels"])
    return ds.subset(cfg["dataset.limit_train"])


def _load_test_set(cfg: RunConfig) -> Dataset:
    if not cfg.get("dataset.test_images") or not cfg.get("dataset.test_labels"):
        raise ConfigError("this command needs dataset.test_images and dataset.test_labels")
    ds = load_mnist(cfg["dataset.test_images"], cfg["dataset.test_labels"])
    return ds.subset(cfg["dataset.limit_test"])


def _arch_for(cfg: RunConfig, train_set: Dataset) -> ArchDescriptor:
    h, w, c = train_set.image_shape
    return ArchDescriptor(cfg["arch"], h, w, c, cfg["bandwidth_ratio"])


def _specs_for(cfg: RunConfig):
    clean_spec = spec_for_snr(AWGN, cfg["snr_train_db"])
    if cfg.mode != "backdoor":
        return clean_spec, None
    kind = cfg["trigger.kind"]
    if kind == "n":
        trigger = make_trigger("n", clean_spec, snr_db=cfg["trigger.snr_db"])
    else:
        trigger = make_trigger("H", clean_spec, snr_db=cfg["trigger.snr_db"],
                               fading=cfg["trigger.fading"], sigma_h=cfg["trigger.sigma_h"])
    return clean_spec, trigger


def _plan_for(cfg: RunConfig, train_set: Dataset):
    clean_spec, trigger = _specs_for(cfg)
    if cfg.mode == "backdoor":
        return build_poison_plan(train_set, cfg["poison_ratio"], cfg["target_class"],
                                 trigger, clean_spec, cfg["seed"])
    return clean_plan(clean_spec, train_set.image_shape, cfg["seed"])


def _train_config(cfg: RunConfig) -> TrainConfig:
    return TrainConfig(epochs=cfg["epochs"], batch_size=cfg["batch_size"],
                       lr_base=cfg["lr_base"], warmup_epochs=cfg["warmup_epochs"],
                       snr_train_db=cfg["snr_train_db"], seed=cfg["seed"],
                       deterministic=cfg["deterministic"])


def _probe_for(cfg: RunConfig, args, out: Path):
    if getattr(args, "classifier", None):
        return load_probe(args.classifier)
    cached = out / "probe.ckpt"
    if cached.exists():
        return load_probe(cached)
    probe = train_probe_classifier(_load_train_set(cfg), _load_test_set(cfg),
                                   seed=cfg["seed"], epochs=cfg["probe.epochs"])
    save_probe(probe, cached)
    return probe


def _backdoor_model(args, out: Path):
    path = Path(args.model) if args.model else out / "backdoor.ckpt"
    if not path.exists():
        raise ConfigError(f"model checkpoint not found: {path} (run `jscclab train` first)")
    return load_checkpoint(path), path


# -- subcommands ------------------------------------------------------------------

def _cmd_train(args) -> int:
    cfg = _effective_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train_set = _load_train_set(cfg)
    arch = _arch_for(cfg, train_set)
    model = build_model(arch, seed=cfg["seed"])
    model.config_hash = cfg.hash()
    plan = _plan_for(cfg, train_set)
    history = train(model, train_set, plan, _train_config(cfg))

    mode = cfg.mode
    save_checkpoint(model, out / f"{mode}.ckpt")
    with open(out / f"{mode}_history.csv", "w") as f:
        f.write(HISTORY_HEADER + "\n")
        for row in history:
            f.write(f"{row['epoch']},{row['lr']:.8g},{row['loss_total']:.8g},"
                    f"{row['loss_clean']:.8g},{row['loss_adv']:.8g}\n")
    (out / f"{mode}_config.cfg").write_text(cfg.serialize())
    print(f"trained {mode} model: {out / (mode + '.ckpt')} "
          f"(final loss {history[-1]['loss_total']:.6g}, config hash {cfg.hash()[:12]})")
    return 0


def _cmd_eval(args) -> int:
    cfg = _effective_config(args)
    if cfg.mode != "backdoor":
        raise ConfigError("eval needs a backdoor-mode config (it scores the attack)")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train_set = _load_train_set(cfg)
    test_set = _load_test_set(cfg)
    clean_spec, trigger = _specs_for(cfg)
    plan = _plan_for(cfg, train_set)

    backdoor_model, bd_path = _backdoor_model(args, out)
    clean_path = bd_path.parent / "clean.ckpt"
    if not clean_path.exists():
        raise ConfigError(f"clean baseline checkpoint not found: {clean_path}")
    clean_model = load_checkpoint(clean_path)
    probe = _probe_for(cfg, args, out)

    report = evaluate_suite(clean_model, backdoor_model, probe, test_set, clean_spec,
                            trigger, plan.target_image, cfg["target_class"],
                            snr_db=cfg["snr_train_db"], eval_seed=cfg["eval.seed"])
    path = out / "eval.csv"
    path.write_text(report.to_csv())
    print(report.to_csv().strip())
    print(f"wrote {path}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _effective_config(args)
    if cfg.mode != "backdoor":
        raise ConfigError("sweep needs a backdoor-mode config")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train_set = _load_train_set(cfg)
    test_set = _load_test_set(cfg)
    plan = _plan_for(cfg, train_set)
    backdoor_model, _ = _backdoor_model(args, out)
    probe = _probe_for(cfg, args, out)

    family = cfg["sweep.family"]
    grid = np.arange(cfg["sweep.snr_min_db"], cfg["sweep.snr_max_db"] + 1e-9,
                     cfg["sweep.snr_step_db"])
    report = snr_sweep(backdoor_model, family, grid, probe, test_set, plan.target_image,
                       cfg["target_class"],
                       sigma_h=cfg["sweep.sigma_h"] if family == "rayleigh" else None,
                       eval_seed=cfg["eval.seed"])
    path = out / f"sweep_{family}.csv"
    path.write_text(report.to_csv())
    print(f"wrote {path} ({len(report.rows)} grid points)")
    return 0


def _cmd_titrate(args) -> int:
    cfg = _effective_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    test_set = _load_test_set(cfg)
    model, model_path = _backdoor_model(args, out)
    probes = test_set.images[: cfg["titrate.probes"]]
    grid = np.concatenate([[0.0], np.geomspace(cfg["titrate.sigma_min"],
                                               cfg["titrate.sigma_max"],
                                               cfg["titrate.points"])])
    curve = titrate(model, probes, sigma_grid=grid, seed=cfg["eval.seed"])
    backdoored, score = detect_backdoor(curve, cfg["titrate.tau_ratio"])
    verdict = f"verdict,{'backdoored' if backdoored else 'clean'},{score:.6g}"
    path = out / "titration.csv"
    path.write_text(curve.to_csv(verdict))
    print(f"{model_path}: {verdict}")
    print(f"wrote {path}")
    return 0


def _cmd_report(args) -> int:
    written = build_report(args.out)
    if not written:
        print(f"no eval/sweep/titration CSVs found in {args.out}", file=sys.stderr)
        return 1
    for path in written:
        print(f"wrote {path}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
    "titrate": _cmd_titrate,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except USAGE_ERRORS as e:
        print(f"jscclab {args.command}: error: {e}", file=sys.stderr)
        return 1
    except RUNTIME_ERRORS as e:
        print(f"jscclab {args.command}: runtime failure: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
