"""Flat key=value run configuration.

One `key = value` pair per line, '#' starts a comment, keys are dotted names
from a closed schema: unknown keys are rejected, required keys are enforced
(conditionally for backdoor mode and the H trigger), and every value is type
checked. parse -> serialize -> parse is a fixed point, and the config hash is
taken over the canonical serialization so it pins the effective seed.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

ARCHES = ("conv", "vit_mini", "mlp")
MODES = ("clean", "backdoor")
TRIGGER_KINDS = ("n", "H")
FAMILIES = ("awgn", "rayleigh")


class ConfigError(ValueError):
    pass


def _enum(*options):
    def check(s: str) -> str:
        if s not in options:
            raise ConfigError(f"expected one of {options}, got {s!r}")
        return s
    return check


def _bool(s: str) -> bool:
    if s.lower() in ("true", "1", "yes"):
        return True
    if s.lower() in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected a boolean, got {s!r}")


ALWAYS, BACKDOOR_ONLY, TRIGGER_H_ONLY, OPTIONAL = "always", "backdoor", "trigger_h", "optional"

# key -> (parser, when-required, default-for-optionals)
SCHEMA: dict[str, tuple] = {
    "dataset.images": (str, ALWAYS, None),
    "dataset.labels": (str, ALWAYS, None),
    "dataset.test_images": (str, OPTIONAL, None),
    "dataset.test_labels": (str, OPTIONAL, None),
    "dataset.limit_train": (int, OPTIONAL, 0),
    "dataset.limit_test": (int, OPTIONAL, 0),
    "arch": (_enum(*ARCHES), ALWAYS, None),
    "bandwidth_ratio": (float, ALWAYS, None),
    "seed": (int, ALWAYS, None),
    "epochs": (int, ALWAYS, None),
    "batch_size": (int, ALWAYS, None),
    "lr_base": (float, ALWAYS, None),
    "warmup_epochs": (int, ALWAYS, None),
    "snr_train_db": (float, ALWAYS, None),
    "mode": (_enum(*MODES), ALWAYS, None),
    "deterministic": (_bool, OPTIONAL, True),
    "trigger.kind": (_enum(*TRIGGER_KINDS), BACKDOOR_ONLY, None),
    "trigger.snr_db": (float, BACKDOOR_ONLY, None),
    "trigger.fading": (_enum(*FAMILIES), TRIGGER_H_ONLY, None),
    "trigger.sigma_h": (float, TRIGGER_H_ONLY, None),
    "poison_ratio": (float, BACKDOOR_ONLY, None),
    "target_class": (int, BACKDOOR_ONLY, None),
    "eval.seed": (int, OPTIONAL, 0),
    "probe.epochs": (int, OPTIONAL, 3),
    "sweep.family": (_enum(*FAMILIES), OPTIONAL, "awgn"),
    "sweep.snr_min_db": (float, OPTIONAL, -30.0),
    "sweep.snr_max_db": (float, OPTIONAL, 15.0),
    "sweep.snr_step_db": (float, OPTIONAL, 3.0),
    "sweep.sigma_h": (float, OPTIONAL, 1.0),
    "titrate.sigma_min": (float, OPTIONAL, 0.01),
    "titrate.sigma_max": (float, OPTIONAL, 10.0),
    "titrate.points": (int, OPTIONAL, 20),
    "titrate.tau_ratio": (float, OPTIONAL, 0.1),
    "titrate.probes": (int, OPTIONAL, 8),
}


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key: str):
        if key in self.values:
            return self.values[key]
        parser, when, default = SCHEMA[key]
        if when == OPTIONAL:
            return default
        raise KeyError(key)

    def get(self, key: str, default=None):
        try:
            return self[key]
        except KeyError:
            return default

    @property
    def mode(self) -> str:
        return self.values["mode"]

    def with_seed(self, seed: int) -> "RunConfig":
        vals = dict(self.values)
        vals["seed"] = seed
        return RunConfig(vals)

    def serialize(self) -> str:
        lines = []
        for key in sorted(self.values):
            v = self.values[key]
            if isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{key} = {v}")
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(self.serialize().encode()).hexdigest()


def parse_config(text: str) -> RunConfig:
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, _, sval = line.partition("=")
        key = key.strip()
        sval = sval.strip()
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        parser = SCHEMA[key][0]
        try:
            values[key] = parser(sval)
        except ConfigError:
            raise
        except ValueError as e:
            raise ConfigError(f"line {lineno}: bad value for {key}: {e}") from e
    cfg = RunConfig(values)
    _validate_required(cfg)
    return cfg


def _validate_required(cfg: RunConfig):
    missing = []
    for key, (_, when, _) in SCHEMA.items():
        if key in cfg.values:
            continue
        if when == ALWAYS:
            missing.append(key)
        elif when == BACKDOOR_ONLY and cfg.values.get("mode") == "backdoor":
            missing.append(key)
        elif (when == TRIGGER_H_ONLY and cfg.values.get("mode") == "backdoor"
              and cfg.values.get("trigger.kind") == "H"):
            missing.append(key)
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(sorted(missing))}")


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file not found: {p}")
    return parse_config(p.read_text())
