"""Run configuration: a flat registry of dotted keys.

Configuration files are JSON objects mapping dotted keys to values,
for example ``{"loss.tau": 0.05, "train.epochs": 3}``. Command line
overrides use the same keys. Unknown keys are rejected by name, and
every key has a typed default listed in the command line help.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Sequence

from .data import SynthConfig
from .losses import LossConfig
from .model import DEFAULT_PROMPT_TEMPLATE, EncoderConfig
from .numeric import BetaParams
from .training import TrainConfig

__all__ = [
    "CONFIG_KEYS",
    "DEFAULTS",
    "apply_overrides",
    "describe_keys",
    "effective_config",
    "encoder_config",
    "format_echo",
    "load_config_file",
    "loss_config",
    "synth_config",
    "train_config",
]


@dataclass(frozen=True)
class ConfigKey:
    name: str
    default: object
    kind: str  # "int", "float", or "str"
    help: str


CONFIG_KEYS: tuple[ConfigKey, ...] = (
    ConfigKey("data.classes", 7, "int", "number of classes"),
    ConfigKey("data.domains", 4, "int", "number of domains"),
    ConfigKey("data.n_per_cell", 30, "int", "samples per domain-class cell"),
    ConfigKey("data.input_dim", 16, "int", "raw feature dimension"),
    ConfigKey("data.noise_sigma", 0.25, "float", "within-cluster noise scale"),
    ConfigKey("data.shift_mag", 0.5, "float", "domain shift magnitude (rotation and translation)"),
    ConfigKey("data.seed", 7, "int", "generation seed"),
    ConfigKey("model.embed_dim", 16, "int", "embedding dimension"),
    ConfigKey("model.hidden_dim", 32, "int", "hidden layer width, 0 for a single linear layer"),
    ConfigKey("model.seed", 0, "int", "seed for encoder init and class table"),
    ConfigKey("model.template", DEFAULT_PROMPT_TEMPLATE, "str", "class prompt template"),
    ConfigKey("loss.tau", 0.01, "float", "softmax temperature"),
    ConfigKey("loss.margin", 0.3, "float", "additive margin"),
    ConfigKey("loss.lambda", 0.1, "float", "weight of the mix consistency term"),
    ConfigKey("loss.beta_alpha", 0.2, "float", "Beta shape alpha for mixing coefficients"),
    ConfigKey("loss.beta_beta", 0.2, "float", "Beta shape beta for mixing coefficients"),
    ConfigKey("train.epochs", 10, "int", "training epochs"),
    ConfigKey("train.batch_size", 32, "int", "minibatch size"),
    ConfigKey("train.learning_rate", 0.01, "float", "gradient descent step size"),
    ConfigKey("train.momentum", 0.9, "float", "classical momentum coefficient"),
    ConfigKey("train.seed", 0, "int", "seed for shuffling and mixing draws"),
    ConfigKey("train.eval_every", 1, "int", "epochs between held-out evaluations"),
)

_BY_NAME = {k.name: k for k in CONFIG_KEYS}

DEFAULTS = {k.name: k.default for k in CONFIG_KEYS}


def _coerce(key: ConfigKey, value: object) -> object:
    if key.kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError(f"{key.name} must be an integer, got {value!r}")
        return value
    if key.kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"{key.name} must be a number, got {value!r}")
        v = float(value)
        if not math.isfinite(v):
            raise ValueError(f"{key.name} must be finite, got {value!r}")
        return v
    if not isinstance(value, str):
        raise ValueError(f"{key.name} must be a string, got {value!r}")
    return value


def load_config_file(path: str | os.PathLike[str]) -> dict:
    """Defaults overlaid with the JSON object at ``path``."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as e:
            raise ValueError(f"invalid config JSON at line {e.lineno}: {e.msg}") from e
    if not isinstance(raw, dict):
        raise ValueError("config file must hold a JSON object")
    cfg = dict(DEFAULTS)
    for name, value in raw.items():
        if name not in _BY_NAME:
            raise ValueError(f"unknown config key {name!r}")
        cfg[name] = _coerce(_BY_NAME[name], value)
    return cfg


def apply_overrides(cfg: dict, assignments: Sequence[str]) -> dict:
    """Apply ``key=value`` strings on top of a config mapping.

    Values parse as JSON when possible (numbers, quoted strings) and
    fall back to the raw string, so ``--set model.template=a [CLASS]``
    works without extra quoting.
    """
    out = dict(cfg)
    for assignment in assignments:
        name, sep, raw = assignment.partition("=")
        if not sep or not name:
            raise ValueError(f"override {assignment!r} is not of the form key=value")
        if name not in _BY_NAME:
            raise ValueError(f"unknown config key {name!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        out[name] = _coerce(_BY_NAME[name], value)
    return out


def effective_config(config_path: str | None, assignments: Sequence[str]) -> dict:
    """Defaults, then the optional file, then overrides, in that order."""
    cfg = load_config_file(config_path) if config_path else dict(DEFAULTS)
    return apply_overrides(cfg, assignments)


def format_echo(cfg: dict) -> str:
    """One ``key = value`` line per key, in registry order."""
    lines = [f"{k.name} = {json.dumps(cfg[k.name])}" for k in CONFIG_KEYS]
    return "\n".join(lines) + "\n"


def describe_keys() -> str:
    """Help text block listing every key, its default, and its meaning."""
    name_w = max(len(k.name) for k in CONFIG_KEYS)
    default_w = max(len(json.dumps(k.default)) for k in CONFIG_KEYS)
    lines = ["configuration keys (config file and --set):"]
    for k in CONFIG_KEYS:
        lines.append(
            f"  {k.name.ljust(name_w)}  {json.dumps(k.default).ljust(default_w)}  {k.help}"
        )
    return "\n".join(lines)


def synth_config(cfg: dict) -> SynthConfig:
    return SynthConfig(
        n_classes=cfg["data.classes"],
        n_domains=cfg["data.domains"],
        n_per_cell=cfg["data.n_per_cell"],
        input_dim=cfg["data.input_dim"],
        noise_sigma=cfg["data.noise_sigma"],
        shift_mag=cfg["data.shift_mag"],
        seed=cfg["data.seed"],
    )


def encoder_config(cfg: dict) -> EncoderConfig:
    hidden = cfg["model.hidden_dim"]
    return EncoderConfig(
        embed_dim=cfg["model.embed_dim"],
        hidden_dim=None if hidden == 0 else hidden,
        seed=cfg["model.seed"],
        template=cfg["model.template"],
    )


def loss_config(cfg: dict) -> LossConfig:
    return LossConfig(
        tau=cfg["loss.tau"],
        margin=cfg["loss.margin"],
        lam=cfg["loss.lambda"],
        beta=BetaParams(cfg["loss.beta_alpha"], cfg["loss.beta_beta"]),
    )


def train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(
        epochs=cfg["train.epochs"],
        batch_size=cfg["train.batch_size"],
        learning_rate=cfg["train.learning_rate"],
        momentum=cfg["train.momentum"],
        loss=loss_config(cfg),
        seed=cfg["train.seed"],
        eval_every=cfg["train.eval_every"],
    )
