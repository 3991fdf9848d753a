"""Run configuration: defaults, ``key = value`` files, environment and flag overrides.

Precedence, lowest to highest: built-in defaults, the config file, the
``G2SQG_SEED`` environment variable, command-line flags.
"""

from __future__ import annotations

import hashlib
import json
import os
from collections.abc import Mapping
from pathlib import Path

from .errors import ConfigError
from .model import ModelConfig
from .trainer import LossConfig

SEED_ENV = "G2SQG_SEED"

DEFAULTS: dict[str, object] = {
    "graph.kind": "static",
    "gnn.hops": 3,
    "gnn.direction_order": "in_out",
    "decode.beam_width": 5,
    "decode.max_len": 30,
    "loss.lambda": 0.4,
    "loss.gamma": 0.99,
    "loss.alpha": 0.1,
    "optim.lr_pretrain": 1e-3,
    "optim.lr_finetune": 1e-5,
    "optim.clip": 10.0,
    "optim.plateau_factor": 0.5,
    "optim.plateau_patience": 3,
    "optim.early_stop": 10,
    "train.epochs": 100,
    "train.batch_size": 8,
    "train.tf_base": 0.75,
    "train.tf_decay": 0.9999,
    "vocab.max_size": 70000,
    "dropout.embed": 0.4,
    "dropout.rnn": 0.3,
    "knn.k": 10,
    "model.hidden": 300,
    "model.word_dim": 300,
    "model.dan": True,
    "gradcheck.tol": 1e-4,
    "gradcheck.max_coords": 0,
    "sweep.hops": "0,1,2,3,4,5,6",
    "seed": 0,
    "paths.train": "",
    "paths.dev": "",
    "paths.test": "",
    "paths.glove": "",
    "paths.context": "",
    "paths.vocab": "",
    "paths.checkpoint": "",
    "paths.predictions": "",
}

_CHOICES = {
    "graph.kind": ("static", "dynamic"),
    "gnn.direction_order": ("in_out", "out_in"),
}

# sections whose keys change the parameter layout or the encoder's behaviour
_MODEL_SECTIONS = ("graph", "gnn", "knn", "model", "vocab", "dropout")

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(key: str, value) -> object:
    default = DEFAULTS[key]
    try:
        if isinstance(default, bool):
            if isinstance(value, bool):
                return value
            s = str(value).strip().lower()
            if s in _TRUE:
                return True
            if s in _FALSE:
                return False
            raise ValueError(value)
        if isinstance(default, int):
            f = float(value)
            if f != int(f):
                raise ValueError(value)
            return int(f)
        if isinstance(default, float):
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot interpret {value!r} as {type(default).__name__}") from None
    return str(value)


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        out[key] = value
    return out


class RunConfig:
    """Validated mapping over every tunable key."""

    def __init__(self, values: Mapping[str, object] | None = None):
        self._values = dict(DEFAULTS)
        for k, v in (values or {}).items():
            self.set(k, v)
        self.validate()

    @classmethod
    def resolve(cls, config_path: str | Path | None = None, overrides: Mapping[str, object] | None = None,
                env: Mapping[str, str] | None = None) -> RunConfig:
        env = os.environ if env is None else env
        values: dict[str, object] = {}
        if config_path:
            p = Path(config_path)
            if not p.is_file():
                raise ConfigError(f"config file {p} not found")
            values.update(parse_config_text(p.read_text(encoding="utf-8"), str(p)))
        if env.get(SEED_ENV):
            values["seed"] = env[SEED_ENV]
        values.update(overrides or {})
        return cls(values)

    def set(self, key: str, value) -> None:
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        self._values[key] = _coerce(key, value)

    def __getitem__(self, key: str):
        return self._values[key]

    def as_dict(self) -> dict[str, object]:
        return dict(self._values)

    def validate(self) -> None:
        v = self._values
        for key, allowed in _CHOICES.items():
            if v[key] not in allowed:
                raise ConfigError(f"{key} must be one of {allowed}, got {v[key]!r}")
        for key in ("gnn.hops", "vocab.max_size", "knn.k", "decode.beam_width", "decode.max_len",
                    "train.batch_size", "model.hidden", "model.word_dim", "optim.plateau_patience",
                    "optim.early_stop", "train.epochs", "gradcheck.max_coords"):
            if v[key] < 0:
                raise ConfigError(f"{key} must be non-negative")
        if v["vocab.max_size"] < 5:
            raise ConfigError("vocab.max_size must be at least 5")
        for key in ("decode.beam_width", "decode.max_len", "train.batch_size", "knn.k"):
            if v[key] < 1:
                raise ConfigError(f"{key} must be at least 1")
        self.hop_range()
        self.model_config()
        self.loss_config()

    def hop_range(self) -> list[int]:
        try:
            hops = [int(s) for s in str(self["sweep.hops"]).split(",") if s.strip()]
        except ValueError:
            raise ConfigError(f"sweep.hops must be a comma-separated list of integers, got {self['sweep.hops']!r}") from None
        if not hops or min(hops) < 0:
            raise ConfigError("sweep.hops needs at least one non-negative hop count")
        return hops

    def model_config(self, ctx_dim: int = 0) -> ModelConfig:
        v = self._values
        return ModelConfig(
            hidden=v["model.hidden"],
            word_dim=v["model.word_dim"],
            ctx_dim=ctx_dim,
            graph_kind=v["graph.kind"],
            hops=v["gnn.hops"],
            knn_k=v["knn.k"],
            direction_order=v["gnn.direction_order"],
            use_dan=v["model.dan"],
            dropout_embed=v["dropout.embed"],
            dropout_rnn=v["dropout.rnn"],
        )

    def loss_config(self) -> LossConfig:
        v = self._values
        return LossConfig(
            lam=v["loss.lambda"],
            gamma=v["loss.gamma"],
            alpha=v["loss.alpha"],
            tf_base=v["train.tf_base"],
            tf_decay=v["train.tf_decay"],
            clip=v["optim.clip"],
            lr_pretrain=v["optim.lr_pretrain"],
            lr_finetune=v["optim.lr_finetune"],
            plateau_factor=v["optim.plateau_factor"],
            plateau_patience=v["optim.plateau_patience"],
            early_stop=v["optim.early_stop"],
            batch_size=v["train.batch_size"],
            epochs=v["train.epochs"],
            max_len=v["decode.max_len"],
        )

    def digest(self) -> str:
        """Hash of the settings that shape the model; stored in checkpoints."""
        core = {k: v for k, v in self._values.items() if k.split(".")[0] in _MODEL_SECTIONS}
        return hashlib.sha256(json.dumps(core, sort_keys=True).encode()).hexdigest()[:16]
