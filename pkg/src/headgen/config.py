"""Run configuration: typed defaults, presets, ``key = value`` files."""
from __future__ import annotations

import zlib
from typing import Any, Mapping

import numpy as np

from .baselines import RnnConfig
from .corpus import FilterSpec
from .model_ut import UtConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


# Full-scale values used for the NYT-sized runs.
DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "data.test_size": 20000,
    "data.val_fraction": 0.01,
    "data.min_title_words": 3,
    "data.max_title_words": 15,
    "data.min_body_words": 20,
    "data.max_body_words": 2000,
    "data.exclude_obituaries": False,
    "bpe.vocab_size": 40000,
    "emb.strategy": "pretrained",
    "emb.window": 5,
    "emb.negatives": 5,
    "emb.epochs": 5,
    "emb.lr": 0.025,
    "emb.batch_size": 1024,
    "model.d_model": 512,
    "model.n_heads": 8,
    "model.n_steps": 4,
    "model.d_ff": 2048,
    "model.dropout": 0.3,
    "model.tie_output": True,
    "model.untied_depth": False,
    "train.warmup_steps": 4000,
    "train.beta1": 0.9,
    "train.beta2": 0.98,
    "train.adam_eps": 1e-9,
    "train.label_smoothing": 0.0,
    "train.lr_scale": 1.0,
    "train.batch_tokens": 4096,
    "train.max_src_tokens": 2000,
    "train.max_tgt_tokens": 64,
    "train.clip_norm": 1.0,
    "train.patience": 5,
    "train.eval_every": 0,
    "train.max_epochs": 100,
    "train.max_steps": 0,
    "train.max_seconds": 0.0,
    "decode.beam": 10,
    "decode.max_len": 20,
    "decode.length_norm": True,
}

PRESETS: dict[str, dict[str, Any]] = {
    "nyt": {},
    "ria": {"bpe.vocab_size": 50000, "train.max_src_tokens": 3000},
    "micro": {
        "data.test_size": 20,
        "data.val_fraction": 0.05,
        "bpe.vocab_size": 500,
        "emb.epochs": 3,
        "model.d_model": 64,
        "model.n_heads": 2,
        "model.n_steps": 2,
        "model.d_ff": 256,
        "model.dropout": 0.0,
        "train.warmup_steps": 400,
        "train.batch_tokens": 1024,
        "train.max_src_tokens": 64,
        "train.max_tgt_tokens": 48,
        "train.patience": 5,
        "train.eval_every": 300,
        "train.max_steps": 1500,
        "decode.beam": 4,
        # a 500-symbol vocabulary splits titles into 20-30 pieces
        "decode.max_len": 48,
    },
}


def _parse(key: str, raw: str) -> Any:
    default = DEFAULTS[key]
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw


class RunConfig(dict):
    """Flat mapping of dotted keys; only keys present in ``DEFAULTS`` exist."""

    def __init__(self, preset: str | None = None):
        super().__init__(DEFAULTS)
        if preset is not None:
            if preset not in PRESETS:
                raise ConfigError(f"unknown preset {preset!r} (choose from {', '.join(PRESETS)})")
            self.update(PRESETS[preset])

    def set(self, key: str, value: Any) -> None:
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        self[key] = _parse(key, value) if isinstance(value, str) else value

    def merge_text(self, text: str, source: str = "<config>") -> None:
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
            try:
                self.set(key.strip(), value)
            except ConfigError as e:
                raise ConfigError(f"{source}:{lineno}: {e}") from None

    def merge_file(self, path) -> None:
        with open(path, encoding="utf-8") as f:
            self.merge_text(f.read(), str(path))

    def merge_overrides(self, items: list[str]) -> None:
        for item in items:
            key, sep, value = item.partition("=")
            if not sep:
                raise ConfigError(f"override {item!r} must look like key=value")
            self.set(key.strip(), value)

    # -- views for the individual components ------------------------------
    def filter_spec(self) -> FilterSpec:
        return FilterSpec(
            self["data.min_title_words"],
            self["data.max_title_words"],
            self["data.min_body_words"],
            self["data.max_body_words"],
            self["data.exclude_obituaries"],
        )

    def ut_config(self, vocab_size: int) -> UtConfig:
        return UtConfig(
            vocab_size=vocab_size,
            d_model=self["model.d_model"],
            n_heads=self["model.n_heads"],
            n_steps=self["model.n_steps"],
            d_ff=self["model.d_ff"],
            dropout_p=self["model.dropout"],
            max_src_len=self["train.max_src_tokens"],
            tie_output=self["model.tie_output"],
            untied_depth=self["model.untied_depth"],
        )

    def rnn_config(self, vocab_size: int) -> RnnConfig:
        return RnnConfig(vocab_size=vocab_size, d_model=self["model.d_model"], max_src_len=self["train.max_src_tokens"])

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            warmup_steps=self["train.warmup_steps"],
            adam_betas=(self["train.beta1"], self["train.beta2"]),
            adam_eps=self["train.adam_eps"],
            label_smoothing_eps=self["train.label_smoothing"],
            lr_scale=self["train.lr_scale"],
            batch_tokens=self["train.batch_tokens"],
            max_src_tokens=self["train.max_src_tokens"],
            max_tgt_tokens=self["train.max_tgt_tokens"],
            clip_norm=self["train.clip_norm"],
            patience=self["train.patience"],
            eval_every=self["train.eval_every"],
            max_epochs=self["train.max_epochs"],
            max_steps=self["train.max_steps"],
            max_seconds=self["train.max_seconds"],
            seed=self["seed"],
        )

    def dumps(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in sorted(self.items()))


def component_rng(seed: int, name: str) -> np.random.Generator:
    """Independent, reproducible stream for one pipeline component."""
    return np.random.default_rng([seed, zlib.crc32(name.encode("utf-8"))])


def from_sources(
    preset: str | None = None, path=None, overrides: list[str] | None = None, extra: Mapping[str, Any] | None = None
) -> RunConfig:
    """Defaults, then preset, then config file, then explicit overrides."""
    cfg = RunConfig(preset)
    if path is not None:
        cfg.merge_file(path)
    for k, v in (extra or {}).items():
        if v is not None:
            cfg.set(k, v)
    cfg.merge_overrides(overrides or [])
    return cfg
