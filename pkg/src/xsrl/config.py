"""Experiment configuration and its ``key = value`` file format."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

from .trees import ENCODERS


class ConfigError(ValueError):
    pass


def default_seed() -> int:
    return int(os.environ.get("SRL_SEED", "1"))


@dataclass
class ExperimentConfig:
    # data
    data_dir: str = "data"
    syntax: str = "gold"  # gold | auto
    sources: list[str] = field(default_factory=lambda: ["en"])
    target: str = ""
    # features
    word: bool = True
    lemma: bool = False
    pos: bool = True
    context: str = ""  # path to a context-vector file; empty disables the block
    tree: str = "gcn"  # treelstm | gcn | none
    ho: str = ""  # pretrained GNN checkpoint; empty disables the block
    freeze_embeddings: bool = False
    # sizes
    word_dim: int = 300
    lemma_dim: int = 300
    pos_dim: int = 100
    tree_hidden: int = 300
    gcn_layers: int = 2
    encoder: str = "pgn"  # pgn | basic
    encoder_hidden: int = 650
    encoder_layers: int = 2
    lang_dim: int = 8
    d_r: int = 300
    # training
    lr: float = 0.001
    batch_size: int = 30
    epochs: int = 0  # 0: 80 for one source, 300 for several
    dropout: float = 0.3
    alpha_p: float = 0.4
    alpha_a: float = 0.7
    unary_weight: float = 1.0
    gold_beam_inject: bool = False
    min_count: int = 1
    seed: int = field(default_factory=default_seed)
    output: str = ""  # checkpoint path written at the end of training

    def __post_init__(self):
        if isinstance(self.sources, str):
            self.sources = _parse_list(self.sources)

    @property
    def multi_source(self) -> bool:
        return len(self.sources) > 1

    @property
    def n_epochs(self) -> int:
        if self.epochs:
            return self.epochs
        return 300 if self.multi_source else 80

    @property
    def feature_flags(self) -> list[str]:
        flags = [name for name in ("word", "lemma", "pos") if getattr(self, name)]
        if self.context:
            flags.append("context")
        if self.tree != "none":
            flags.append("tree")
        if self.ho:
            flags.append("ho")
        return flags

    def validate(self) -> "ExperimentConfig":
        if self.encoder not in ("pgn", "basic"):
            raise ConfigError(f"encoder must be pgn or basic, got {self.encoder!r}")
        if self.encoder == "pgn" and len(self.sources) < 1:
            raise ConfigError("pgn mode requires at least one source language")
        if self.encoder == "basic" and len(self.sources) != 1:
            raise ConfigError(f"basic mode requires exactly one source language, got {self.sources}")
        if self.tree not in ENCODERS:
            raise ConfigError(f"tree must be one of {ENCODERS}, got {self.tree!r}")
        if self.syntax not in ("gold", "auto"):
            raise ConfigError(f"syntax must be gold or auto, got {self.syntax!r}")
        if self.tree != "none" and not any((self.word, self.lemma, self.pos, self.context)):
            raise ConfigError("tree encoder needs at least one of word/lemma/pos/context as its input")
        if not self.feature_flags:
            raise ConfigError("no input features enabled")
        for name in ("alpha_p", "alpha_a"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in (0, 1]")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        return self

    def corpus_path(self, language: str, split: str) -> Path:
        suffix = ".auto" if self.syntax == "auto" else ""
        return Path(self.data_dir) / f"{language}.{split}{suffix}.conllu"

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, list):
                value = ",".join(value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _parse_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def coerce(name: str, raw):
    if name not in _FIELDS:
        raise ConfigError(f"unknown config key {name!r}")
    default = getattr(ExperimentConfig(), name)
    if not isinstance(raw, str):
        return raw
    if isinstance(default, bool):
        low = raw.strip().lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
        return low in ("true", "1", "yes")
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{name}: expected an integer, got {raw!r}") from None
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{name}: expected a number, got {raw!r}") from None
    if isinstance(default, list):
        return _parse_list(raw)
    return raw.strip()


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key = key.strip()
        values[key] = coerce(key, value)
    return values


def load_config(path: str | Path | None = None, **overrides) -> ExperimentConfig:
    """File values first, then non-None ``overrides`` on top."""
    values = parse_config_text(Path(path).read_text(encoding="utf-8")) if path else {}
    for key, value in overrides.items():
        if value is not None:
            values[key] = coerce(key, value)
    return ExperimentConfig(**values).validate()
