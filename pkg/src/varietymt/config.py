"""Declarative run configuration (INI-style sections of key = value)."""

from __future__ import annotations

import configparser
import dataclasses
import io
import typing
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .errors import ConfigurationError


@dataclass
class RunSection:
    recipe: str = "mc2"
    scenario: str = "semi"
    labeled_fraction: str = "2/3"
    seed: int = 1
    variety_a: str = "A"
    variety_b: str = "B"


@dataclass
class DataSection:
    # "synthetic" generates data; "files" reads the paths below (relative to the workspace)
    source: str = "synthetic"
    train_a_src: str = ""
    train_a_tgt: str = ""
    train_b_src: str = ""
    train_b_tgt: str = ""
    dev_a_src: str = ""
    dev_a_tgt: str = ""
    dev_b_src: str = ""
    dev_b_tgt: str = ""
    test_a_src: str = ""
    test_a_tgt: str = ""
    test_b_src: str = ""
    test_b_tgt: str = ""
    max_len: int = 70
    transliterate_a: bool = False
    transliterate_b: bool = False
    # optional dataset directory to train the classifier on (must not overlap NMT training data)
    classifier_data: str = ""


@dataclass
class SynthSection:
    vocab_size: int = 100
    n_pairs_a: int = 1000
    n_pairs_b: int = 1000
    divergence_rate: float = 0.3
    len_min: int = 3
    len_max: int = 12
    n_dev: int = 100
    n_test: int = 200


@dataclass
class SubwordSection:
    vocab_size: int = 1000


@dataclass
class ClassifierSection:
    word_ngram_max: int = 2
    char_ngram_min: int = 2
    char_ngram_max: int = 5
    hash_buckets: int = 1 << 20
    embed_dim: int = 16
    epochs: int = 5
    lr: float = 0.1
    balance: bool = True


@dataclass
class ModelSection:
    num_layers: int = 2
    model_dim: int = 64
    num_heads: int = 4
    ffn_dim: int = 256
    dropout: float = 0.1
    max_positions: int = 128
    share_embeddings: bool = True


@dataclass
class TrainingSection:
    peak_lr_factor: float = 0.5
    warmup_steps: int = 100
    batch_tokens: int = 1024
    total_steps: int = 400
    checkpoint_every: int = 200
    label_smoothing: float = 0.1
    max_len: int = 70


@dataclass
class DecodeSection:
    beam_size: int = 4
    max_len: int = 70
    length_penalty: float = 1.0
    select_beam_size: int = 1


@dataclass
class EvalSection:
    n_resamples: int = 1000
    alpha: float = 0.05


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    data: DataSection = field(default_factory=DataSection)
    synth: SynthSection = field(default_factory=SynthSection)
    subword: SubwordSection = field(default_factory=SubwordSection)
    classifier: ClassifierSection = field(default_factory=ClassifierSection)
    model: ModelSection = field(default_factory=ModelSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    decode: DecodeSection = field(default_factory=DecodeSection)
    eval: EvalSection = field(default_factory=EvalSection)

    @property
    def labeled_fraction(self) -> Fraction:
        try:
            return Fraction(self.run.labeled_fraction)
        except (ValueError, ZeroDivisionError):
            raise ConfigurationError(f"bad labeled_fraction {self.run.labeled_fraction!r}") from None

    def dumps(self) -> str:
        parser = configparser.ConfigParser()
        for section in dataclasses.fields(self):
            values = dataclasses.asdict(getattr(self, section.name))
            parser[section.name] = {k: _format(v) for k, v in values.items()}
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _coerce(raw: str, kind, where: str):
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigurationError(f"{where}: cannot read {raw!r} as {kind.__name__}") from None


def parse_config(text: str, origin: str = "<config>") -> RunConfig:
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text, source=origin)
    except configparser.Error as exc:
        raise ConfigurationError(f"{origin}: {exc}") from None
    config = RunConfig()
    sections = {f.name: f for f in dataclasses.fields(config)}
    for name in parser.sections():
        if name not in sections:
            raise ConfigurationError(f"{origin}: unknown section [{name}]")
        target = getattr(config, name)
        hints = typing.get_type_hints(type(target))
        for key, raw in parser[name].items():
            if key not in hints:
                raise ConfigurationError(f"{origin}: unknown key {key!r} in [{name}]")
            setattr(target, key, _coerce(raw, hints[key], f"{origin} [{name}] {key}"))
    return config


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))
