"""Parallel corpus ingestion, cleaning and partitioning into data scenarios."""

from __future__ import annotations

import configparser
import enum
import random
import unicodedata
from collections import Counter
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from .errors import AlignmentError, ConfigurationError, ContaminationError, DataError, FormatError

DEFAULT_MAX_LEN = 70
DEFAULT_LABELED_FRACTION = Fraction(2, 3)


class VarietyTag(enum.Enum):
    A = "A"
    B = "B"
    UNLABELED = "U"

    @classmethod
    def parse(cls, value: str) -> "VarietyTag":
        key = value.strip().upper()
        if key in ("U", "UNLABELED", "NONE", "-"):
            return cls.UNLABELED
        try:
            return cls(key)
        except ValueError:
            raise ConfigurationError(f"unknown variety tag {value!r}") from None


class Scenario(enum.Enum):
    SUPERVISED = "supervised"
    UNSUPERVISED = "unsupervised"
    SEMI_SUPERVISED = "semi"

    @classmethod
    def parse(cls, value: str) -> "Scenario":
        aliases = {"semi-supervised": "semi", "semisupervised": "semi", "sup": "supervised",
                   "unsup": "unsupervised"}
        key = value.strip().lower()
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ConfigurationError(f"unknown scenario {value!r}") from None


@dataclass(frozen=True)
class SentencePair:
    source: tuple[str, ...]
    target: tuple[str, ...]
    tag: VarietyTag = VarietyTag.UNLABELED

    @property
    def key(self) -> tuple[tuple[str, ...], tuple[str, ...]]:
        return (self.source, self.target)


@dataclass
class ParallelCorpus:
    pairs: list[SentencePair] = field(default_factory=list)
    variety_names: tuple[str, str] = ("A", "B")

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def with_tag(self, tag: VarietyTag) -> "ParallelCorpus":
        return ParallelCorpus([replace(p, tag=tag) for p in self.pairs], self.variety_names)


# -- tokenization -----------------------------------------------------------

def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize(text: str) -> list[str]:
    """Split on whitespace, then peel leading/trailing punctuation off each chunk.

    >>> tokenize("I'm going, now.")
    ["I'm", 'going', ',', 'now', '.']
    """
    tokens: list[str] = []
    for chunk in text.split():
        start, end = 0, len(chunk)
        while start < end and _is_punct(chunk[start]):
            start += 1
        while end > start and _is_punct(chunk[end - 1]):
            end -= 1
        tokens.extend(chunk[:start])
        if start < end:
            tokens.append(chunk[start:end])
        tokens.extend(chunk[end:])
    return tokens


def detokenize(tokens: Iterable[str]) -> str:
    return " ".join(tokens)


# -- Serbian Cyrillic -> Latin -----------------------------------------------

_SR_CYR_LAT = {
    "А": "A", "Б": "B", "В": "V", "Г": "G", "Д": "D", "Ђ": "Đ", "Е": "E", "Ж": "Ž",
    "З": "Z", "И": "I", "Ј": "J", "К": "K", "Л": "L", "Љ": "Lj", "М": "M", "Н": "N",
    "Њ": "Nj", "О": "O", "П": "P", "Р": "R", "С": "S", "Т": "T", "Ћ": "Ć", "У": "U",
    "Ф": "F", "Х": "H", "Ц": "C", "Ч": "Č", "Џ": "Dž", "Ш": "Š",
}
_SR_CYR_LAT.update({k.lower(): v.lower() for k, v in list(_SR_CYR_LAT.items())})
_SR_TABLE = str.maketrans(_SR_CYR_LAT)


def transliterate_sr_cyrillic_to_latin(text: str) -> str:
    return text.translate(_SR_TABLE)


# -- loading and filtering ---------------------------------------------------

def _read_lines(path: Path) -> list[str]:
    raw = Path(path).read_bytes()
    lines = raw.split(b"\n")
    if lines and lines[-1] == b"":
        lines.pop()
    out = []
    for lineno, line in enumerate(lines, start=1):
        try:
            out.append(line.decode("utf-8").rstrip("\r"))
        except UnicodeDecodeError as exc:
            raise FormatError(f"{path}:{lineno}: invalid UTF-8 ({exc.reason})") from None
    return out


def load_parallel(source_path, target_path, tag: VarietyTag,
                  variety_names: tuple[str, str] = ("A", "B"),
                  transliterate_target: bool = False) -> ParallelCorpus:
    src_lines = _read_lines(source_path)
    tgt_lines = _read_lines(target_path)
    if len(src_lines) != len(tgt_lines):
        raise AlignmentError(
            f"line counts differ: {source_path} vs {target_path}: "
            f"{len(src_lines)} vs {len(tgt_lines)}")
    pairs = []
    for s, t in zip(src_lines, tgt_lines):
        if transliterate_target:
            t = transliterate_sr_cyrillic_to_latin(t)
        pairs.append(SentencePair(tuple(tokenize(s)), tuple(tokenize(t)), tag))
    return ParallelCorpus(pairs, variety_names)


def filter_by_length(corpus: ParallelCorpus, max_len: int = DEFAULT_MAX_LEN) -> ParallelCorpus:
    if max_len < 1:
        raise ConfigurationError(f"max_len must be >= 1, got {max_len}")
    kept = [p for p in corpus.pairs if len(p.source) <= max_len and len(p.target) <= max_len]
    return ParallelCorpus(kept, corpus.variety_names)


def drop_empty(corpus: ParallelCorpus) -> ParallelCorpus:
    return ParallelCorpus([p for p in corpus.pairs if p.source and p.target], corpus.variety_names)


# -- partitioning ------------------------------------------------------------

@dataclass
class PartitionedDataset:
    labeled_a: ParallelCorpus
    labeled_b: ParallelCorpus
    unlabeled: ParallelCorpus
    dev_a: ParallelCorpus
    dev_b: ParallelCorpus
    test_a: ParallelCorpus
    test_b: ParallelCorpus
    scenario: Scenario
    labeled_fraction: Fraction
    seed: int = 0
    # ground-truth tags of `unlabeled`, kept out of band
    unlabeled_truth: list[VarietyTag] = field(default_factory=list)

    @property
    def variety_names(self) -> tuple[str, str]:
        return self.dev_a.variety_names

    def counts(self) -> dict[str, int]:
        return {name: len(getattr(self, name)) for name in PARTITION_NAMES}

    def restored_corpora(self) -> tuple[list[SentencePair], list[SentencePair]]:
        """Training pairs per variety with ground-truth tags restored."""
        a = list(self.labeled_a.pairs)
        b = list(self.labeled_b.pairs)
        for pair, tag in zip(self.unlabeled.pairs, self.unlabeled_truth):
            (a if tag is VarietyTag.A else b).append(replace(pair, tag=tag))
        return a, b


PARTITION_NAMES = ("labeled_a", "labeled_b", "unlabeled", "dev_a", "dev_b", "test_a", "test_b")


def _labeled_count(n: int, fraction: Fraction) -> int:
    # round half up, exact
    return int((fraction * n + Fraction(1, 2)) // 1)


def check_contamination(training: Sequence[ParallelCorpus], held_out: Sequence[ParallelCorpus]) -> None:
    train_keys = {p.key for c in training for p in c.pairs}
    offending = [p.key for c in held_out for p in c.pairs if p.key in train_keys]
    if offending:
        preview = "; ".join(f"{' '.join(s)} ||| {' '.join(t)}" for s, t in offending[:5])
        raise ContaminationError(
            f"{len(offending)} dev/test pairs also occur in training data: {preview}", offending)


def partition(corpus_a: ParallelCorpus, corpus_b: ParallelCorpus,
              dev_a: ParallelCorpus, dev_b: ParallelCorpus,
              test_a: ParallelCorpus, test_b: ParallelCorpus,
              scenario: Scenario = Scenario.SEMI_SUPERVISED,
              labeled_fraction: Fraction | float | str = DEFAULT_LABELED_FRACTION,
              seed: int = 0) -> PartitionedDataset:
    """Split the two varieties' training data into labeled and unlabeled pools.

    In the semi-supervised scenario each variety is shuffled with its own
    seeded RNG and the first ``round(fraction * n)`` pairs stay labeled; the
    rest lose their tag and are pooled as unlabeled (A remainder first).
    """
    fraction = Fraction(labeled_fraction).limit_denominator(10**6) \
        if not isinstance(labeled_fraction, Fraction) else labeled_fraction
    if not 0 <= fraction <= 1:
        raise ConfigurationError(f"labeled_fraction must lie in [0, 1], got {fraction}")
    check_contamination([corpus_a, corpus_b], [dev_a, dev_b, test_a, test_b])

    names = corpus_a.variety_names
    a_pairs = [replace(p, tag=VarietyTag.A) for p in corpus_a.pairs]
    b_pairs = [replace(p, tag=VarietyTag.B) for p in corpus_b.pairs]

    if scenario is Scenario.SUPERVISED:
        fraction = Fraction(1)
    elif scenario is Scenario.UNSUPERVISED:
        fraction = Fraction(0)

    labeled: dict[str, list[SentencePair]] = {}
    rest: dict[str, list[SentencePair]] = {}
    for offset, (key, pairs) in enumerate((("a", a_pairs), ("b", b_pairs))):
        order = list(range(len(pairs)))
        random.Random(seed * 2 + offset).shuffle(order)
        k = _labeled_count(len(pairs), fraction)
        chosen = sorted(order[:k])
        dropped = sorted(order[k:])
        labeled[key] = [pairs[i] for i in chosen]
        rest[key] = [pairs[i] for i in dropped]

    unlabeled = [replace(p, tag=VarietyTag.UNLABELED) for p in rest["a"] + rest["b"]]
    truth = [VarietyTag.A] * len(rest["a"]) + [VarietyTag.B] * len(rest["b"])
    return PartitionedDataset(
        labeled_a=ParallelCorpus(labeled["a"], names),
        labeled_b=ParallelCorpus(labeled["b"], names),
        unlabeled=ParallelCorpus(unlabeled, names),
        dev_a=dev_a.with_tag(VarietyTag.A),
        dev_b=dev_b.with_tag(VarietyTag.B),
        test_a=test_a.with_tag(VarietyTag.A),
        test_b=test_b.with_tag(VarietyTag.B),
        scenario=scenario,
        labeled_fraction=fraction,
        seed=seed,
        unlabeled_truth=truth,
    )


def validate_dataset(data: PartitionedDataset) -> None:
    """Raise DataError if any partition invariant is broken."""
    if data.scenario is Scenario.SUPERVISED and len(data.unlabeled):
        raise DataError("supervised dataset has unlabeled pairs")
    if data.scenario is Scenario.UNSUPERVISED and (len(data.labeled_a) or len(data.labeled_b)):
        raise DataError("unsupervised dataset has labeled pairs")
    expected = {"labeled_a": VarietyTag.A, "labeled_b": VarietyTag.B,
                "unlabeled": VarietyTag.UNLABELED, "dev_a": VarietyTag.A, "dev_b": VarietyTag.B,
                "test_a": VarietyTag.A, "test_b": VarietyTag.B}
    seen: Counter = Counter()
    for name, tag in expected.items():
        for pair in getattr(data, name).pairs:
            if pair.tag is not tag:
                raise DataError(f"{name} contains a pair tagged {pair.tag.value}")
        seen.update({p.key for p in getattr(data, name).pairs})
    shared = [k for k, c in seen.items() if c > 1]
    if shared:
        raise ContaminationError(f"{len(shared)} pairs occur in more than one partition", shared)
    if len(data.unlabeled_truth) not in (0, len(data.unlabeled)):
        raise DataError("ground-truth side channel does not match the unlabeled pool")


# -- on-disk format ------------------------------------------------------------

def write_corpus(corpus: ParallelCorpus, stem: Path) -> None:
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    with open(f"{stem}.src", "w", encoding="utf-8", newline="\n") as fs, \
            open(f"{stem}.tgt", "w", encoding="utf-8", newline="\n") as ft:
        for p in corpus.pairs:
            fs.write(detokenize(p.source) + "\n")
            ft.write(detokenize(p.target) + "\n")


def read_corpus(stem: Path, tag: VarietyTag, variety_names=("A", "B")) -> ParallelCorpus:
    return load_parallel(f"{stem}.src", f"{stem}.tgt", tag, variety_names)


def save_dataset(data: PartitionedDataset, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in PARTITION_NAMES:
        write_corpus(getattr(data, name), directory / name)
    (directory / "unlabeled.truth").write_text(
        "".join(t.value + "\n" for t in data.unlabeled_truth), encoding="utf-8")
    manifest = configparser.ConfigParser()
    manifest["dataset"] = {
        "scenario": data.scenario.value,
        "labeled_fraction": str(data.labeled_fraction),
        "seed": str(data.seed),
        "variety_a": data.variety_names[0],
        "variety_b": data.variety_names[1],
    }
    manifest["counts"] = {k: str(v) for k, v in data.counts().items()}
    with open(directory / "manifest.ini", "w", encoding="utf-8") as fh:
        manifest.write(fh)
    return directory


def load_dataset(directory) -> PartitionedDataset:
    directory = Path(directory)
    manifest = configparser.ConfigParser()
    if not manifest.read(directory / "manifest.ini", encoding="utf-8"):
        raise FormatError(f"{directory}: missing manifest.ini")
    meta = manifest["dataset"]
    names = (meta["variety_a"], meta["variety_b"])
    tags = {"labeled_a": VarietyTag.A, "labeled_b": VarietyTag.B, "unlabeled": VarietyTag.UNLABELED,
            "dev_a": VarietyTag.A, "dev_b": VarietyTag.B, "test_a": VarietyTag.A,
            "test_b": VarietyTag.B}
    parts = {name: read_corpus(directory / name, tag, names) for name, tag in tags.items()}
    for name, corpus in parts.items():
        if len(corpus) != manifest.getint("counts", name):
            raise FormatError(f"{directory}/{name}: manifest says {manifest['counts'][name]} pairs, "
                              f"found {len(corpus)}")
    truth_path = directory / "unlabeled.truth"
    truth = [VarietyTag.parse(x) for x in _read_lines(truth_path)] if truth_path.exists() else []
    return PartitionedDataset(scenario=Scenario.parse(meta["scenario"]),
                              labeled_fraction=Fraction(meta["labeled_fraction"]),
                              seed=int(meta["seed"]), unlabeled_truth=truth, **parts)
