"""Synthetic two-variety parallel data with a known word-for-word translation."""

from __future__ import annotations

import random
import string
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from .corpus import (ParallelCorpus, PartitionedDataset, Scenario, SentencePair, VarietyTag,
                     partition, save_dataset)
from .errors import ConfigurationError, FormatError


@dataclass(frozen=True)
class SynthConfig:
    vocab_size: int = 100
    n_pairs_a: int = 1000
    n_pairs_b: int = 1000
    divergence_rate: float = 0.15
    sentence_len_range: tuple[int, int] = (3, 12)
    seed: int = 0
    n_dev: int = 100
    n_test: int = 200
    scenario: Scenario = Scenario.SEMI_SUPERVISED
    labeled_fraction: Fraction = Fraction(2, 3)
    variety_names: tuple[str, str] = ("A", "B")

    def __post_init__(self):
        lo, hi = self.sentence_len_range
        if self.vocab_size < 2:
            raise ConfigurationError("synthetic vocab_size must be >= 2")
        if not 1 <= lo <= hi:
            raise ConfigurationError(f"bad sentence_len_range {self.sentence_len_range}")
        if not 0.0 <= self.divergence_rate <= 1.0:
            raise ConfigurationError("divergence_rate must lie in [0, 1]")
        if min(self.n_pairs_a, self.n_pairs_b, self.n_dev, self.n_test) < 0:
            raise ConfigurationError("pair counts must be non-negative")

    @property
    def n_diverged(self) -> int:
        return round(self.divergence_rate * self.vocab_size)


@dataclass
class VariantTable:
    """Source lexicon plus the A/B surface forms of diverged target words."""

    word_map: dict[str, str]
    variants: dict[str, tuple[str, str]] = field(default_factory=dict)

    def __post_init__(self):
        self.a_forms = {a for a, _ in self.variants.values()}
        self.b_forms = {b for _, b in self.variants.values()}

    def target_word(self, source_word: str, tag: VarietyTag) -> str:
        base = self.word_map[source_word]
        pair = self.variants.get(base)
        if pair is None:
            return base
        return pair[0] if tag is VarietyTag.A else pair[1]

    def translate(self, source: Sequence[str], tag: VarietyTag) -> tuple[str, ...]:
        return tuple(self.target_word(w, tag) for w in source)

    def forms(self, tag: VarietyTag) -> set[str]:
        return self.a_forms if tag is VarietyTag.A else self.b_forms

    def slot_counts(self, tokens: Sequence[str], expected: VarietyTag) -> tuple[int, int]:
        """(slots filled with the expected variant, all variety-marked slots)."""
        own, other = self.forms(expected), self.forms(_other(expected))
        hits = sum(t in own for t in tokens)
        return hits, hits + sum(t in other for t in tokens)

    def score_b(self, tokens: Sequence[str]) -> int:
        return sum(t in self.b_forms for t in tokens) - sum(t in self.a_forms for t in tokens)

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / "lexicon.tsv", "w", encoding="utf-8", newline="\n") as fh:
            for src, tgt in self.word_map.items():
                fh.write(f"{src}\t{tgt}\n")
        with open(directory / "variants.tsv", "w", encoding="utf-8", newline="\n") as fh:
            for base, (a, b) in self.variants.items():
                fh.write(f"{base}\t{a}\t{b}\n")

    @classmethod
    def load(cls, directory) -> "VariantTable":
        directory = Path(directory)
        word_map, variants = {}, {}
        for line in (directory / "lexicon.tsv").read_text(encoding="utf-8").splitlines():
            src, tgt = line.split("\t")
            word_map[src] = tgt
        for line in (directory / "variants.tsv").read_text(encoding="utf-8").splitlines():
            cols = line.split("\t")
            if len(cols) != 3:
                raise FormatError(f"variants.tsv: expected base, A and B columns in {line!r}")
            variants[cols[0]] = (cols[1], cols[2])
        return cls(word_map, variants)


def _other(tag: VarietyTag) -> VarietyTag:
    return VarietyTag.B if tag is VarietyTag.A else VarietyTag.A


def _fresh_words(rng: random.Random, n: int, taken: set[str]) -> list[str]:
    words = []
    while len(words) < n:
        w = "".join(rng.choice(string.ascii_lowercase) for _ in range(rng.randint(3, 7)))
        if w not in taken:
            taken.add(w)
            words.append(w)
    return words


def build_table(config: SynthConfig, rng: random.Random) -> VariantTable:
    taken: set[str] = set()
    sources = _fresh_words(rng, config.vocab_size, taken)
    targets = _fresh_words(rng, config.vocab_size, taken)
    diverged = rng.sample(targets, config.n_diverged)
    variants = {}
    for base in sorted(diverged, key=targets.index):
        a, b = _fresh_words(rng, 2, taken)
        variants[base] = (a, b)
    return VariantTable(dict(zip(sources, targets)), variants)


def generate(config: SynthConfig) -> tuple[PartitionedDataset, VariantTable]:
    """Random source sentences translated word for word into each variety.

    Source sentences are unique across every split, so a target sentence
    identifies its pair and its ground-truth variety.
    """
    rng = random.Random(config.seed)
    table = build_table(config, rng)
    vocab = list(table.word_map)
    lo, hi = config.sentence_len_range
    total = config.n_pairs_a + config.n_pairs_b + 2 * (config.n_dev + config.n_test)
    space = sum(len(vocab) ** n for n in range(lo, hi + 1))
    if total > space // 2:
        raise ConfigurationError(f"cannot draw {total} unique sentences from this lexicon")
    seen: set[tuple[str, ...]] = set()

    def draw(n: int, tag: VarietyTag) -> ParallelCorpus:
        pairs = []
        while len(pairs) < n:
            src = tuple(rng.choice(vocab) for _ in range(rng.randint(lo, hi)))
            if src in seen:
                continue
            seen.add(src)
            pairs.append(SentencePair(src, table.translate(src, tag), tag))
        return ParallelCorpus(pairs, config.variety_names)

    A, B = VarietyTag.A, VarietyTag.B
    train_a, train_b = draw(config.n_pairs_a, A), draw(config.n_pairs_b, B)
    dev_a, dev_b = draw(config.n_dev, A), draw(config.n_dev, B)
    test_a, test_b = draw(config.n_test, A), draw(config.n_test, B)
    data = partition(train_a, train_b, dev_a, dev_b, test_a, test_b,
                     config.scenario, config.labeled_fraction, config.seed)
    return data, table


def truth_table(data: PartitionedDataset) -> dict[str, VarietyTag]:
    """Target sentence -> ground-truth variety over every split (for oracle ensembles)."""
    table: dict[str, VarietyTag] = {}
    restored_a, restored_b = data.restored_corpora()
    for pairs in (restored_a, restored_b, data.dev_a.pairs, data.dev_b.pairs,
                  data.test_a.pairs, data.test_b.pairs):
        for p in pairs:
            table[" ".join(p.target)] = p.tag
    return table


def write_synthetic(config: SynthConfig, directory) -> tuple[PartitionedDataset, VariantTable]:
    data, table = generate(config)
    save_dataset(data, directory)
    table.save(directory)
    return data, table

