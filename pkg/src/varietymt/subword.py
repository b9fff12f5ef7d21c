"""Byte-pair-encoding subword model shared by source and both target varieties."""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigurationError, FormatError

EOW = "</w>"
PAD, BOS, EOS, UNK = "<pad>", "<s>", "</s>", "<unk>"
FORMAT_VERSION = 1
_HEADER = "#varietymt-bpe"


def variety_token(name: str) -> str:
    return f"<2{name}>"


@dataclass
class SubwordModel:
    merges: list[tuple[str, str]]
    vocab: dict[str, int]
    specials: list[str]
    target_vocab_size: int
    _ranks: dict[tuple[str, str], int] = field(init=False, repr=False, compare=False)
    _cache: dict[str, tuple[str, ...]] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self._ranks = {pair: i for i, pair in enumerate(self.merges)}
        self._cache = {}
        self.id_to_token = [None] * len(self.vocab)
        for tok, i in self.vocab.items():
            self.id_to_token[i] = tok

    def __len__(self) -> int:
        return len(self.vocab)

    @property
    def pad_id(self) -> int:
        return self.vocab[PAD]

    @property
    def bos_id(self) -> int:
        return self.vocab[BOS]

    @property
    def eos_id(self) -> int:
        return self.vocab[EOS]

    @property
    def unk_id(self) -> int:
        return self.vocab[UNK]

    @property
    def variety_ids(self) -> dict[str, int]:
        """Variety letter ('A'/'B') -> special token id."""
        return {tok[2:-1]: self.vocab[tok] for tok in self.specials
                if tok.startswith("<2") and tok.endswith(">")}

    def special_ids(self) -> set[int]:
        return {self.vocab[t] for t in self.specials}

    def segment_token(self, token: str) -> tuple[str, ...]:
        cached = self._cache.get(token)
        if cached is not None:
            return cached
        symbols = [ch if ch in self.vocab else UNK for ch in token] + [EOW]
        while len(symbols) > 1:
            best_rank, best_i = None, -1
            for i in range(len(symbols) - 1):
                rank = self._ranks.get((symbols[i], symbols[i + 1]))
                if rank is not None and (best_rank is None or rank < best_rank):
                    best_rank, best_i = rank, i
            if best_rank is None:
                break
            pair = self.merges[best_rank]
            merged, i = [], 0
            while i < len(symbols):
                if i < len(symbols) - 1 and (symbols[i], symbols[i + 1]) == pair:
                    merged.append(symbols[i] + symbols[i + 1])
                    i += 2
                else:
                    merged.append(symbols[i])
                    i += 1
            symbols = merged
        result = tuple(symbols)
        self._cache[token] = result
        return result

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.vocab.get(u, self.unk_id) for u in segment(self, tokens)]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return desegment([self.id_to_token[i] for i in ids])

    # -- persistence ------------------------------------------------------

    def dumps(self) -> str:
        lines = [f"{_HEADER}\t{FORMAT_VERSION}\t{len(self.vocab)}\t{self.target_vocab_size}"
                 f"\t{len(self.specials)}\t{len(self.merges)}"]
        lines += [f"special\t{s}" for s in self.specials]
        lines += [f"merge\t{a}\t{b}" for a, b in self.merges]
        lines += [f"vocab\t{tok}" for tok in self.id_to_token]
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8", newline="\n")

    @classmethod
    def loads(cls, text: str) -> "SubwordModel":
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        head = lines[0].split("\t") if lines else []
        if len(head) != 6 or head[0] != _HEADER:
            raise FormatError("not a subword model file")
        if int(head[1]) != FORMAT_VERSION:
            raise FormatError(f"unsupported subword model version {head[1]}")
        n_vocab, target, n_specials, n_merges = map(int, head[2:])
        specials, merges, tokens = [], [], []
        for lineno, line in enumerate(lines[1:], start=2):
            kind, *rest = line.split("\t")
            if kind == "special" and len(rest) == 1:
                specials.append(rest[0])
            elif kind == "merge" and len(rest) == 2:
                merges.append((rest[0], rest[1]))
            elif kind == "vocab" and len(rest) == 1:
                tokens.append(rest[0])
            else:
                raise FormatError(f"subword model line {lineno}: cannot parse {line!r}")
        if (len(specials), len(merges), len(tokens)) != (n_specials, n_merges, n_vocab):
            raise FormatError("subword model file is truncated or has inconsistent counts")
        return cls(merges, {tok: i for i, tok in enumerate(tokens)}, specials, target)

    @classmethod
    def load(cls, path) -> "SubwordModel":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def _word_counts(corpora) -> Counter:
    counts: Counter = Counter()
    for corpus in corpora:
        for pair in corpus:
            counts.update(pair.source)
            counts.update(pair.target)
    return counts


def train_subword(corpora, target_vocab_size: int = 1000, seed: int = 0,
                  varieties: Sequence[str] = ("A", "B")) -> SubwordModel:
    """Learn BPE merges over the source and target sides of ``corpora``.

    Each word starts as its characters followed by an end-of-word symbol; the
    most frequent adjacent pair is merged until the vocabulary (specials +
    base symbols + merged symbols) reaches ``target_vocab_size``.  Equal
    frequencies go to the lexicographically smallest pair.  ``seed`` is
    accepted for interface symmetry; training has no randomness.
    """
    corpora = list(corpora)
    if not corpora:
        raise ConfigurationError("train_subword needs at least one corpus")
    return train_subword_from_counts(_word_counts(corpora), target_vocab_size, varieties)


def train_subword_from_counts(word_counts: dict[str, int], target_vocab_size: int,
                              varieties: Sequence[str] = ("A", "B")) -> SubwordModel:
    specials = [PAD, BOS, EOS, UNK] + [variety_token(v) for v in varieties]
    alphabet = sorted({ch for w in word_counts for ch in w})
    base = alphabet + [EOW]
    floor = len(specials) + len(base)
    if target_vocab_size < floor:
        raise ConfigurationError(
            f"target_vocab_size={target_vocab_size} is below the floor of {floor} "
            f"({len(alphabet)} characters + end-of-word symbol + {len(specials)} specials)")

    vocab: dict[str, int] = {}
    for tok in specials + base:
        vocab.setdefault(tok, len(vocab))

    words = [list(w) + [EOW] for w in word_counts]
    freqs = [word_counts[w] for w in word_counts]
    stats: Counter = Counter()
    where: dict[tuple[str, str], set[int]] = defaultdict(set)
    for wi, syms in enumerate(words):
        for pair in zip(syms, syms[1:]):
            stats[pair] += freqs[wi]
            where[pair].add(wi)

    merges: list[tuple[str, str]] = []
    while len(vocab) < target_vocab_size:
        live = [(pair, c) for pair, c in stats.items() if c > 0]
        if not live:
            break
        best, _ = min(live, key=lambda kv: (-kv[1], kv[0]))
        merges.append(best)
        new_sym = best[0] + best[1]
        if new_sym not in vocab:
            vocab[new_sym] = len(vocab)
        for wi in sorted(where.pop(best, ())):
            syms = words[wi]
            f = freqs[wi]
            for pair in zip(syms, syms[1:]):
                stats[pair] -= f
            merged, i = [], 0
            while i < len(syms):
                if i < len(syms) - 1 and syms[i] == best[0] and syms[i + 1] == best[1]:
                    merged.append(new_sym)
                    i += 2
                else:
                    merged.append(syms[i])
                    i += 1
            words[wi] = merged
            for pair in zip(merged, merged[1:]):
                stats[pair] += f
                where[pair].add(wi)
        stats.pop(best, None)
    return SubwordModel(merges, vocab, specials, target_vocab_size)


def segment(model: SubwordModel, tokens: Sequence[str]) -> list[str]:
    units: list[str] = []
    for tok in tokens:
        units.extend(model.segment_token(tok))
    return units


def desegment(units: Sequence[str]) -> list[str]:
    """Glue units back into words, splitting at end-of-word markers; specials vanish."""
    specials = {PAD, BOS, EOS, UNK}
    text = "".join(u for u in units
                   if u not in specials and not (u.startswith("<2") and u.endswith(">")))
    return [w for w in text.split(EOW) if w]
