"""Linear n-gram variety classifiers, five-member ensembles and ROC AUC.

The classifier is a fastText-style bag of hashed word and character n-grams:
a sentence is the mean of its feature embeddings, scored by a 2 x dim output
matrix (no bias) and a softmax.  Ensembles combine five such members either by
summing class probabilities (``soft_fuse``) or by strict majority with
abstention (``majority_abstain``).
"""

from __future__ import annotations

import json
import math
import random
import struct
from collections import Counter
from dataclasses import asdict, dataclass
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from .corpus import VarietyTag, tokenize
from .errors import (ConfigurationError, EmptyDataError, FormatError, NumericError,
                     UndefinedMetricError)

CLASSES = (VarietyTag.A, VarietyTag.B)
ENSEMBLE_SIZE = 5
_MAGIC = b"VMTVARID"
_VERSION = 1

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class FeatureConfig:
    word_ngram_max: int = 2
    char_ngram_min: int = 2
    char_ngram_max: int = 5
    hash_buckets: int = 1 << 20
    embed_dim: int = 16

    def __post_init__(self):
        if self.word_ngram_max < 1:
            raise ConfigurationError("word_ngram_max must be >= 1")
        if self.char_ngram_max and not 1 <= self.char_ngram_min <= self.char_ngram_max:
            raise ConfigurationError("need 1 <= char_ngram_min <= char_ngram_max "
                                     "(or char_ngram_max = 0 to disable)")
        b = self.hash_buckets
        if b < 1 << 10 or b & (b - 1):
            raise ConfigurationError(f"hash_buckets must be a power of two >= 1024, got {b}")
        if self.embed_dim < 1:
            raise ConfigurationError("embed_dim must be positive")


def fnv1a_64(data: bytes, basis: int = FNV_OFFSET) -> int:
    h = basis
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


@lru_cache(maxsize=1 << 18)
def _type_basis(kind: str, n: int) -> int:
    # each n-gram type gets its own FNV starting state
    return fnv1a_64(f"{kind}{n}\x00".encode())


@lru_cache(maxsize=1 << 20)
def _hash_gram(kind: str, n: int, gram: str, buckets: int) -> int:
    return fnv1a_64(gram.encode("utf-8"), _type_basis(kind, n)) & (buckets - 1)


def extract_features(text: str, config: FeatureConfig) -> Counter:
    """Multiset of hashed n-gram ids for a target-side sentence."""
    tokens = tokenize(text)
    feats: Counter = Counter()
    if not tokens:
        return feats
    b = config.hash_buckets
    for n in range(1, config.word_ngram_max + 1):
        for i in range(len(tokens) - n + 1):
            feats[_hash_gram("w", n, " ".join(tokens[i:i + n]), b)] += 1
    if config.char_ngram_max:
        padded = "<" + " ".join(tokens) + ">"
        for n in range(config.char_ngram_min, config.char_ngram_max + 1):
            for i in range(len(padded) - n + 1):
                feats[_hash_gram("c", n, padded[i:i + n], b)] += 1
    return feats


def _as_tag(label) -> VarietyTag:
    return label if isinstance(label, VarietyTag) else VarietyTag.parse(str(label))


def oversample(examples: Sequence[tuple[str, VarietyTag]], seed: int = 0) -> list[tuple[str, VarietyTag]]:
    """Balance the classes by drawing minority examples with replacement."""
    by_class: dict[VarietyTag, list] = {c: [] for c in CLASSES}
    for text, tag in examples:
        tag = _as_tag(tag)
        if tag not in by_class:
            raise ConfigurationError(f"cannot train on tag {tag.value}")
        by_class[tag].append((text, tag))
    if any(not v for v in by_class.values()):
        raise ConfigurationError("oversampling needs examples of both varieties")
    rng = random.Random(seed)
    target = max(len(v) for v in by_class.values())
    out = []
    for tag in CLASSES:
        group = by_class[tag]
        out.extend(group)
        out.extend(rng.choice(group) for _ in range(target - len(group)))
    rng.shuffle(out)
    return out


class ProbabilityModel(Protocol):
    def predict_proba(self, sentence: str) -> tuple[float, float]: ...


class LinearVarietyClassifier:
    def __init__(self, config: FeatureConfig, seed: int = 0,
                 input_embeddings: np.ndarray | None = None,
                 output_weights: np.ndarray | None = None):
        self.config = config
        self.seed = seed
        self.classes = CLASSES
        if input_embeddings is None or output_weights is None:
            rng = np.random.default_rng(seed)
            bound = 1.0 / config.embed_dim
            input_embeddings = rng.uniform(-bound, bound, (config.hash_buckets, config.embed_dim))
            output_weights = rng.uniform(-bound, bound, (2, config.embed_dim))
        self.input_embeddings = np.ascontiguousarray(input_embeddings, dtype=np.float64)
        self.output_weights = np.ascontiguousarray(output_weights, dtype=np.float64)

    def _features(self, sentence: str) -> tuple[np.ndarray, np.ndarray]:
        feats = extract_features(sentence, self.config)
        ids = np.fromiter(feats.keys(), dtype=np.int64, count=len(feats))
        weights = np.fromiter(feats.values(), dtype=np.float64, count=len(feats))
        if len(weights):
            weights /= weights.sum()
        return ids, weights

    def _hidden(self, ids, weights) -> np.ndarray:
        if not len(ids):
            return np.zeros(self.config.embed_dim)
        return weights @ self.input_embeddings[ids]

    def predict_proba(self, sentence: str) -> tuple[float, float]:
        ids, weights = self._features(sentence)
        p = _softmax2(self.output_weights @ self._hidden(ids, weights))
        return float(p[0]), float(p[1])

    def score_b(self, sentence: str) -> float:
        return self.predict_proba(sentence)[1]


def _softmax2(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def train_classifier(examples: Sequence[tuple[str, VarietyTag]], config: FeatureConfig = FeatureConfig(),
                     epochs: int = 5, lr: float = 0.1, seed: int = 0) -> LinearVarietyClassifier:
    """Seeded SGD on cross-entropy with a learning rate decaying linearly to zero."""
    if not examples:
        raise EmptyDataError("cannot train a classifier on an empty set")
    labels = [_as_tag(t) for _, t in examples]
    if len(set(labels)) < 2:
        raise ConfigurationError("classifier training needs examples of both varieties")
    if lr <= 0 or epochs < 1:
        raise ConfigurationError("lr must be positive and epochs >= 1")
    model = LinearVarietyClassifier(config, seed)
    feats = [model._features(text) for text, _ in examples]
    targets = [CLASSES.index(t) for t in labels]
    E, W = model.input_embeddings, model.output_weights
    rng = random.Random(seed)
    order = list(range(len(examples)))
    total = epochs * len(order)
    step = 0
    for epoch in range(epochs):
        rng.shuffle(order)
        for i in order:
            rate = lr * (1.0 - step / total)
            step += 1
            ids, weights = feats[i]
            if not len(ids):
                continue
            h = weights @ E[ids]
            p = _softmax2(W @ h)
            loss = -math.log(max(p[targets[i]], 1e-300))
            if not math.isfinite(loss):
                raise NumericError(f"non-finite classifier loss at epoch {epoch}, step {step}")
            g = p.copy()
            g[targets[i]] -= 1.0
            grad_h = W.T @ g
            W -= rate * np.outer(g, h)
            np.add.at(E, ids, -rate * weights[:, None] * grad_h[None, :])
    if not (np.isfinite(E).all() and np.isfinite(W).all()):
        raise NumericError("classifier parameters became non-finite")
    return model


# -- voting ------------------------------------------------------------------

TIE_EPS = 1e-9


def soft_fuse(member_probs) -> VarietyTag:
    """Argmax of summed class probabilities; sums within TIE_EPS go to A."""
    probs = np.asarray(member_probs, dtype=np.float64).reshape(-1, 2)
    margin = math.fsum(probs[:, 0]) - math.fsum(probs[:, 1])
    return VarietyTag.A if margin >= -TIE_EPS else VarietyTag.B


def majority_abstain(member_probs) -> VarietyTag:
    """A label needs p > 0.5 (strictly) from a majority of members; else UNLABELED."""
    probs = np.asarray(member_probs, dtype=np.float64).reshape(-1, 2)
    need = len(probs) // 2 + 1
    if int((probs[:, 0] > 0.5).sum()) >= need:
        return VarietyTag.A
    if int((probs[:, 1] > 0.5).sum()) >= need:
        return VarietyTag.B
    return VarietyTag.UNLABELED


class VarietyEnsemble:
    def __init__(self, members: Sequence[ProbabilityModel]):
        if len(members) != ENSEMBLE_SIZE:
            raise ConfigurationError(f"an ensemble has exactly {ENSEMBLE_SIZE} members, got {len(members)}")
        configs = {getattr(m, "config", None) for m in members}
        if len(configs) > 1:
            raise ConfigurationError("ensemble members must share one FeatureConfig")
        self.members = list(members)

    @property
    def config(self) -> FeatureConfig | None:
        return getattr(self.members[0], "config", None)

    def member_probs(self, sentence: str) -> np.ndarray:
        return np.array([m.predict_proba(sentence) for m in self.members], dtype=np.float64)

    def soft_fuse(self, sentence: str) -> VarietyTag:
        return soft_fuse(self.member_probs(sentence))

    def majority_abstain(self, sentence: str) -> VarietyTag:
        return majority_abstain(self.member_probs(sentence))

    def score_b(self, sentence: str) -> float:
        """Mean probability of variety B; used for ROC AUC."""
        return float(self.member_probs(sentence)[:, 1].mean())

    def save(self, path) -> None:
        save_ensemble(self, path)


def ensemble_soft_fuse(ensemble: VarietyEnsemble, sentence: str) -> VarietyTag:
    return ensemble.soft_fuse(sentence)


def ensemble_majority_abstain(ensemble: VarietyEnsemble, sentence: str) -> VarietyTag:
    return ensemble.majority_abstain(sentence)


def member_seeds(seed: int) -> list[int]:
    return [seed * ENSEMBLE_SIZE + m for m in range(ENSEMBLE_SIZE)]


def train_ensemble(examples: Sequence[tuple[str, VarietyTag]], config: FeatureConfig = FeatureConfig(),
                   epochs: int = 5, lr: float = 0.1, seed: int = 0,
                   balance: bool = True, threads: int = 1) -> VarietyEnsemble:
    """Train five members on the same (optionally oversampled) data, differing only by seed."""
    data = oversample(examples, seed) if balance else list(examples)
    seeds = member_seeds(seed)
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(threads) as pool:
            members = list(pool.map(lambda s: train_classifier(data, config, epochs, lr, s), seeds))
    else:
        members = [train_classifier(data, config, epochs, lr, s) for s in seeds]
    return VarietyEnsemble(members)


class OracleClassifier:
    """Ground-truth member: looks sentences up in a known label table."""

    def __init__(self, table: dict[str, VarietyTag], confidence: float = 1.0):
        self.table = table
        self.confidence = confidence

    def predict_proba(self, sentence: str) -> tuple[float, float]:
        tag = self.table.get(sentence)
        if tag is VarietyTag.A:
            return self.confidence, 1.0 - self.confidence
        if tag is VarietyTag.B:
            return 1.0 - self.confidence, self.confidence
        return 0.5, 0.5


def oracle_ensemble(table: dict[str, VarietyTag], confidence: float = 1.0) -> VarietyEnsemble:
    return VarietyEnsemble([OracleClassifier(table, confidence) for _ in range(ENSEMBLE_SIZE)])


# -- ROC AUC -----------------------------------------------------------------

def roc_auc_exact(scores: Sequence[float], labels: Sequence) -> Fraction:
    """Mann-Whitney AUC as an exact rational; ties count 1/2.

    Computed from a sort in O(n log n) with integer arithmetic (twice the U
    statistic is always an integer), so the result is exact at any size.
    """
    tags = [_as_tag(l) for l in labels]
    if len(tags) != len(scores):
        raise ConfigurationError(f"{len(scores)} scores vs {len(tags)} labels")
    n_b = sum(t is VarietyTag.B for t in tags)
    n_a = sum(t is VarietyTag.A for t in tags)
    if n_a + n_b != len(tags):
        raise UndefinedMetricError("labels must be A or B")
    if not n_a or not n_b:
        raise UndefinedMetricError("ROC AUC is undefined with a single class")
    order = sorted(range(len(scores)), key=lambda i: scores[i])
    twice_u = 0
    a_below = 0
    i = 0
    while i < len(order):
        j = i
        while j < len(order) and scores[order[j]] == scores[order[i]]:
            j += 1
        group = [tags[k] for k in order[i:j]]
        a_here = sum(t is VarietyTag.A for t in group)
        b_here = len(group) - a_here
        twice_u += b_here * (2 * a_below + a_here)
        a_below += a_here
        i = j
    return Fraction(twice_u, 2 * n_a * n_b)


def roc_auc(scores: Sequence[float], labels: Sequence) -> float:
    return float(roc_auc_exact(scores, labels))


# -- persistence -------------------------------------------------------------

def _write_matrix(fh, m: np.ndarray) -> None:
    fh.write(struct.pack("<QQ", *m.shape))
    fh.write(np.ascontiguousarray(m, dtype="<f8").tobytes())


def _read_matrix(fh) -> np.ndarray:
    rows, cols = struct.unpack("<QQ", fh.read(16))
    buf = fh.read(rows * cols * 8)
    if len(buf) != rows * cols * 8:
        raise FormatError("truncated classifier file")
    return np.frombuffer(buf, dtype="<f8").reshape(rows, cols).astype(np.float64)


def save_ensemble(ensemble: VarietyEnsemble | Sequence[LinearVarietyClassifier], path) -> None:
    members = ensemble.members if isinstance(ensemble, VarietyEnsemble) else list(ensemble)
    if not all(isinstance(m, LinearVarietyClassifier) for m in members):
        raise ConfigurationError("only trained linear classifiers can be saved")
    header = json.dumps({"config": asdict(members[0].config), "classes": [c.value for c in CLASSES],
                         "members": len(members)}, sort_keys=True).encode()
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(header)))
        fh.write(header)
        for m in members:
            fh.write(struct.pack("<q", m.seed))
            _write_matrix(fh, m.input_embeddings)
            _write_matrix(fh, m.output_weights)
    tmp.replace(path)


def load_members(path) -> list[LinearVarietyClassifier]:
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise FormatError(f"{path}: not a classifier file")
        version, hlen = struct.unpack("<II", fh.read(8))
        if version != _VERSION:
            raise FormatError(f"{path}: unsupported classifier version {version}")
        meta = json.loads(fh.read(hlen))
        config = FeatureConfig(**meta["config"])
        members = []
        for _ in range(meta["members"]):
            (seed,) = struct.unpack("<q", fh.read(8))
            E = _read_matrix(fh)
            W = _read_matrix(fh)
            members.append(LinearVarietyClassifier(config, seed, E, W))
    return members


def load_ensemble(path) -> VarietyEnsemble:
    return VarietyEnsemble(load_members(path))


def save_classifier(model: LinearVarietyClassifier, path) -> None:
    save_ensemble([model], path)


def load_classifier(path) -> LinearVarietyClassifier:
    members = load_members(path)
    if len(members) != 1:
        raise FormatError(f"{path}: holds {len(members)} classifiers, expected 1")
    return members[0]


def ensemble_auc(ensemble, sentences: Iterable[str], labels: Sequence) -> float:
    return roc_auc([ensemble.score_b(s) for s in sentences], labels)
