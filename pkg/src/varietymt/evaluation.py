"""Corpus BLEU, paired bootstrap resampling and variety consistency."""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import VarietyTag
from .errors import AlignmentError, ConfigurationError, EmptyDataError, UndefinedMetricError

MAX_ORDER = 4


@dataclass(frozen=True)
class BleuReport:
    bleu: float
    precisions: tuple[float, float, float, float]
    brevity_penalty: float
    hyp_len: int
    ref_len: int

    def as_dict(self) -> dict[str, float]:
        out = {"bleu": self.bleu, "bp": self.brevity_penalty,
               "hyp_len": self.hyp_len, "ref_len": self.ref_len}
        out.update({f"p{n + 1}": p for n, p in enumerate(self.precisions)})
        return out


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def sentence_stats(hyp: Sequence[str], ref: Sequence[str]) -> list[int]:
    """[matches_1..4, totals_1..4, hyp_len, ref_len] with per-sentence clipping."""
    matches, totals = [], []
    for n in range(1, MAX_ORDER + 1):
        h, r = _ngrams(hyp, n), _ngrams(ref, n)
        matches.append(sum(min(c, r[g]) for g, c in h.items()))
        totals.append(max(len(hyp) - n + 1, 0))
    return matches + totals + [len(hyp), len(ref)]


def corpus_stats(hyps, refs) -> np.ndarray:
    if len(hyps) != len(refs):
        raise AlignmentError(f"{len(hyps)} hypotheses vs {len(refs)} references")
    if not hyps:
        raise EmptyDataError("BLEU needs at least one hypothesis")
    return np.array([sentence_stats(h, r) for h, r in zip(hyps, refs)], dtype=np.int64)


def bleu_from_stats(stats: np.ndarray) -> BleuReport:
    s = stats.sum(axis=0) if stats.ndim == 2 else stats
    matches, totals = s[:MAX_ORDER], s[MAX_ORDER:2 * MAX_ORDER]
    hyp_len, ref_len = int(s[-2]), int(s[-1])
    precisions = tuple(float(m / t) if t else 0.0 for m, t in zip(matches, totals))
    if hyp_len == 0:
        bp = 0.0
    else:
        bp = min(1.0, math.exp(1.0 - ref_len / hyp_len))
    if min(precisions) == 0.0:
        bleu = 0.0
    else:
        bleu = 100.0 * bp * math.exp(sum(math.log(p) for p in precisions) / MAX_ORDER)
    return BleuReport(bleu, precisions, bp, hyp_len, ref_len)


def corpus_bleu(hypotheses: Sequence[Sequence[str]], references: Sequence[Sequence[str]]) -> BleuReport:
    """Case-sensitive corpus BLEU-4 on pre-tokenized text, no smoothing."""
    return bleu_from_stats(corpus_stats(hypotheses, references))


def _bleu_vectorized(sums: np.ndarray) -> np.ndarray:
    # sums: (k, 10) summed sufficient statistics -> (k,) BLEU values
    matches = sums[:, :MAX_ORDER].astype(np.float64)
    totals = sums[:, MAX_ORDER:2 * MAX_ORDER].astype(np.float64)
    hyp_len, ref_len = sums[:, -2].astype(np.float64), sums[:, -1].astype(np.float64)
    ok = (matches > 0).all(axis=1) & (totals > 0).all(axis=1) & (hyp_len > 0)
    out = np.zeros(len(sums))
    if ok.any():
        logp = np.log(matches[ok] / totals[ok]).mean(axis=1)
        bp = np.minimum(1.0, np.exp(1.0 - ref_len[ok] / hyp_len[ok]))
        out[ok] = 100.0 * bp * np.exp(logp)
    return out


@dataclass(frozen=True)
class SignificanceResult:
    delta_bleu: float
    p_value: float
    n_resamples: int
    alpha: float
    significant: bool
    seed: int
    wins: int
    ties: int
    better: str
    bleu_x: float
    bleu_y: float

    def as_dict(self) -> dict:
        return {"bleu_x": self.bleu_x, "bleu_y": self.bleu_y, "delta_bleu": self.delta_bleu,
                "better": self.better, "wins": self.wins, "ties": self.ties,
                "n_resamples": self.n_resamples, "p_value": self.p_value, "alpha": self.alpha,
                "significant": self.significant, "seed": self.seed}


def resample_indices(seed: int, i: int, n: int) -> np.ndarray:
    """Indices of resample ``i``; each resample owns a counter-derived RNG stream."""
    return np.random.default_rng([seed, i]).integers(0, n, n)


def paired_bootstrap(hyps_x, hyps_y, refs, n_resamples: int = 1000, alpha: float = 0.05,
                     seed: int = 0, threads: int = 1) -> SignificanceResult:
    """One-sided paired bootstrap test of the observed-better system.

    p = 1 - wins / n_resamples, where a win is a resample on which the
    observed-better system scores strictly higher (ties are not wins).  When
    both systems score the same on the full set, x is taken as "better".
    """
    if not len(hyps_x) == len(hyps_y) == len(refs):
        raise AlignmentError(f"length mismatch: {len(hyps_x)}, {len(hyps_y)}, {len(refs)}")
    if n_resamples < 100:
        raise ConfigurationError("n_resamples must be >= 100")
    if not 0.0 < alpha < 1.0:
        raise ConfigurationError("alpha must lie in (0, 1)")
    sx, sy = corpus_stats(hyps_x, refs), corpus_stats(hyps_y, refs)
    bleu_x, bleu_y = bleu_from_stats(sx).bleu, bleu_from_stats(sy).bleu
    n = len(refs)

    def one(i: int) -> tuple[float, float]:
        idx = resample_indices(seed, i, n)
        pair = np.stack([sx[idx].sum(axis=0), sy[idx].sum(axis=0)])
        bx, by = _bleu_vectorized(pair)
        return bx, by

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            scores = list(pool.map(one, range(n_resamples)))
    else:
        scores = [one(i) for i in range(n_resamples)]
    arr = np.array(scores)
    better = "x" if bleu_x >= bleu_y else "y"
    hi, lo = (arr[:, 0], arr[:, 1]) if better == "x" else (arr[:, 1], arr[:, 0])
    wins = int((hi > lo).sum())
    ties = int((hi == lo).sum())
    p_value = 1.0 - wins / n_resamples
    return SignificanceResult(bleu_x - bleu_y, p_value, n_resamples, alpha, p_value < alpha,
                              seed, wins, ties, better, bleu_x, bleu_y)


def variety_consistency(hypotheses: Sequence[Sequence[str]], judge, expected: VarietyTag) -> float:
    """Share of output realized in the expected variety.

    ``judge`` is either a variant table (anything with ``slot_counts``): the
    fraction of variety-marked words that use the expected variant; or an
    ensemble (anything with ``soft_fuse``): the fraction of hypotheses it
    labels as the expected variety.
    """
    if not hypotheses:
        raise EmptyDataError("no hypotheses to judge")
    if expected not in (VarietyTag.A, VarietyTag.B):
        raise ConfigurationError("expected variety must be A or B")
    if hasattr(judge, "slot_counts"):
        hits = slots = 0
        for hyp in hypotheses:
            h, s = judge.slot_counts(hyp, expected)
            hits += h
            slots += s
        if not slots:
            raise UndefinedMetricError("no variety-marked words in any hypothesis")
        return hits / slots
    if hasattr(judge, "soft_fuse"):
        return sum(judge.soft_fuse(" ".join(h)) is expected for h in hypotheses) / len(hypotheses)
    raise ConfigurationError("judge must be a variant table or a variety ensemble")


# -- report files ------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def write_report(values: dict, path) -> None:
    Path(path).write_text("".join(f"{k}={_fmt(v)}\n" for k, v in values.items()), encoding="utf-8")


TSV_HEADER = "system\ttestset\tmetric\tvalue\n"


def write_tsv(rows: Sequence[tuple[str, str, str, object]], path) -> None:
    lines = [TSV_HEADER] + [f"{s}\t{t}\t{m}\t{_fmt(v)}\n" for s, t, m, v in rows]
    Path(path).write_text("".join(lines), encoding="utf-8")
