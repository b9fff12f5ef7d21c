"""Greedy and beam-search decoding with variety-token forcing."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch

from ..errors import ConfigurationError
from .model import TranslationModel


@dataclass(frozen=True)
class DecodeConfig:
    beam_size: int = 4
    max_len: int = 70
    length_penalty: float = 1.0

    def __post_init__(self):
        if self.beam_size < 1 or self.max_len < 1:
            raise ConfigurationError("beam_size and max_len must be >= 1")


@dataclass(frozen=True)
class Hypothesis:
    ids: tuple[int, ...]
    logprob: float
    finished: bool

    def score(self, alpha: float = 1.0) -> float:
        """Length-normalized log-probability (length counts the EOS when present)."""
        n = len(self.ids) + (1 if self.finished else 0)
        return self.logprob / max(n, 1) ** alpha


def source_ids(model: TranslationModel, subword, tokens: Sequence[str], variety: str | None) -> list[int]:
    ids = subword.encode(tokens)
    if variety is not None:
        vid = model.specials.varieties.get(variety)
        if vid is None:
            raise ConfigurationError(f"model vocabulary has no token for variety {variety!r}")
        ids = [vid] + ids
    return ids


def _limit(model: TranslationModel, max_len: int) -> int:
    # decoder input holds the start symbol plus the generated prefix
    return min(max_len, model.config.max_positions - 1)


def greedy(model: TranslationModel, src: Sequence[int], max_len: int = 70) -> Hypothesis:
    """Reference greedy loop: one sentence, argmax at each step."""
    model.eval()
    limit = _limit(model, max_len)
    with torch.no_grad():
        memory, mask = model.encode(torch.as_tensor([list(src)]))
        prefix = [model.specials.decoder_start(src)]
        out, total = [], 0.0
        for _ in range(limit):
            logp = model.decode(torch.as_tensor([prefix]), memory, mask)[0, -1]
            tok = int(logp.argmax())
            total += float(logp[tok])
            if tok == model.specials.eos:
                return Hypothesis(tuple(out), total, True)
            out.append(tok)
            prefix.append(tok)
    return Hypothesis(tuple(out), total, False)


def greedy_batch(model: TranslationModel, sources: Sequence[Sequence[int]], max_len: int = 70,
                 batch_size: int = 64) -> list[list[int]]:
    """Batched greedy decoding for throughput (dev-set checkpoint selection)."""
    model.eval()
    sp = model.specials
    limit = _limit(model, max_len)
    results: list[list[int]] = [[] for _ in sources]
    order = sorted(range(len(sources)), key=lambda i: len(sources[i]))
    with torch.no_grad():
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            width = max(len(sources[i]) for i in idx)
            src = torch.full((len(idx), width), sp.pad, dtype=torch.long)
            for row, i in enumerate(idx):
                src[row, : len(sources[i])] = torch.as_tensor(list(sources[i]))
            memory, mask = model.encode(src)
            prefix = torch.as_tensor([[sp.decoder_start(sources[i])] for i in idx])
            done = torch.zeros(len(idx), dtype=torch.bool)
            for _ in range(limit):
                nxt = model.decode(prefix, memory, mask)[:, -1].argmax(-1)
                nxt = torch.where(done, torch.full_like(nxt, sp.pad), nxt)
                done |= nxt == sp.eos
                prefix = torch.cat([prefix, nxt[:, None]], dim=1)
                if bool(done.all()):
                    break
            for row, i in enumerate(idx):
                toks = []
                for tok in prefix[row, 1:].tolist():
                    if tok in (sp.eos, sp.pad):
                        break
                    toks.append(tok)
                results[i] = toks
    return results


def beam_search(model: TranslationModel, src: Sequence[int], beam_size: int = 4,
                max_len: int = 70, alpha: float = 1.0) -> Hypothesis:
    """Beam search ranking expansions by cumulative log-probability.

    At each step the best expansions survive; those ending in EOS retire to
    the finished pool and the beam narrows by one for each, so search stops
    once ``beam_size`` hypotheses have finished.  The
    returned hypothesis maximizes the length-normalized score over the pool
    (plus whatever is still open at ``max_len``).  With ``beam_size=1`` this
    is exactly greedy decoding.
    """
    model.eval()
    sp = model.specials
    limit = _limit(model, max_len)
    start = sp.decoder_start(src)
    finished: list[Hypothesis] = []
    alive: list[Hypothesis] = [Hypothesis((), 0.0, False)]
    with torch.no_grad():
        memory, mask = model.encode(torch.as_tensor([list(src)]))
        for _ in range(limit):
            prefix = torch.as_tensor([[start, *h.ids] for h in alive])
            n = len(alive)
            logp = model.decode(prefix, memory.expand(n, -1, -1), mask.expand(n, -1, -1, -1))[:, -1]
            totals = torch.as_tensor([h.logprob for h in alive], dtype=logp.dtype)[:, None] + logp
            flat = totals.flatten()
            top = torch.topk(flat, min(beam_size - len(finished), flat.numel()))
            # torch.topk gives no order guarantee among equal values
            cand = sorted(zip(top.values.tolist(), top.indices.tolist()), key=lambda c: (-c[0], c[1]))
            vocab = logp.shape[-1]
            next_alive = []
            for total, flat_idx in cand:
                parent, tok = divmod(flat_idx, vocab)
                if tok == sp.eos:
                    finished.append(Hypothesis(alive[parent].ids, total, True))
                else:
                    next_alive.append(Hypothesis(alive[parent].ids + (tok,), total, False))
            alive = next_alive
            if not alive:
                break
    pool = finished + alive
    return max(pool, key=lambda h: h.score(alpha))


def translate(model: TranslationModel, subword, source_tokens: Sequence[str], variety: str | None = None,
              beam_size: int = 4, max_len: int = 70, alpha: float = 1.0) -> list[str]:
    src = source_ids(model, subword, source_tokens, variety)
    return subword.decode(beam_search(model, src, beam_size, max_len, alpha).ids)


def hypothesis_logprob(model: TranslationModel, src: Sequence[int], ids: Sequence[int],
                       finished: bool = True) -> float:
    """Model log-probability of a given output (with EOS when ``finished``)."""
    sp = model.specials
    tgt = list(ids) + ([sp.eos] if finished else [])
    prefix = [sp.decoder_start(src)] + list(ids)
    with torch.no_grad():
        logp = model(torch.as_tensor([list(src)]), torch.as_tensor([prefix[: len(tgt)]]))[0]
    return float(sum(logp[i, t] for i, t in enumerate(tgt)))
