"""Corpus-level decoding and dev-set checkpoint selection."""

from __future__ import annotations

from typing import Sequence

from ..corpus import ParallelCorpus
from ..errors import ConfigurationError
from ..evaluation import corpus_bleu
from .checkpoint import Checkpoint
from .decoding import DecodeConfig, beam_search, greedy_batch, source_ids
from .model import TranslationModel


def decode_corpus(model: TranslationModel, subword, corpus: ParallelCorpus, variety: str | None,
                  decode: DecodeConfig = DecodeConfig()) -> list[list[str]]:
    sources = [source_ids(model, subword, p.source, variety) for p in corpus.pairs]
    if decode.beam_size == 1:
        outputs = greedy_batch(model, sources, decode.max_len)
    else:
        outputs = [list(beam_search(model, s, decode.beam_size, decode.max_len,
                                    decode.length_penalty).ids) for s in sources]
    return [subword.decode(ids) for ids in outputs]


def select_best_checkpoint(checkpoints: Sequence[Checkpoint],
                           dev_sets: Sequence[tuple[ParallelCorpus, str | None]],
                           subword, decode: DecodeConfig = DecodeConfig(beam_size=1)):
    """Return (model, {step: pooled dev BLEU}) for the best checkpoint; ties go to the later step.

    Multilingual models pass one dev set per variety, each decoded with its own token.
    """
    if not checkpoints:
        raise ConfigurationError("no checkpoints to select from")
    if not dev_sets or not sum(len(c) for c, _ in dev_sets):
        raise ConfigurationError("checkpoint selection needs a non-empty dev set")
    ordered = sorted(checkpoints, key=lambda c: c.step)
    if len(ordered) == 1:
        return ordered[0].load(), {}
    scores: dict[int, float] = {}
    best, best_bleu = None, float("-inf")
    for ckpt in ordered:
        model = ckpt.load()
        hyps, refs = [], []
        for corpus, variety in dev_sets:
            hyps += decode_corpus(model, subword, corpus, variety, decode)
            refs += [list(p.target) for p in corpus.pairs]
        bleu = corpus_bleu(hyps, refs).bleu
        scores[ckpt.step] = bleu
        if bleu >= best_bleu:
            best, best_bleu = model, bleu
    return best, scores
