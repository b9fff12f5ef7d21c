"""Independent reference computations shared by unit and acceptance tests."""

from __future__ import annotations

import math
import random
from collections import Counter
from fractions import Fraction

import torch

from varietymt.nmt import Specials, TransformerConfig, TranslationModel, make_batch
from varietymt.nmt.training import smoothed_nll

SPECIALS = Specials(pad=0, bos=1, eos=2, unk=3, varieties={"A": 4, "B": 5})


def tiny_model(vocab=20, dim=16, layers=2, heads=4, ffn=32, seed=0, share=True) -> TranslationModel:
    torch.manual_seed(seed)
    cfg = TransformerConfig(vocab, layers, dim, heads, ffn, dropout=0.0, max_positions=72,
                            share_embeddings=share)
    return TranslationModel(cfg, SPECIALS).eval()


def random_examples(n, vocab, seed, min_len=2, max_len=7, tokened=False):
    rng = random.Random(seed)
    out = []
    for _ in range(n):
        src = [rng.randrange(6, vocab) for _ in range(rng.randint(min_len, max_len))]
        tgt = [rng.randrange(6, vocab) for _ in range(rng.randint(min_len, max_len))]
        if tokened:
            src = [rng.choice([4, 5])] + src
        out.append((src, tgt))
    return out


def finite_difference_errors(model, batch, smoothing=0.1, per_family=100, h=1e-5, seed=0,
                             floor=1e-6):
    """Max relative error of autograd vs central differences, per named parameter."""
    model.zero_grad(set_to_none=True)
    loss = smoothed_nll(model(batch.src, batch.tgt_in), batch.tgt_out, model.specials.pad, smoothing)
    loss.backward()
    rng = random.Random(seed)
    errors = {}
    for name, p in model.named_parameters():
        flat = p.data.view(-1)
        grad = p.grad.view(-1)
        coords = rng.sample(range(flat.numel()), min(per_family, flat.numel()))
        worst = 0.0
        for i in coords:
            orig = float(flat[i])
            with torch.no_grad():
                flat[i] = orig + h
                up = float(smoothed_nll(model(batch.src, batch.tgt_in), batch.tgt_out, 0, smoothing))
                flat[i] = orig - h
                down = float(smoothed_nll(model(batch.src, batch.tgt_in), batch.tgt_out, 0, smoothing))
                flat[i] = orig
            fd = (up - down) / (2 * h)
            g = float(grad[i])
            worst = max(worst, abs(fd - g) / max(abs(fd), abs(g), floor))
        errors[name] = worst
    return errors


def causality_violations(model, src, length=8, vocab=None):
    """Count (position, replacement) perturbations that change an earlier output row."""
    vocab = vocab or model.config.vocab_size
    base_prefix = [SPECIALS.bos] + [6 + (i % (vocab - 6)) for i in range(length - 1)]
    with torch.no_grad():
        base = model(torch.tensor([src]), torch.tensor([base_prefix]))[0]
        bad = 0
        for j in range(length):
            for tok in range(vocab):
                if tok == base_prefix[j]:
                    continue
                prefix = list(base_prefix)
                prefix[j] = tok
                out = model(torch.tensor([src]), torch.tensor([prefix]))[0]
                if j and float((out[:j] - base[:j]).abs().max()) > 1e-12:
                    bad += 1
    return bad


# -- metric oracles ----------------------------------------------------------

def bleu_oracle(hyps, refs):
    """Textbook corpus BLEU-4 in exact rationals up to the final root."""
    match = [0] * 4
    total = [0] * 4
    hl = rl = 0
    for h, r in zip(hyps, refs):
        hl += len(h)
        rl += len(r)
        for n in range(1, 5):
            hc = Counter(tuple(h[i:i + n]) for i in range(len(h) - n + 1))
            rc = Counter(tuple(r[i:i + n]) for i in range(len(r) - n + 1))
            match[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
            total[n - 1] += max(0, len(h) - n + 1)
    if hl == 0 or min(total) == 0 or min(match) == 0:
        return 0.0
    prod = Fraction(1)
    for m, t in zip(match, total):
        prod *= Fraction(m, t)
    bp = 1.0 if hl > rl else math.exp(1 - rl / hl)
    return 100.0 * bp * float(prod) ** 0.25


def pairwise_auc(scores, labels, positive):
    pos = [s for s, l in zip(scores, labels) if l == positive]
    neg = [s for s, l in zip(scores, labels) if l != positive]
    wins = sum(Fraction(1) if p > q else Fraction(1, 2) if p == q else Fraction(0)
               for p in pos for q in neg)
    return wins / (len(pos) * len(neg))


def batch_of(examples):
    return make_batch(examples, SPECIALS)
