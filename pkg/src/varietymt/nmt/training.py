"""Batching, label-smoothed loss, and the Adam / inverse-square-root training loop."""

from __future__ import annotations

import logging
import math
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import torch

from ..errors import ConfigurationError, EmptyDataError, NumericError
from .checkpoint import Checkpoint, save_checkpoint
from .model import Specials, TransformerConfig, TranslationModel

log = logging.getLogger(__name__)

Example = tuple[Sequence[int], Sequence[int]]


@dataclass(frozen=True)
class TrainingConfig:
    peak_lr_factor: float = 0.2
    warmup_steps: int = 100
    batch_tokens: int = 1024
    total_steps: int = 1000
    checkpoint_every: int = 250
    label_smoothing: float = 0.1
    seed: int = 0
    max_len: int = 70
    adam_betas: tuple[float, float] = (0.9, 0.98)
    adam_eps: float = 1e-9

    def __post_init__(self):
        if self.peak_lr_factor <= 0 or self.warmup_steps < 1 or self.batch_tokens < 1:
            raise ConfigurationError("peak_lr_factor, warmup_steps and batch_tokens must be positive")
        if self.total_steps < 1 or not 1 <= self.checkpoint_every <= self.total_steps:
            raise ConfigurationError("need 1 <= checkpoint_every <= total_steps")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ConfigurationError("label_smoothing must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


def learning_rate(step: int, model_dim: int, factor: float, warmup: int) -> float:
    step = max(step, 1)
    return factor * model_dim ** -0.5 * min(step ** -0.5, step * warmup ** -1.5)


@dataclass
class Batch:
    src: torch.Tensor
    tgt_in: torch.Tensor
    tgt_out: torch.Tensor
    index: int = 0


def make_batch(examples: Sequence[Example], specials: Specials, index: int = 0) -> Batch:
    """Pad a list of (source ids, target ids) into decoder-ready tensors.

    The decoder input starts with the example's variety token when the source
    begins with one, BOS otherwise; the decoder output ends with EOS.
    """
    if not examples:
        raise EmptyDataError("empty batch")
    s_len = max(len(s) for s, _ in examples)
    t_len = max(len(t) for _, t in examples) + 1
    pad = specials.pad
    src = torch.full((len(examples), s_len), pad, dtype=torch.long)
    tgt_in = torch.full((len(examples), t_len), pad, dtype=torch.long)
    tgt_out = torch.full((len(examples), t_len), pad, dtype=torch.long)
    for i, (s, t) in enumerate(examples):
        src[i, : len(s)] = torch.as_tensor(list(s), dtype=torch.long)
        tgt_in[i, 0] = specials.decoder_start(s)
        if len(t):
            tgt_in[i, 1: len(t) + 1] = torch.as_tensor(list(t), dtype=torch.long)
            tgt_out[i, : len(t)] = torch.as_tensor(list(t), dtype=torch.long)
        tgt_out[i, len(t)] = specials.eos
    return Batch(src, tgt_in, tgt_out, index)


def smoothed_nll(logp: torch.Tensor, tgt_out: torch.Tensor, pad: int, smoothing: float) -> torch.Tensor:
    mask = tgt_out != pad
    nll = -logp.gather(-1, tgt_out.unsqueeze(-1)).squeeze(-1)
    per_token = (1.0 - smoothing) * nll - smoothing * logp.mean(-1) if smoothing else nll
    return (per_token * mask).sum() / mask.sum()


def loss_and_gradients(model: TranslationModel, batch: Batch, smoothing: float = 0.1):
    """Mean label-smoothed cross-entropy over non-pad tokens and its exact gradients."""
    model.zero_grad(set_to_none=True)
    logp = model(batch.src, batch.tgt_in)
    loss = smoothed_nll(logp, batch.tgt_out, model.specials.pad, smoothing)
    if not torch.isfinite(loss):
        raise NumericError(f"non-finite loss on batch {batch.index}")
    loss.backward()
    grads = {name: p.grad.detach().clone() for name, p in model.named_parameters()
             if p.grad is not None}
    return float(loss), grads


def token_accuracy(model: TranslationModel, batch: Batch) -> float:
    with torch.no_grad():
        pred = model(batch.src, batch.tgt_in).argmax(-1)
    mask = batch.tgt_out != model.specials.pad
    return float(((pred == batch.tgt_out) & mask).sum() / mask.sum())


def bucket_batches(examples: Sequence[Example], batch_tokens: int, seed: int) -> list[list[int]]:
    """Group example indices by length so that rows x longest side <= batch_tokens."""
    order = list(range(len(examples)))
    random.Random(seed).shuffle(order)
    order.sort(key=lambda i: (len(examples[i][0]), len(examples[i][1])))
    batches, current, longest = [], [], 0
    for i in order:
        size = max(len(examples[i][0]), len(examples[i][1]) + 1)
        if current and (len(current) + 1) * max(longest, size) > batch_tokens:
            batches.append(current)
            current, longest = [], 0
        current.append(i)
        longest = max(longest, size)
    if current:
        batches.append(current)
    return batches


@dataclass
class TrainingRun:
    checkpoints: list[Checkpoint]
    model: TranslationModel
    losses: list[float] = field(default_factory=list)


def train(examples: Sequence[Example], tconfig: TransformerConfig, rconfig: TrainingConfig,
          specials: Specials, out_dir, init: TranslationModel | None = None,
          subword_digest: str = "") -> TrainingRun:
    """Train from scratch (or from ``init``) and write a checkpoint every N steps.

    A non-finite loss aborts with NumericError; checkpoints already written stay.
    """
    kept = [(list(s), list(t)) for s, t in examples
            if len(s) <= rconfig.max_len + 1 and len(t) <= rconfig.max_len]
    if not kept:
        raise EmptyDataError("no training examples within the length limit")
    if len(kept) < len(examples):
        log.info("dropped %d examples longer than %d units", len(examples) - len(kept), rconfig.max_len)

    torch.manual_seed(rconfig.seed)
    model = TranslationModel(tconfig, specials, subword_digest)
    if init is not None:
        model.load_state_dict(init.state_dict())
    model.train()
    optimizer = torch.optim.Adam(model.parameters(), lr=1.0, betas=rconfig.adam_betas,
                                 eps=rconfig.adam_eps)
    batches = bucket_batches(kept, rconfig.batch_tokens, rconfig.seed)
    rng = random.Random(rconfig.seed)
    out_dir = Path(out_dir)
    checkpoints: list[Checkpoint] = []
    losses: list[float] = []
    step = 0
    while step < rconfig.total_steps:
        epoch_order = list(range(len(batches)))
        rng.shuffle(epoch_order)
        for b in epoch_order:
            step += 1
            batch = make_batch([kept[i] for i in batches[b]], specials, index=step)
            for group in optimizer.param_groups:
                group["lr"] = learning_rate(step, tconfig.model_dim, rconfig.peak_lr_factor,
                                            rconfig.warmup_steps)
            optimizer.zero_grad(set_to_none=True)
            logp = model(batch.src, batch.tgt_in)
            loss = smoothed_nll(logp, batch.tgt_out, specials.pad, rconfig.label_smoothing)
            if not math.isfinite(loss.item()):
                raise NumericError(f"training diverged at step {step} (non-finite loss); "
                                   f"{len(checkpoints)} checkpoints retained in {out_dir}")
            loss.backward()
            optimizer.step()
            losses.append(loss.item())
            if step % rconfig.checkpoint_every == 0 or step == rconfig.total_steps:
                path = save_checkpoint(model, out_dir / f"step_{step:07d}.ckpt", step)
                checkpoints.append(Checkpoint(step, path))
                log.info("step %d loss %.4f -> %s", step, losses[-1], path.name)
            if step >= rconfig.total_steps:
                break
    model.eval()
    return TrainingRun(checkpoints, model, losses)
