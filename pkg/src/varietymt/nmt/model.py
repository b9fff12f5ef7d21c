"""Pre-norm Transformer encoder-decoder in 64-bit floats."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import torch
from torch import nn
from torch.nn import functional as F

from ..errors import ConfigurationError, LengthError, VocabError

DTYPE = torch.float64


@dataclass(frozen=True)
class TransformerConfig:
    vocab_size: int
    num_layers: int = 2
    model_dim: int = 64
    num_heads: int = 4
    ffn_dim: int = 256
    dropout: float = 0.1
    max_positions: int = 128
    share_embeddings: bool = True

    def __post_init__(self):
        if self.num_layers < 1 or self.model_dim < 1 or self.ffn_dim < 1 or self.vocab_size < 1:
            raise ConfigurationError("layer count, dims and vocab size must be positive")
        if self.model_dim % self.num_heads:
            raise ConfigurationError(f"model_dim {self.model_dim} is not divisible by "
                                     f"num_heads {self.num_heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError("dropout must lie in [0, 1)")
        if self.max_positions < 72:
            raise ConfigurationError("max_positions must be >= 72 (70 units + token + EOS)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Specials:
    """Reserved ids the model needs to build decoder inputs."""

    pad: int
    bos: int
    eos: int
    unk: int
    varieties: dict[str, int] = field(default_factory=dict)

    @classmethod
    def from_subword(cls, sw) -> "Specials":
        return cls(sw.pad_id, sw.bos_id, sw.eos_id, sw.unk_id, dict(sw.variety_ids))

    @property
    def variety_id_set(self) -> frozenset[int]:
        return frozenset(self.varieties.values())

    def decoder_start(self, source_ids) -> int:
        """The variety token replaces BOS when the source is token-forced."""
        if len(source_ids) and source_ids[0] in self.variety_id_set:
            return int(source_ids[0])
        return self.bos

    def to_dict(self) -> dict:
        return asdict(self)


def sinusoidal_positions(n: int, dim: int) -> torch.Tensor:
    pos = torch.arange(n, dtype=DTYPE).unsqueeze(1)
    inv = torch.exp(torch.arange(0, dim, 2, dtype=DTYPE) * (-math.log(10000.0) / dim))
    table = torch.zeros(n, dim, dtype=DTYPE)
    table[:, 0::2] = torch.sin(pos * inv)
    table[:, 1::2] = torch.cos(pos * inv)[:, : dim // 2]
    return table


class MultiHeadAttention(nn.Module):
    def __init__(self, dim: int, heads: int, dropout: float):
        super().__init__()
        self.heads = heads
        self.head_dim = dim // heads
        self.q = nn.Linear(dim, dim, dtype=DTYPE)
        self.k = nn.Linear(dim, dim, dtype=DTYPE)
        self.v = nn.Linear(dim, dim, dtype=DTYPE)
        self.out = nn.Linear(dim, dim, dtype=DTYPE)
        self.dropout = nn.Dropout(dropout)

    def _split(self, x):
        b, t, _ = x.shape
        return x.view(b, t, self.heads, self.head_dim).transpose(1, 2)

    def forward(self, query, memory, mask=None):
        # mask: broadcastable to (batch, heads, tq, tk); True marks blocked keys
        q, k, v = self._split(self.q(query)), self._split(self.k(memory)), self._split(self.v(memory))
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        if mask is not None:
            scores = scores.masked_fill(mask, float("-inf"))
        attn = self.dropout(torch.softmax(scores, dim=-1))
        ctx = (attn @ v).transpose(1, 2).reshape(query.shape[0], query.shape[1], -1)
        return self.out(ctx)


class FeedForward(nn.Module):
    def __init__(self, dim: int, hidden: int, dropout: float):
        super().__init__()
        self.inner = nn.Linear(dim, hidden, dtype=DTYPE)
        self.outer = nn.Linear(hidden, dim, dtype=DTYPE)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x):
        return self.outer(self.dropout(F.relu(self.inner(x))))


class EncoderLayer(nn.Module):
    def __init__(self, cfg: TransformerConfig):
        super().__init__()
        self.norm_attn = nn.LayerNorm(cfg.model_dim, dtype=DTYPE)
        self.attn = MultiHeadAttention(cfg.model_dim, cfg.num_heads, cfg.dropout)
        self.norm_ffn = nn.LayerNorm(cfg.model_dim, dtype=DTYPE)
        self.ffn = FeedForward(cfg.model_dim, cfg.ffn_dim, cfg.dropout)
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, x, src_mask):
        h = self.norm_attn(x)
        x = x + self.dropout(self.attn(h, h, src_mask))
        return x + self.dropout(self.ffn(self.norm_ffn(x)))


class DecoderLayer(nn.Module):
    def __init__(self, cfg: TransformerConfig):
        super().__init__()
        self.norm_self = nn.LayerNorm(cfg.model_dim, dtype=DTYPE)
        self.self_attn = MultiHeadAttention(cfg.model_dim, cfg.num_heads, cfg.dropout)
        self.norm_cross = nn.LayerNorm(cfg.model_dim, dtype=DTYPE)
        self.cross_attn = MultiHeadAttention(cfg.model_dim, cfg.num_heads, cfg.dropout)
        self.norm_ffn = nn.LayerNorm(cfg.model_dim, dtype=DTYPE)
        self.ffn = FeedForward(cfg.model_dim, cfg.ffn_dim, cfg.dropout)
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, y, memory, self_mask, memory_mask):
        h = self.norm_self(y)
        y = y + self.dropout(self.self_attn(h, h, self_mask))
        y = y + self.dropout(self.cross_attn(self.norm_cross(y), memory, memory_mask))
        return y + self.dropout(self.ffn(self.norm_ffn(y)))


class TranslationModel(nn.Module):
    def __init__(self, config: TransformerConfig, specials: Specials, subword_digest: str = ""):
        super().__init__()
        self.config = config
        self.specials = specials
        self.subword_digest = subword_digest
        d, V = config.model_dim, config.vocab_size
        self.embed = nn.Embedding(V, d, dtype=DTYPE)
        nn.init.normal_(self.embed.weight, std=d ** -0.5)
        if not config.share_embeddings:
            self.target_embed = nn.Embedding(V, d, dtype=DTYPE)
            nn.init.normal_(self.target_embed.weight, std=d ** -0.5)
            self.output_proj = nn.Linear(d, V, bias=False, dtype=DTYPE)
        self.encoder_layers = nn.ModuleList(EncoderLayer(config) for _ in range(config.num_layers))
        self.decoder_layers = nn.ModuleList(DecoderLayer(config) for _ in range(config.num_layers))
        self.encoder_norm = nn.LayerNorm(d, dtype=DTYPE)
        self.decoder_norm = nn.LayerNorm(d, dtype=DTYPE)
        self.embed_dropout = nn.Dropout(config.dropout)
        self.register_buffer("positions", sinusoidal_positions(config.max_positions, d),
                             persistent=False)

    def _check(self, ids: torch.Tensor, what: str) -> None:
        if ids.shape[-1] > self.config.max_positions:
            raise LengthError(f"{what} length {ids.shape[-1]} exceeds max_positions "
                              f"{self.config.max_positions}")
        if ids.numel() and (int(ids.min()) < 0 or int(ids.max()) >= self.config.vocab_size):
            raise VocabError(f"{what} contains ids outside [0, {self.config.vocab_size})")

    def _embed(self, ids, table):
        x = table(ids) * math.sqrt(self.config.model_dim)
        return self.embed_dropout(x + self.positions[: ids.shape[1]])

    def encode(self, src: torch.Tensor):
        self._check(src, "source")
        pad_mask = (src == self.specials.pad)[:, None, None, :]
        x = self._embed(src, self.embed)
        for layer in self.encoder_layers:
            x = layer(x, pad_mask)
        return self.encoder_norm(x), pad_mask

    def decode(self, tgt_in: torch.Tensor, memory, memory_mask) -> torch.Tensor:
        """Log-probabilities (batch, tgt_len, vocab) for the next token at each position."""
        self._check(tgt_in, "target")
        t = tgt_in.shape[1]
        # padding sits at the right, so the causal mask alone hides it from real positions
        self_mask = torch.ones(t, t, dtype=torch.bool, device=tgt_in.device).triu(1)[None, None]
        table = self.embed if self.config.share_embeddings else self.target_embed
        y = self._embed(tgt_in, table)
        for layer in self.decoder_layers:
            y = layer(y, memory, self_mask, memory_mask)
        y = self.decoder_norm(y)
        if self.config.share_embeddings:
            logits = y @ self.embed.weight.T
        else:
            logits = self.output_proj(y)
        return torch.log_softmax(logits, dim=-1)

    def forward(self, src: torch.Tensor, tgt_in: torch.Tensor) -> torch.Tensor:
        memory, mask = self.encode(src)
        return self.decode(tgt_in, memory, mask)


def forward(model: TranslationModel, source_units, target_prefix_units) -> torch.Tensor:
    """Next-token log-probability rows for one example (target_len x vocab)."""
    src = torch.as_tensor([list(source_units)], dtype=torch.long)
    tgt = torch.as_tensor([list(target_prefix_units)], dtype=torch.long)
    with torch.no_grad():
        return model(src, tgt)[0]
