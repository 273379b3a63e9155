"""Decoder-only transformer over [pose | caption | prior | target] sequences."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor, nn, ops
from ..errors import ContractViolation


@dataclass(frozen=True)
class TransformerConfig:
    layers: int = 4
    heads: int = 4
    head_dim: int = 32
    ffn_dim: int = 256
    dropout: float = 0.0

    @property
    def model_dim(self) -> int:
        return self.heads * self.head_dim


class Block(nn.Module):
    def __init__(self, cfg: TransformerConfig, rng: np.random.Generator):
        d = cfg.model_dim
        self.ln1 = nn.LayerNorm(d)
        self.qkv = nn.Linear(d, 3 * d, rng)
        self.proj = nn.Linear(d, d, rng)
        self.ln2 = nn.LayerNorm(d)
        self.ffn1 = nn.Linear(d, cfg.ffn_dim, rng)
        self.ffn2 = nn.Linear(cfg.ffn_dim, d, rng)
        self.heads = cfg.heads
        self.head_dim = cfg.head_dim

    def __call__(self, x: Tensor, mask: np.ndarray) -> Tensor:
        b, l, d = x.shape
        h, hd = self.heads, self.head_dim
        qkv = self.qkv(self.ln1(x))
        qkv = ops.reshape(qkv, (b, l, 3, h, hd))
        qkv = ops.transpose(qkv, (2, 0, 3, 1, 4))  # (3, B, H, L, hd)
        att = ops.attention(qkv[0], qkv[1], qkv[2], mask)
        att = ops.reshape(ops.transpose(att, (0, 2, 1, 3)), (b, l, d))
        x = ops.add(x, self.proj(att))
        y = self.ffn2(ops.relu(self.ffn1(self.ln2(x))))
        return ops.add(x, y)


class ViewTransformer(nn.Module):
    """Causal transformer emitting next-token logits over the unified vocab."""

    def __init__(self, vocab_size: int, max_len: int,
                 cfg: TransformerConfig | None = None, seed: int = 0):
        cfg = cfg or TransformerConfig()
        rng = np.random.default_rng([seed, 41])
        d = cfg.model_dim
        self.cfg = cfg
        self.vocab_size = vocab_size
        self.max_len = max_len
        self.token_embed = nn.Embedding(vocab_size, d, rng)
        self.pos_embed = nn.Embedding(max_len, d, rng)
        self.blocks = [Block(cfg, rng) for _ in range(cfg.layers)]
        self.ln_final = nn.LayerNorm(d)
        self.head = nn.Linear(d, vocab_size, rng)
        # additive causal mask: -inf strictly above the diagonal keeps future
        # positions exactly zero after the softmax (bit-exact causality)
        self._mask = np.triu(np.full((max_len, max_len), -np.inf), k=1)

    def __call__(self, tokens: np.ndarray) -> Tensor:
        """(B, Lp) int tokens -> (B, Lp, vocab) logits; Lp may be a prefix."""
        tokens = np.asarray(tokens)
        if tokens.ndim == 1:
            tokens = tokens[None]
        b, lp = tokens.shape
        if lp > self.max_len:
            raise ContractViolation(f"sequence length {lp} exceeds {self.max_len}")
        if tokens.min() < 0 or tokens.max() >= self.vocab_size:
            raise IndexError("token id outside the unified vocabulary")
        x = ops.add(self.token_embed(tokens),
                    ops.embedding(self.pos_embed.weight, np.arange(lp)))
        mask = self._mask[:lp, :lp].astype(x.dtype)
        for block in self.blocks:
            x = block(x, mask)
        return self.head(self.ln_final(x))
