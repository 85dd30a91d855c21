"""Attention kernel: stable softmax, scaled dot-product, multi-head, residual blocks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn


@dataclass(frozen=True)
class AttentionConfig:
    """Model width, head count, and feed-forward width shared by all blocks."""

    dim: int = 64
    heads: int = 4
    ffn_hidden: int | None = None  # defaults to 4 * dim

    def __post_init__(self):
        if self.dim < 1 or self.heads < 1:
            raise ValueError(f"dim and heads must be >= 1, got {self.dim}, {self.heads}")
        if self.dim % self.heads:
            raise ValueError(f"dim {self.dim} must be divisible by heads {self.heads}")

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads

    @property
    def hidden(self) -> int:
        return self.ffn_hidden if self.ffn_hidden is not None else 4 * self.dim


def softmax_rows(matrix: torch.Tensor) -> torch.Tensor:
    """Row-stochastic softmax over the last axis, stabilized by max subtraction."""
    if torch.isnan(matrix).any():
        raise ValueError("softmax_rows: NaN in input")
    shifted = matrix - matrix.amax(dim=-1, keepdim=True)
    weights = torch.exp(shifted)
    return weights / weights.sum(dim=-1, keepdim=True)


def scaled_dot_attention(
    queries: torch.Tensor,
    keys: torch.Tensor,
    values: torch.Tensor,
    key_mask: torch.Tensor | None = None,
) -> torch.Tensor:
    """softmax(Q K^T / sqrt(p_k)) V; masked keys get zero weight (renormalized)."""
    if queries.shape[-1] != keys.shape[-1]:
        raise ValueError(f"query width {queries.shape[-1]} != key width {keys.shape[-1]}")
    if keys.shape[-2] != values.shape[-2]:
        raise ValueError(f"key count {keys.shape[-2]} != value count {values.shape[-2]}")
    logits = queries @ keys.transpose(-2, -1) / math.sqrt(queries.shape[-1])
    if key_mask is not None:
        if not bool(key_mask.any(dim=-1).all()):
            raise ValueError("key mask leaves a sequence with no valid keys")
        logits = logits.masked_fill(~key_mask.unsqueeze(-2), float("-inf"))
    return softmax_rows(logits) @ values


class MultiHeadAttention(nn.Module):
    """Independently projected heads, concatenated and linearly recombined."""

    def __init__(self, config: AttentionConfig):
        super().__init__()
        self.config = config
        inner = config.heads * config.head_dim
        self.q_proj = nn.Linear(config.dim, inner)
        self.k_proj = nn.Linear(config.dim, inner)
        self.v_proj = nn.Linear(config.dim, inner)
        self.out_proj = nn.Linear(inner, config.dim)

    def _split_heads(self, x: torch.Tensor) -> torch.Tensor:
        *lead, length, _ = x.shape
        x = x.reshape(*lead, length, self.config.heads, self.config.head_dim)
        return x.transpose(-3, -2)  # (..., heads, L, head_dim)

    def forward(
        self,
        q_seq: torch.Tensor,
        k_seq: torch.Tensor,
        v_seq: torch.Tensor,
        key_mask: torch.Tensor | None = None,
    ) -> torch.Tensor:
        for name, seq in (("query", q_seq), ("key", k_seq), ("value", v_seq)):
            if seq.shape[-1] != self.config.dim:
                raise ValueError(
                    f"{name} width {seq.shape[-1]} does not match model dim {self.config.dim}"
                )
        q = self._split_heads(self.q_proj(q_seq))
        k = self._split_heads(self.k_proj(k_seq))
        v = self._split_heads(self.v_proj(v_seq))
        mask = key_mask.unsqueeze(-2) if key_mask is not None else None  # add head axis
        attended = self._merge_heads(scaled_dot_attention(q, k, v, mask))
        return self.out_proj(attended)

    def _merge_heads(self, x: torch.Tensor) -> torch.Tensor:
        *lead, heads, length, head_dim = x.shape
        return x.transpose(-3, -2).reshape(*lead, length, heads * head_dim)


class FeedForward(nn.Module):
    def __init__(self, dim: int, hidden: int, activation: str = "relu"):
        super().__init__()
        self.lin1 = nn.Linear(dim, hidden)
        self.lin2 = nn.Linear(hidden, dim)
        self.act = {"relu": torch.relu, "gelu": nn.functional.gelu}[activation]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.lin2(self.act(self.lin1(x)))


class SelfAttentionBlock(nn.Module):
    """Post-norm residual block: LN(x + MHA(x)), then LN(y + FFN(y)) with ReLU."""

    def __init__(self, config: AttentionConfig):
        super().__init__()
        self.mha = MultiHeadAttention(config)
        self.ffn = FeedForward(config.dim, config.hidden, "relu")
        self.norm1 = nn.LayerNorm(config.dim)
        self.norm2 = nn.LayerNorm(config.dim)

    def forward(self, x: torch.Tensor, key_mask: torch.Tensor | None = None) -> torch.Tensor:
        y = self.norm1(x + self.mha(x, x, x, key_mask))
        return self.norm2(y + self.ffn(y))


class GuidedAttentionBlock(nn.Module):
    """Same wiring as SelfAttentionBlock, with keys/values from the other modality."""

    def __init__(self, config: AttentionConfig):
        super().__init__()
        self.mha = MultiHeadAttention(config)
        self.ffn = FeedForward(config.dim, config.hidden, "relu")
        self.norm1 = nn.LayerNorm(config.dim)
        self.norm2 = nn.LayerNorm(config.dim)

    def forward(
        self,
        x_q: torch.Tensor,
        x_kv: torch.Tensor,
        key_mask: torch.Tensor | None = None,
    ) -> torch.Tensor:
        y = self.norm1(x_q + self.mha(x_q, x_kv, x_kv, key_mask))
        return self.norm2(y + self.ffn(y))
