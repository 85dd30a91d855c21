"""Vision-language fusion strategies: co-attention stacks, gated mixing, registry.

Strategy names (CLI/config values):

  concat             stack visual then text rows along the sequence axis
  gated              gated convex mix of the aligned raw embeddings
  self_attn          per-modality self-attention stacks, then concatenation
  guided_attn        text-guided attention over visual rows, then concatenation
  coattn_bi/v2t/t2v  co-attention stack in the given direction, then concatenation
  self_attn_gated    self-attention stacks, then gated mixing
  guided_attn_gated  guided attention, then gated mixing
  catvil_bi/v2t/t2v  co-attention stack, then gated mixing (t2v is the headline)
"""

from __future__ import annotations

import torch
from torch import nn

from .attention import AttentionConfig, GuidedAttentionBlock, SelfAttentionBlock
from .sequence import EmbeddingSequence

T2V, V2T, BI = "t2v", "v2t", "bi"

FUSION_STRATEGIES = (
    "concat",
    "gated",
    "self_attn",
    "guided_attn",
    "coattn_bi",
    "coattn_v2t",
    "coattn_t2v",
    "self_attn_gated",
    "guided_attn_gated",
    "catvil_bi",
    "catvil_v2t",
    "catvil_t2v",
)

GATED_STRATEGIES = tuple(s for s in FUSION_STRATEGIES if s == "gated" or s.endswith("_gated") or s.startswith("catvil"))


class SelfStack(nn.Module):
    def __init__(self, config: AttentionConfig, depth: int):
        super().__init__()
        self.blocks = nn.ModuleList(SelfAttentionBlock(config) for _ in range(depth))

    def forward(self, x: torch.Tensor, key_mask: torch.Tensor | None = None) -> torch.Tensor:
        for block in self.blocks:
            x = block(x, key_mask)
        return x


class GuidedBranch(nn.Module):
    """Per layer: self-attention within the branch, then attention guided by the other modality."""

    def __init__(self, config: AttentionConfig, depth: int):
        super().__init__()
        self.self_blocks = nn.ModuleList(SelfAttentionBlock(config) for _ in range(depth))
        self.guided_blocks = nn.ModuleList(GuidedAttentionBlock(config) for _ in range(depth))

    def forward(self, x, guide, self_mask=None, guide_mask=None):
        for self_block, guided_block in zip(self.self_blocks, self.guided_blocks):
            x = self_block(x, self_mask)
            x = guided_block(x, guide, guide_mask)
        return x


class CoAttentionStack(nn.Module):
    """Paired self/guided attention over both modalities.

    t2v: text runs a pure self-attention stack; the visual branch interleaves
    self-attention with attention guided by the final text output. v2t swaps
    the roles. bi runs both guided branches, each conditioned on the other
    modality's self-attended output.
    """

    def __init__(self, config: AttentionConfig, depth: int, direction: str):
        super().__init__()
        if direction not in (T2V, V2T, BI):
            raise ValueError(f"unknown co-attention direction: {direction!r}")
        if depth < 0:
            raise ValueError(f"depth must be >= 0, got {depth}")
        self.direction = direction
        self.depth = depth
        if direction in (T2V, BI):
            self.text_self = SelfStack(config, depth)
            self.visual_branch = GuidedBranch(config, depth)
        if direction in (V2T, BI):
            self.visual_self = SelfStack(config, depth)
            self.text_branch = GuidedBranch(config, depth)

    def forward(self, visual, text, text_mask=None, visual_mask=None):
        if self.direction == T2V:
            text_out = self.text_self(text, text_mask)
            visual_out = self.visual_branch(visual, text_out, visual_mask, text_mask)
        elif self.direction == V2T:
            visual_out = self.visual_self(visual, visual_mask)
            text_out = self.text_branch(text, visual_out, text_mask, visual_mask)
        else:
            text_encoded = self.text_self(text, text_mask)
            visual_encoded = self.visual_self(visual, visual_mask)
            visual_out = self.visual_branch(visual, text_encoded, visual_mask, text_mask)
            text_out = self.text_branch(text, visual_encoded, text_mask, visual_mask)
        return visual_out, text_out


class GatedFusion(nn.Module):
    """Per-position convex mix: w * tanh(V E_v) + (1 - w) * tanh(T E_t).

    The gate w = sigmoid(W [E_v || E_t]) is per-feature by default; with
    scalar_gate=True a single gate value is shared across features.
    """

    def __init__(self, dim: int, scalar_gate: bool = False):
        super().__init__()
        self.visual_map = nn.Linear(dim, dim, bias=False)
        self.text_map = nn.Linear(dim, dim, bias=False)
        self.gate_map = nn.Linear(2 * dim, 1 if scalar_gate else dim, bias=False)

    def forward(self, visual: torch.Tensor, text: torch.Tensor) -> torch.Tensor:
        if visual.shape != text.shape:
            raise ValueError(
                f"gated fusion needs aligned sequences, got {tuple(visual.shape)} vs {tuple(text.shape)}"
            )
        gate = torch.sigmoid(self.gate_map(torch.cat((visual, text), dim=-1)))
        return gate * torch.tanh(self.visual_map(visual)) + (1.0 - gate) * torch.tanh(self.text_map(text))


def align_sequences(visual: torch.Tensor, text: torch.Tensor):
    """Zero-pad the shorter sequence at the tail so both reach max(L_v, L_t)."""
    target = max(visual.shape[-2], text.shape[-2])
    return _pad_tail(visual, target), _pad_tail(text, target)


def _pad_tail(x: torch.Tensor, length: int) -> torch.Tensor:
    if x.shape[-2] == length:
        return x
    pad_shape = list(x.shape)
    pad_shape[-2] = length - x.shape[-2]
    return torch.cat((x, x.new_zeros(pad_shape)), dim=-2)


class FusionModule(nn.Module):
    """Strategy-selected fusion of a visual and a text embedding sequence."""

    def __init__(
        self,
        strategy: str,
        config: AttentionConfig,
        depth: int = 2,
        scalar_gate: bool = False,
    ):
        super().__init__()
        if strategy not in FUSION_STRATEGIES:
            raise ValueError(f"unknown fusion strategy: {strategy!r}")
        self.strategy = strategy
        self.depth = depth
        if strategy in ("self_attn", "self_attn_gated"):
            self.visual_self = SelfStack(config, depth)
            self.text_self = SelfStack(config, depth)
        elif strategy in ("guided_attn", "guided_attn_gated"):
            self.guided_blocks = nn.ModuleList(GuidedAttentionBlock(config) for _ in range(depth))
        elif strategy.startswith(("coattn_", "catvil_")):
            self.coattn = CoAttentionStack(config, depth, strategy.rsplit("_", 1)[-1])
        if strategy in GATED_STRATEGIES:
            self.gate = GatedFusion(config.dim, scalar_gate)

    def forward(self, visual: EmbeddingSequence, text: EmbeddingSequence) -> torch.Tensor:
        ev, et = visual.vectors, text.vectors
        v_mask, t_mask = visual.key_mask, text.key_mask
        s = self.strategy
        if s == "concat":
            return torch.cat((ev, et), dim=-2)
        if s == "gated":
            return self.gate(*align_sequences(ev, et))
        if s in ("self_attn", "self_attn_gated"):
            ev = self.visual_self(ev, v_mask)
            et = self.text_self(et, t_mask)
        elif s in ("guided_attn", "guided_attn_gated"):
            for block in self.guided_blocks:
                ev = block(ev, et, t_mask)
        else:
            ev, et = self.coattn(ev, et, text_mask=t_mask, visual_mask=v_mask)
        if s in GATED_STRATEGIES:
            return self.gate(*align_sequences(ev, et))
        return torch.cat((ev, et), dim=-2)

    def fused_length(self, visual_len: int, text_len: int) -> int:
        if self.strategy in GATED_STRATEGIES:
            return max(visual_len, text_len)
        return visual_len + text_len
