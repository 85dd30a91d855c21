"""Transformer encoder over fused embeddings, prediction heads, and the full model.

The classification head is a linear layer with softmax; the localization head
is a three-layer perceptron with ReLU plus a final linear projection squashed
by a sigmoid into normalized center form (cx, cy, w, h), DETR-style.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import torch
from torch import nn

from .attention import AttentionConfig, FeedForward, MultiHeadAttention, softmax_rows
from .fusion import FusionModule
from .text import TextEmbedding, Vocabulary, embed_text
from .vision import VisualEmbedding, embed_visual


class EncoderBlock(nn.Module):
    """Pre-norm transformer block with a GELU feed-forward."""

    def __init__(self, config: AttentionConfig):
        super().__init__()
        self.mha = MultiHeadAttention(config)
        self.ffn = FeedForward(config.dim, config.hidden, "gelu")
        self.norm1 = nn.LayerNorm(config.dim)
        self.norm2 = nn.LayerNorm(config.dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = self.norm1(x)
        x = x + self.mha(y, y, y)
        return x + self.ffn(self.norm2(x))


class SequenceEncoder(nn.Module):
    """Learned CLS row prepended to the sequence, `depth` blocks, final norm."""

    def __init__(self, config: AttentionConfig, depth: int):
        super().__init__()
        if depth < 0:
            raise ValueError(f"encoder depth must be >= 0, got {depth}")
        self.cls_token = nn.Parameter(torch.zeros(config.dim))
        self.blocks = nn.ModuleList(EncoderBlock(config) for _ in range(depth))
        self.final_norm = nn.LayerNorm(config.dim)

    def forward(self, x: torch.Tensor):
        cls_row = self.cls_token.expand(*x.shape[:-2], 1, x.shape[-1])
        x = torch.cat((cls_row, x), dim=-2)
        for block in self.blocks:
            x = block(x)
        x = self.final_norm(x)
        return x[..., 0, :], x[..., 1:, :]


class ClassifierHead(nn.Module):
    """Linear projection to answer classes followed by softmax probabilities."""

    def __init__(self, dim: int, num_classes: int):
        super().__init__()
        self.proj = nn.Linear(dim, num_classes)

    def forward(self, cls_out: torch.Tensor) -> torch.Tensor:
        return softmax_rows(self.proj(cls_out))


class BoxHead(nn.Module):
    """Three hidden linear+ReLU layers, then a projection squashed to (0,1)^4.

    Output order is center form: (cx, cy, w, h).
    """

    def __init__(self, dim: int):
        super().__init__()
        self.hidden = nn.ModuleList(nn.Linear(dim, dim) for _ in range(3))
        self.out = nn.Linear(dim, 4)

    def forward(self, cls_out: torch.Tensor) -> torch.Tensor:
        x = cls_out
        for layer in self.hidden:
            x = torch.relu(layer(x))
        return torch.sigmoid(self.out(x))


def box_to_corners(center_box: torch.Tensor, clamp: bool = True) -> torch.Tensor:
    """(cx, cy, w, h) -> (x1, y1, x2, y2), optionally clamped to the unit square."""
    cx, cy, w, h = center_box.unbind(-1)
    corners = torch.stack((cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2), dim=-1)
    return corners.clamp(0.0, 1.0) if clamp else corners


def corners_to_center(corner_box: torch.Tensor) -> torch.Tensor:
    """(x1, y1, x2, y2) -> (cx, cy, w, h)."""
    x1, y1, x2, y2 = corner_box.unbind(-1)
    return torch.stack(((x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1), dim=-1)


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    embed_dim: int = 64
    num_heads: int = 4
    text_len: int = 16
    image_size: int = 64
    patch_size: int = 8
    encoder_kind: str = "patch"
    fusion_strategy: str = "catvil_t2v"
    coattn_depth: int = 2
    encoder_depth: int = 2
    num_classes: int = 18
    scalar_gate: bool = False

    def attention_config(self) -> AttentionConfig:
        return AttentionConfig(self.embed_dim, self.num_heads)


class VQLAModel(nn.Module):
    """End-to-end answer classifier and box regressor over image/question pairs."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        attn = config.attention_config()
        self.text_embed = TextEmbedding(config.vocab_size, config.embed_dim, config.text_len)
        self.visual_embed = VisualEmbedding(
            config.image_size, config.patch_size, config.embed_dim, config.encoder_kind
        )
        self.fusion = FusionModule(
            config.fusion_strategy, attn, config.coattn_depth, config.scalar_gate
        )
        self.encoder = SequenceEncoder(attn, config.encoder_depth)
        self.classifier = ClassifierHead(config.embed_dim, config.num_classes)
        self.box_head = BoxHead(config.embed_dim)

    def forward(self, images: torch.Tensor, token_ids: torch.Tensor):
        """Returns (class probabilities, center-form boxes)."""
        text_seq = embed_text(token_ids, self.text_embed)
        visual_seq = embed_visual(images, self.visual_embed)
        fused = self.fusion(visual_seq, text_seq)
        cls_out, _ = self.encoder(fused)
        return self.classifier(cls_out), self.box_head(cls_out)


def initialize_parameters(model: nn.Module, seed: int) -> None:
    """Deterministic init: fan-in uniform for weight matrices, zero biases,
    N(0, 0.02) for embedding tables and the CLS token."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, param in model.named_parameters():
            if name.endswith("_table") or name.endswith("cls_token"):
                param.normal_(0.0, 0.02, generator=gen)
            elif param.dim() >= 2:
                bound = 1.0 / math.sqrt(param.shape[1:].numel())
                param.uniform_(-bound, bound, generator=gen)
            elif name.endswith("bias"):
                param.zero_()
            # 1-D LayerNorm scales keep their default ones


def save_checkpoint(path, model: VQLAModel, vocab: Vocabulary, seed: int, train_config=None) -> None:
    """Self-contained checkpoint embedding the model config, vocabulary, and seed."""
    torch.save({
        "model_config": asdict(model.config),
        "state_dict": model.state_dict(),
        "vocab": list(vocab.tokens),
        "seed": int(seed),
        "train_config": dict(train_config) if train_config is not None else None,
    }, path)


def load_checkpoint(path):
    """Returns (model in eval mode, vocabulary, raw payload)."""
    payload = torch.load(path, weights_only=False)
    config = ModelConfig(**payload["model_config"])
    model = VQLAModel(config).double()
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, Vocabulary(payload["vocab"]), payload
