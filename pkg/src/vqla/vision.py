"""Visual embedding sequences from images: trainable patch encoder + segment + position."""

from __future__ import annotations

import torch
from torch import nn

from .sequence import EmbeddingSequence
from .text import VISUAL_SEGMENT

ENCODER_KINDS = ("patch", "conv")


def patchify(image: torch.Tensor, patch_size: int) -> torch.Tensor:
    """Split (..., H, W, 3) into flattened P*P*3 patch rows in row-major patch order."""
    *lead, h, w, c = image.shape
    p = patch_size
    if h % p or w % p:
        raise ValueError(f"image size {(h, w)} not divisible by patch size {p}")
    x = image.reshape(*lead, h // p, p, w // p, p, c)
    x = x.movedim(-4, -3)  # -> (..., h/p, w/p, p, p, c)
    return x.reshape(*lead, (h // p) * (w // p), p * p * c)


def unpatchify(patches: torch.Tensor, height: int, width: int, patch_size: int) -> torch.Tensor:
    """Inverse of patchify for (..., L, P*P*3) rows back to (..., H, W, 3)."""
    *lead, _, _ = patches.shape
    p = patch_size
    x = patches.reshape(*lead, height // p, width // p, p, p, 3)
    x = x.movedim(-3, -4)
    return x.reshape(*lead, height, width, 3)


class PatchProjector(nn.Module):
    """Linear projection of raw image patches."""

    def __init__(self, patch_size: int, dim: int):
        super().__init__()
        self.patch_size = patch_size
        self.proj = nn.Linear(patch_size * patch_size * 3, dim)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        return self.proj(patchify(image, self.patch_size))


class ConvPatchEncoder(nn.Module):
    """Two conv layers followed by patch-grid average pooling; same output shape."""

    def __init__(self, patch_size: int, dim: int, hidden_channels: int = 16):
        super().__init__()
        self.patch_size = patch_size
        self.conv1 = nn.Conv2d(3, hidden_channels, kernel_size=3, padding=1)
        self.conv2 = nn.Conv2d(hidden_channels, dim, kernel_size=3, padding=1)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        squeeze = image.dim() == 3
        x = image.unsqueeze(0) if squeeze else image
        x = x.movedim(-1, -3)  # NHWC -> NCHW
        x = torch.relu(self.conv1(x))
        x = torch.relu(self.conv2(x))
        x = torch.nn.functional.avg_pool2d(x, self.patch_size)
        x = x.movedim(-3, -1)
        x = x.reshape(x.shape[0], -1, x.shape[-1])
        return x.squeeze(0) if squeeze else x


class VisualEmbedding(nn.Module):
    """Patch row k of the output is features[k] + segment_table[1] + position_table[k]."""

    def __init__(self, image_size: int, patch_size: int, dim: int, encoder_kind: str = "patch"):
        super().__init__()
        if image_size % patch_size:
            raise ValueError(f"image size {image_size} not divisible by patch size {patch_size}")
        grid = image_size // patch_size
        self.num_patches = grid * grid
        if encoder_kind == "patch":
            self.encoder = PatchProjector(patch_size, dim)
        elif encoder_kind == "conv":
            self.encoder = ConvPatchEncoder(patch_size, dim)
        else:
            raise ValueError(f"unknown encoder kind: {encoder_kind!r}")
        self.encoder_kind = encoder_kind
        self.segment_table = nn.Parameter(torch.zeros(2, dim))
        self.position_table = nn.Parameter(torch.zeros(self.num_patches, dim))

    def features(self, image: torch.Tensor) -> torch.Tensor:
        """Encoder output before segment/position rows are added."""
        return self.encoder(image)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        return self.features(image) + self.segment_table[VISUAL_SEGMENT] + self.position_table


def embed_visual(image: torch.Tensor, params: VisualEmbedding) -> EmbeddingSequence:
    return EmbeddingSequence(params(image), "visual")
