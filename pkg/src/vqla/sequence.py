"""Modality-tagged embedding sequences passed between the pipelines and fusion."""

from dataclasses import dataclass

import torch


@dataclass
class EmbeddingSequence:
    """A (..., L, d) batch of embedding rows with its source modality.

    key_mask, when present, is a (..., L) boolean tensor that is False at
    padding positions; attention over these rows as keys is suppressed.
    """

    vectors: torch.Tensor
    modality: str  # "text" or "visual"
    key_mask: torch.Tensor | None = None

    def __post_init__(self):
        if self.modality not in ("text", "visual"):
            raise ValueError(f"unknown modality: {self.modality!r}")
        if self.key_mask is not None and self.key_mask.shape != self.vectors.shape[:-1]:
            raise ValueError(
                f"key mask shape {tuple(self.key_mask.shape)} does not match "
                f"sequence shape {tuple(self.vectors.shape[:-1])}"
            )
