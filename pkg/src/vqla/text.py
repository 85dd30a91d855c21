"""Question tokenization and the summed text embedding (token + segment + position)."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .sequence import EmbeddingSequence

PAD_ID, UNK_ID, CLS_ID, SEP_ID = 0, 1, 2, 3
SPECIAL_TOKENS = ("[PAD]", "[UNK]", "[CLS]", "[SEP]")

# Segment ids: text rows carry segment 0, visual rows segment 1.
TEXT_SEGMENT = 0
VISUAL_SEGMENT = 1

_WORD_RE = re.compile(r"[a-z0-9]+")


def split_words(text: str) -> list[str]:
    """Lowercase, then split on whitespace and punctuation."""
    return _WORD_RE.findall(text.lower())


class Vocabulary:
    """Dense token-to-id map with fixed special tokens and first-occurrence order."""

    def __init__(self, tokens):
        tokens = list(tokens)
        if tokens[: len(SPECIAL_TOKENS)] != list(SPECIAL_TOKENS):
            tokens = list(SPECIAL_TOKENS) + tokens
        self.tokens = tokens
        self.token_to_id = {token: i for i, token in enumerate(tokens)}
        if len(self.token_to_id) != len(tokens):
            raise ValueError("duplicate tokens in vocabulary")

    @classmethod
    def build(cls, corpus) -> "Vocabulary":
        corpus = list(corpus)
        if not corpus:
            raise ValueError("cannot build a vocabulary from an empty corpus")
        seen: dict[str, None] = {}
        for question in corpus:
            for word in split_words(question):
                seen.setdefault(word)
        return cls(seen)

    def lookup(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def __len__(self) -> int:
        return len(self.tokens)

    def save(self, path) -> None:
        Path(path).write_text("".join(token + "\n" for token in self.tokens))

    @classmethod
    def load(cls, path) -> "Vocabulary":
        return cls(Path(path).read_text().splitlines())


def tokenize(question: str, vocab: Vocabulary, length: int) -> np.ndarray:
    """Encode as [CLS] t1..tk [SEP] [PAD]..., truncating words to fit length."""
    if length < 2:
        raise ValueError(f"sequence length must fit [CLS] and [SEP], got {length}")
    words = split_words(question)[: length - 2]
    ids = [CLS_ID] + [vocab.lookup(word) for word in words] + [SEP_ID]
    ids.extend([PAD_ID] * (length - len(ids)))
    return np.asarray(ids, dtype=np.int64)


class TextEmbedding(nn.Module):
    """Row i of the output is token_table[ids[i]] + segment_table[0] + position_table[i]."""

    def __init__(self, vocab_size: int, dim: int, max_len: int):
        super().__init__()
        self.vocab_size = vocab_size
        self.token_table = nn.Parameter(torch.zeros(vocab_size, dim))
        self.segment_table = nn.Parameter(torch.zeros(2, dim))
        self.position_table = nn.Parameter(torch.zeros(max_len, dim))

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        length = ids.shape[-1]
        if length > self.position_table.shape[0]:
            raise ValueError(
                f"sequence length {length} exceeds position table size "
                f"{self.position_table.shape[0]}"
            )
        if int(ids.min()) < 0 or int(ids.max()) >= self.vocab_size:
            raise ValueError(f"token id out of range for vocabulary size {self.vocab_size}")
        return self.token_table[ids] + self.segment_table[TEXT_SEGMENT] + self.position_table[:length]


def embed_text(ids, tables: TextEmbedding) -> EmbeddingSequence:
    ids = torch.as_tensor(np.asarray(ids), dtype=torch.long)
    return EmbeddingSequence(tables(ids), "text", key_mask=ids != PAD_ID)
