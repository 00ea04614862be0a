"""Stand-in for a frozen text encoder: a word embedding table, mean-pooled
and passed through a small MLP. The vocabulary is fixed when the base model
is pretrained; unseen words map to a shared unknown token. The empty prompt
gets its own learned vector (the unconditional branch)."""

from __future__ import annotations

import re
from typing import Sequence

import torch
from torch import nn

_WORD = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return _WORD.findall(text.lower())


class TextEncoder(nn.Module):
    PAD, UNK = 0, 1

    def __init__(self, vocab: Sequence[str] = (), dim: int = 64, width: int = 64,
                 max_vocab: int = 512):
        super().__init__()
        self.dim = dim
        self.max_vocab = max_vocab
        self.vocab: list[str] = []
        self._index: dict[str, int] = {}
        self.table = nn.Embedding(max_vocab, width)
        self.null = nn.Parameter(torch.zeros(dim))
        self.mlp = nn.Sequential(nn.Linear(width, width), nn.SiLU(), nn.Linear(width, dim))
        if vocab:
            self.set_vocab(vocab)

    def set_vocab(self, words: Sequence[str]):
        words = list(dict.fromkeys(words))
        if len(words) + 2 > self.max_vocab:
            raise ValueError(f"vocabulary of {len(words)} words exceeds table size")
        self.vocab = words
        self._index = {w: i + 2 for i, w in enumerate(words)}

    def build_vocab(self, texts: Sequence[str]):
        seen = list(self.vocab)
        for t in texts:
            seen.extend(tokenize(t))
        self.set_vocab(seen)

    def ids(self, text: str) -> list[int]:
        return [self._index.get(w, self.UNK) for w in tokenize(text)]

    def forward(self, texts: Sequence[str]) -> torch.Tensor:
        dtype = self.null.dtype
        rows = []
        for t in texts:
            ids = self.ids(t)
            if not ids:
                rows.append(self.null)
                continue
            e = self.table(torch.tensor(ids)).mean(0)
            rows.append(self.mlp(e.to(dtype)))
        return torch.stack(rows)
