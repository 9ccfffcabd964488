"""Hashed bag-of-words text encoder.

Replaces a pretrained text tower: each word hashes into a frozen, seeded
embedding table, words are dealt round-robin into a fixed number of token
slots, and each slot is the mean of its words (zero when empty). The output
depends only on the text and the encoder config, so embeddings can be
cached and reused across training runs; any learned processing is the
denoiser's text projection.
"""

from __future__ import annotations

import re

import numpy as np

from ..rng import child_seed, np_rng
from ..types import TextEmbedding

_WORD_RE = re.compile(r"[a-z0-9]+")


class TextEncoder:
    def __init__(
        self,
        d_text: int,
        n_tokens: int = 8,
        vocab_buckets: int = 4096,
        seed: int = 0,
    ):
        self.d_text = d_text
        self.n_tokens = n_tokens
        self.vocab_buckets = vocab_buckets
        self.seed = seed
        rng = np_rng(seed, "text-table")
        self._table = rng.standard_normal((vocab_buckets, d_text)).astype(
            np.float32
        ) / np.sqrt(d_text)

    def _bucket(self, word: str) -> int:
        return child_seed(self.seed, "word", word) % self.vocab_buckets

    def encode(self, text: str) -> TextEmbedding:
        words = _WORD_RE.findall(text.lower())
        tokens = np.zeros((self.n_tokens, self.d_text), dtype=np.float32)
        counts = np.zeros(self.n_tokens, dtype=np.int64)
        for i, w in enumerate(words):
            slot = i % self.n_tokens
            tokens[slot] += self._table[self._bucket(w)]
            counts[slot] += 1
        nonzero = counts > 0
        tokens[nonzero] /= counts[nonzero, None]
        return TextEmbedding(tokens=tokens, source_text=text)

    def config(self) -> dict:
        return {
            "d_text": self.d_text,
            "n_tokens": self.n_tokens,
            "vocab_buckets": self.vocab_buckets,
            "seed": self.seed,
        }
