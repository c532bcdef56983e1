"""Pluggable text tokenization for the text encoder.

The paper-scale system uses a large pretrained multilingual tokenizer; at
desk scale any object with a ``vocab_size`` attribute and an
``encode(text) -> list[int]`` method can be plugged in.  The default is a
stateless word-hash tokenizer: deterministic across runs and processes
(CRC32, not Python's randomized hash).
"""

from __future__ import annotations

import zlib
from typing import Protocol


class TextTokenizer(Protocol):
    vocab_size: int

    def encode(self, text: str) -> list[int]: ...


PAD_TOKEN_ID = 0


class HashWordTokenizer:
    """Whitespace-split tokens hashed into a fixed-size vocabulary.

    Id 0 is reserved for padding; real tokens map to 1..vocab_size-1.
    """

    def __init__(self, vocab_size: int = 4096):
        if vocab_size < 2:
            raise ValueError("vocab_size must be at least 2")
        self.vocab_size = vocab_size

    def encode(self, text: str) -> list[int]:
        span = self.vocab_size - 1
        return [zlib.crc32(token.encode("utf-8")) % span + 1
                for token in text.split()]
