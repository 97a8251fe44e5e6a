"""Byte-level tokenizer with a fixed special-token tail.

Every UTF-8 string maps losslessly to its byte values (ids 0..255); four
special ids are appended after the byte range so the vocabulary is fixed at
260 without any training step.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Iterator

BYTE_RANGE = 256
PAD_ID = 256
BOS_ID = 257
EOS_ID = 258
SEP_ID = 259
VOCAB_SIZE = 260

_SPECIALS = (("pad", PAD_ID), ("bos", BOS_ID), ("eos", EOS_ID), ("sep", SEP_ID))


def tokenizer_id() -> str:
    """Stable digest identifying this tokenizer's id/string mapping."""
    spec = "byte-fallback;" + ";".join(f"{n}={i}" for n, i in _SPECIALS)
    return "byte-" + hashlib.sha256(spec.encode()).hexdigest()[:12]


TOKENIZER_ID = tokenizer_id()


@dataclass(frozen=True)
class TokenSequence:
    """An immutable run of token ids plus the digest of the tokenizer that made it."""

    ids: tuple[int, ...]
    tokenizer: str = field(default=TOKENIZER_ID)

    def __post_init__(self) -> None:
        for t in self.ids:
            if not 0 <= t < VOCAB_SIZE:
                raise ValueError(f"token id {t} outside [0, {VOCAB_SIZE})")

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self) -> Iterator[int]:
        return iter(self.ids)

    def __getitem__(self, idx) -> "TokenSequence":
        if isinstance(idx, slice):
            return TokenSequence(self.ids[idx], self.tokenizer)
        raise TypeError("TokenSequence supports slice indexing only")

    def __add__(self, other: "TokenSequence") -> "TokenSequence":
        if self.tokenizer != other.tokenizer:
            raise ValueError("cannot concatenate sequences from different tokenizers")
        return TokenSequence(self.ids + other.ids, self.tokenizer)


def tokenize(text: str) -> TokenSequence:
    """Encode a string as its UTF-8 byte values. Lossless for any input."""
    return TokenSequence(tuple(text.encode("utf-8")))


def detokenize(seq: TokenSequence | Iterable[int]) -> str:
    """Decode byte-valued ids back to text; special ids are dropped.

    Inverse of :func:`tokenize` for sequences it produced.
    """
    ids = seq.ids if isinstance(seq, TokenSequence) else tuple(seq)
    return bytes(t for t in ids if t < BYTE_RANGE).decode("utf-8", errors="replace")
