"""Bloom filter over protected token n-grams.

Sized by the standard optimal formulas for a target false-positive rate;
membership uses double hashing over two keyed 64-bit blake2b digests, so
probes are platform-stable and never false-negative.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import ChunkPair

FILTER_MAGIC = b"ULABNGRF"
FILTER_VERSION = 1


class FilterError(RuntimeError):
    pass


def optimal_bits(expected_items: int, fp_rate: float) -> int:
    """m = ceil(-N ln p / (ln 2)^2)."""
    if expected_items < 1 or not 0 < fp_rate < 1:
        raise FilterError("need expected_items >= 1 and 0 < fp_rate < 1")
    return math.ceil(-expected_items * math.log(fp_rate) / (math.log(2) ** 2))


def optimal_hashes(m: int, expected_items: int) -> int:
    """k = max(1, round((m/N) ln 2))."""
    return max(1, round((m / expected_items) * math.log(2)))


class NGramFilter:
    """Fixed-size bit array answering 'was this n-gram inserted?' with no false negatives."""

    def __init__(self, ngram_n: int, num_bits: int, num_hashes: int):
        if ngram_n < 2:
            raise FilterError("ngram_n must be >= 2")
        if num_bits < 1 or num_hashes < 1:
            raise FilterError("num_bits and num_hashes must be >= 1")
        self.ngram_n = ngram_n
        self.num_bits = num_bits
        self.num_hashes = num_hashes
        self.items_inserted = 0
        self._bytes = np.zeros((num_bits + 7) // 8, dtype=np.uint8)

    @classmethod
    def sized_for(
        cls, expected_items: int, fp_rate: float = 1e-3, ngram_n: int = 6
    ) -> "NGramFilter":
        m = optimal_bits(expected_items, fp_rate)
        return cls(ngram_n=ngram_n, num_bits=m, num_hashes=optimal_hashes(m, expected_items))

    def _positions(self, ngram: Sequence[int]) -> list[int]:
        if len(ngram) != self.ngram_n:
            raise FilterError(
                f"n-gram length {len(ngram)} does not match filter n={self.ngram_n}"
            )
        data = struct.pack(f"<{self.ngram_n}I", *ngram)
        h1 = int.from_bytes(hashlib.blake2b(data, digest_size=8, key=b"ngram-h1").digest(), "little")
        h2 = int.from_bytes(hashlib.blake2b(data, digest_size=8, key=b"ngram-h2").digest(), "little")
        h2 |= 1
        return [(h1 + i * h2) % self.num_bits for i in range(self.num_hashes)]

    def insert(self, ngram: Sequence[int]) -> None:
        for pos in self._positions(ngram):
            self._bytes[pos >> 3] |= 1 << (pos & 7)
        self.items_inserted += 1

    def contains(self, ngram: Sequence[int]) -> bool:
        return all(
            self._bytes[pos >> 3] & (1 << (pos & 7)) for pos in self._positions(ngram)
        )

    def set_all(self) -> None:
        """Degenerate all-ones state; every probe answers True."""
        self._bytes[:] = 0xFF

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, NGramFilter)
            and (self.ngram_n, self.num_bits, self.num_hashes, self.items_inserted)
            == (other.ngram_n, other.num_bits, other.num_hashes, other.items_inserted)
            and np.array_equal(self._bytes, other._bytes)
        )


def ngrams_of(token_ids: Sequence[int], n: int) -> Iterable[tuple[int, ...]]:
    ids = tuple(token_ids)
    for i in range(len(ids) - n + 1):
        yield ids[i : i + n]


def filter_insert(filt: NGramFilter, corpus: Iterable[ChunkPair]) -> NGramFilter:
    """Insert every sliding n-gram of each chunk's prompt+continuation stream."""
    for chunk in corpus:
        for gram in ngrams_of(chunk.tokens.ids, filt.ngram_n):
            filt.insert(gram)
    return filt


def filter_contains(filt: NGramFilter, ngram: Sequence[int]) -> bool:
    return filt.contains(ngram)


def build_filter_for_chunks(
    chunks: Sequence[ChunkPair], fp_rate: float = 1e-3, ngram_n: int = 6
) -> NGramFilter:
    expected = sum(max(0, len(c.tokens) - ngram_n + 1) for c in chunks)
    filt = NGramFilter.sized_for(max(1, expected), fp_rate, ngram_n)
    return filter_insert(filt, chunks)


def filter_save(filt: NGramFilter, path: str | Path) -> None:
    path = Path(path)
    payload = filt._bytes.tobytes()
    header = {
        "ngram_n": filt.ngram_n,
        "num_bits": filt.num_bits,
        "num_hashes": filt.num_hashes,
        "items_inserted": filt.items_inserted,
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(FILTER_MAGIC)
        fh.write(struct.pack("<II", FILTER_VERSION, len(blob)))
        fh.write(blob)
        fh.write(payload)
    os.replace(tmp, path)


def filter_load(path: str | Path) -> NGramFilter:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < len(FILTER_MAGIC) + 8 or data[: len(FILTER_MAGIC)] != FILTER_MAGIC:
        raise FilterError(f"{path}: not an n-gram filter file")
    version, hlen = struct.unpack_from("<II", data, len(FILTER_MAGIC))
    if version != FILTER_VERSION:
        raise FilterError(f"{path}: unsupported filter version {version}")
    hstart = len(FILTER_MAGIC) + 8
    header = json.loads(data[hstart : hstart + hlen])
    payload = data[hstart + hlen :]
    if hashlib.sha256(payload).hexdigest() != header["sha256"]:
        raise FilterError(f"{path}: bit-array digest mismatch")
    filt = NGramFilter(header["ngram_n"], header["num_bits"], header["num_hashes"])
    arr = np.frombuffer(payload, dtype=np.uint8)
    if arr.size != filt._bytes.size:
        raise FilterError(f"{path}: bit-array length mismatch")
    filt._bytes = arr.copy()
    filt.items_inserted = header["items_inserted"]
    return filt
