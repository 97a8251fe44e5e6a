"""Book ingestion, chunk carving, and per-time-step split assembly.

A corpus is a set of plain-text books. Each book is tokenized and carved into
fixed-size (prompt, continuation) chunk pairs; the splits used by a sequential
run (the per-step forget sets, the previously-forgotten sample, the retain
evaluation sample, and the auxiliary retain pool) are all built here with
seeded, reproducible sampling.
"""
from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .tokenizer import TokenSequence, detokenize, tokenize


class DocumentRole(str, Enum):
    FORGET = "forget-candidate"
    RETAIN = "retain"
    AUXILIARY = "auxiliary"


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class Document:
    id: str
    title: str
    text: str
    role: DocumentRole

    def __post_init__(self) -> None:
        if not self.text:
            raise CorpusError(f"document {self.id!r} has empty text")


@dataclass(frozen=True)
class ChunkPair:
    """One (prompt, continuation) unit carved from a book."""

    book_id: str
    chunk_index: int
    prompt: TokenSequence
    continuation: TokenSequence

    @property
    def key(self) -> tuple[str, int]:
        return (self.book_id, self.chunk_index)

    @property
    def tokens(self) -> TokenSequence:
        return self.prompt + self.continuation


@dataclass(frozen=True)
class SplitDataset:
    """All chunk splits for a sequential run.

    ``forget_per_step[t-1]`` holds every chunk of the book forgotten at step t.
    ``prev_per_step[t-1]`` holds the previously-forgotten sample evaluated at
    step t (empty at t=1). ``retain_eval`` is fixed across steps and
    ``aux_retain`` feeds only the gradient-difference baseline.
    """

    forget_per_step: tuple[tuple[ChunkPair, ...], ...]
    prev_per_step: tuple[tuple[ChunkPair, ...], ...]
    retain_eval: tuple[ChunkPair, ...]
    aux_retain: tuple[ChunkPair, ...]

    @property
    def num_steps(self) -> int:
        return len(self.forget_per_step)

    def forget_at(self, t: int) -> tuple[ChunkPair, ...]:
        self._check_step(t)
        return self.forget_per_step[t - 1]

    def prev_at(self, t: int) -> tuple[ChunkPair, ...]:
        self._check_step(t)
        return self.prev_per_step[t - 1]

    def all_forget(self) -> tuple[ChunkPair, ...]:
        return tuple(c for step in self.forget_per_step for c in step)

    def _check_step(self, t: int) -> None:
        if not 1 <= t <= self.num_steps:
            raise CorpusError(f"time step {t} outside 1..{self.num_steps}")


def stable_seed(*parts) -> int:
    """Derive a 64-bit seed from arbitrary labels, stable across runs and platforms."""
    blob = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little")


def normalize_text(raw: str) -> str:
    """Strip a UTF-8 BOM, normalize line endings to \\n, and trim outer whitespace."""
    text = raw.lstrip("﻿")
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    return text.strip()


def ingest_document(path: str | Path, role: DocumentRole | str) -> Document:
    """Load one book from a UTF-8 text file."""
    path = Path(path)
    if not path.is_file():
        raise CorpusError(f"no such file: {path}")
    try:
        raw = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise CorpusError(f"{path} is not valid UTF-8: {exc}") from exc
    text = normalize_text(raw)
    if not text:
        raise CorpusError(f"{path} is empty after normalization")
    return Document(id=path.stem, title=path.stem, text=text, role=DocumentRole(role))


def chunk_document(doc: Document, chunk_len: int, prompt_len: int) -> list[ChunkPair]:
    """Carve a book into consecutive chunk pairs of exactly ``chunk_len`` tokens.

    Chunk i covers tokens [i*chunk_len, (i+1)*chunk_len); the first
    ``prompt_len`` tokens are the prompt and the rest the continuation. A
    trailing partial chunk is dropped.
    """
    if not 0 < prompt_len < chunk_len:
        raise CorpusError(f"need 0 < prompt_len < chunk_len, got {prompt_len}/{chunk_len}")
    toks = tokenize(doc.text)
    n_chunks = len(toks) // chunk_len
    if n_chunks == 0:
        raise CorpusError(
            f"document {doc.id!r} has {len(toks)} tokens, shorter than one chunk ({chunk_len})"
        )
    pairs = []
    for i in range(n_chunks):
        lo = i * chunk_len
        pairs.append(
            ChunkPair(
                book_id=doc.id,
                chunk_index=i,
                prompt=toks[lo : lo + prompt_len],
                continuation=toks[lo + prompt_len : lo + chunk_len],
            )
        )
    return pairs


def sample_chunks(pool: Sequence[ChunkPair], n: int, seed: int) -> list[ChunkPair]:
    """Draw min(n, |pool|) distinct chunks; a fixed seed fixes the draw."""
    if n < 0:
        raise CorpusError(f"sample size must be >= 0, got {n}")
    k = min(n, len(pool))
    return random.Random(seed).sample(list(pool), k)


def build_schedule(
    forget_books: Sequence[Document],
    retain_books: Sequence[Document],
    chunk_len: int,
    prompt_len: int,
    samples_per_split: int,
    seed: int,
    aux_books: Sequence[Document] = (),
) -> SplitDataset:
    """Assemble the splits for a run that forgets one book per time step.

    Each step's forget set uses every chunk of that book. The
    previously-forgotten sample at step t is redrawn from the union of all
    chunks of books forgotten at steps < t. The retain evaluation sample is
    drawn once from the retain books and reused at every step.
    """
    if not forget_books:
        raise CorpusError("need at least one forget book")
    if samples_per_split < 1:
        raise CorpusError(f"samples_per_split must be >= 1, got {samples_per_split}")
    forget_ids = {d.id for d in forget_books}
    if len(forget_ids) != len(forget_books):
        raise CorpusError("duplicate ids among forget books")
    for d in list(retain_books) + list(aux_books):
        if d.id in forget_ids:
            raise CorpusError(f"book id {d.id!r} appears in both forget and retain/aux sets")

    forget_per_step = tuple(
        tuple(chunk_document(d, chunk_len, prompt_len)) for d in forget_books
    )
    prev_per_step = []
    for t in range(1, len(forget_books) + 1):
        pool = [c for step in forget_per_step[: t - 1] for c in step]
        prev_per_step.append(
            tuple(sample_chunks(pool, samples_per_split, stable_seed(seed, "d_prev", t)))
        )

    retain_pool = [c for d in retain_books for c in chunk_document(d, chunk_len, prompt_len)]
    retain_eval = tuple(
        sample_chunks(retain_pool, samples_per_split, stable_seed(seed, "d_nor"))
    )
    aux_retain = tuple(
        c for d in aux_books for c in chunk_document(d, chunk_len, prompt_len)
    )
    return SplitDataset(
        forget_per_step=forget_per_step,
        prev_per_step=tuple(prev_per_step),
        retain_eval=retain_eval,
        aux_retain=aux_retain,
    )


def chunks_to_records(chunks: Iterable[ChunkPair]) -> list[dict]:
    return [
        {
            "book_id": c.book_id,
            "chunk_index": c.chunk_index,
            "prompt_token_ids": list(c.prompt.ids),
            "continuation_token_ids": list(c.continuation.ids),
        }
        for c in chunks
    ]


def save_chunks(chunks: Iterable[ChunkPair], path: str | Path) -> None:
    """Serialize chunks to a JSON file of one record per pair."""
    Path(path).write_text(json.dumps(chunks_to_records(chunks), indent=1) + "\n")


def load_chunks(path: str | Path) -> list[ChunkPair]:
    records = json.loads(Path(path).read_text())
    return [
        ChunkPair(
            book_id=r["book_id"],
            chunk_index=r["chunk_index"],
            prompt=TokenSequence(tuple(r["prompt_token_ids"])),
            continuation=TokenSequence(tuple(r["continuation_token_ids"])),
        )
        for r in records
    ]


def chunk_text(chunk: ChunkPair) -> tuple[str, str]:
    """Decode a chunk's prompt and continuation back to text."""
    return detokenize(chunk.prompt), detokenize(chunk.continuation)
