"""Deterministic synthetic "books" for desk-scale experiments.

Books written together draw disjoint word pools from a fixed bank, so they are
mutually distinctive (cross-book Rouge overlap stays near zero) while staying
easy for a byte-level model to memorize.
"""
from __future__ import annotations

import random
from pathlib import Path
from typing import Sequence

_WORD_BANK = """
amber anchor apple arrow autumn badge banner barley basin beacon birch bloom
border bottle branch brass breeze bridge bronze brook bucket cabin candle canyon
carpet cedar cellar chalk cinder circle clover cobble copper coral corner cradle
crystal current dagger dawn delta drift ember engine fable falcon feather fern
fiddle flint forge fountain fox garden gate glacier goblet granite grove harbor
hawk hazel heather hollow humble hunter iris island ivory jasper juniper kestrel
kettle khaki ladder lantern larch ledger lilac linden lunar mantle maple marble
meadow mill mirror morning moss mountain needle nectar north oak ocean olive
onyx orchard otter owl panel parlor pebble pine plume pond poplar prairie quarry
quill rain raven reed ridge river rowan ruby rustic saddle sage sail salmon
sandal shadow shore silver slate sparrow spire spring spruce stone storm summit
sundial swallow tarn thicket thistle timber torch tower trail tundra valley
velvet vessel village violet walnut warden water weather willow winter wren
""".split()


def synthetic_book(
    book_seed: int,
    n_sentences: int = 22,
    pool: Sequence[str] | None = None,
    pool_size: int = 24,
    words_per_sentence: tuple[int, int] = (5, 9),
) -> str:
    """One book as seeded sentences over a word pool (seed-sampled if not given)."""
    rng = random.Random(book_seed)
    if pool is None:
        pool = rng.sample(_WORD_BANK, pool_size)
    sentences = []
    for _ in range(n_sentences):
        n = rng.randint(*words_per_sentence)
        sentences.append(" ".join(rng.choice(pool) for _ in range(n)) + ".")
    return "\n".join(
        " ".join(sentences[i : i + 3]) for i in range(0, len(sentences), 3)
    )


def write_demo_corpus(
    directory: str | Path,
    n_forget: int = 3,
    n_retain: int = 2,
    n_aux: int = 1,
    seed: int = 0,
    n_sentences: int = 22,
    pool_size: int = 24,
) -> dict[str, list[str]]:
    """Write synthetic books with pairwise-disjoint word pools; paths by role."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    n_books = n_forget + n_retain + n_aux
    if n_books * pool_size > len(_WORD_BANK):
        raise ValueError(
            f"{n_books} books x {pool_size} words exceed the {len(_WORD_BANK)}-word bank"
        )
    rng = random.Random(seed)
    shuffled = rng.sample(_WORD_BANK, len(_WORD_BANK))
    paths: dict[str, list[str]] = {"forget": [], "retain": [], "aux": []}
    book = 0
    for role, count in (("forget", n_forget), ("retain", n_retain), ("aux", n_aux)):
        for i in range(count):
            pool = shuffled[book * pool_size : (book + 1) * pool_size]
            path = directory / f"{role}_{i + 1}.txt"
            path.write_text(
                synthetic_book(rng.randrange(2**31), n_sentences, pool=pool) + "\n"
            )
            paths[role].append(str(path))
            book += 1
    return paths
