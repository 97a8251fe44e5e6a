"""Rouge-1 and Rouge-L F1 between a generated continuation and its reference.

Scoring words are produced by lowercasing and splitting on runs of
non-alphanumeric characters, a fixed deterministic stand-in for the usual
Rouge package preprocessing. Single-reference only.
"""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass

_WORD_SPLIT = re.compile(r"[^0-9a-z]+")


def scoring_words(text: str) -> list[str]:
    return [w for w in _WORD_SPLIT.split(text.lower()) if w]


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float

    def __post_init__(self) -> None:
        for v in (self.precision, self.recall, self.f1):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"rouge component {v} outside [0, 1]")


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _score(overlap: float, n_hyp: int, n_ref: int) -> RougeScore:
    if n_hyp == 0 or n_ref == 0:
        return RougeScore(0.0, 0.0, 0.0)
    p = overlap / n_hyp
    r = overlap / n_ref
    return RougeScore(p, r, _f1(p, r))


def rouge1(hypothesis: str, reference: str) -> RougeScore:
    """Unigram-overlap F1 with clipped counts."""
    hyp = scoring_words(hypothesis)
    ref = scoring_words(reference)
    overlap = sum((Counter(hyp) & Counter(ref)).values())
    return _score(overlap, len(hyp), len(ref))


def lcs_length(a: list[str], b: list[str]) -> int:
    """Longest common subsequence length by row-rolling dynamic programming."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            if x == y:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rougeL(hypothesis: str, reference: str) -> RougeScore:
    """Longest-common-subsequence F1 over scoring words."""
    hyp = scoring_words(hypothesis)
    ref = scoring_words(reference)
    return _score(float(lcs_length(hyp, ref)), len(hyp), len(ref))
