"""Per-split scoring and per-time-step metric reports.

Each chunk is scored by generating a continuation from its prompt and
comparing against the reference continuation with Rouge-1/Rouge-L; retained
ability is proxied by perplexity on the retain sample. The trade-off fields
combine both axes: unlearning efficacy is the negated mean Rouge mass on the
forget and previously-forgotten splits, and the ability proxy is the clamped
ratio of vanilla to current retain perplexity.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import torch

from .bloom import NGramFilter
from .corpus import ChunkPair, stable_seed
from .decode import PromptPreset, SamplerConfig, generate, memfree_generate
from .model import LanguageModel, batch_nll_t
from .rouge import rouge1, rougeL
from .tokenizer import TokenSequence, detokenize


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class SplitScores:
    rouge1_avg: float
    rougeL_avg: float
    n_chunks: int

    def to_dict(self) -> dict:
        return {
            "rouge1": self.rouge1_avg,
            "rougeL": self.rougeL_avg,
            "n_chunks": self.n_chunks,
        }


@dataclass
class MetricReport:
    t: int
    splits: dict[str, SplitScores]
    retain_perplexity: float
    efficacy: float
    ability_proxy: float
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "splits": {name: s.to_dict() for name, s in self.splits.items()},
            "retain_perplexity": self.retain_perplexity,
            "efficacy": self.efficacy,
            "ability_proxy": self.ability_proxy,
            "extras": self.extras,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")


def default_generator(
    model: LanguageModel,
    chunk: ChunkPair,
    cfg: SamplerConfig,
    guard: NGramFilter | None,
    preset: PromptPreset | None,
) -> TokenSequence:
    """Generate one continuation with a per-chunk seed derived from the config seed."""
    cfg_i = cfg.with_seed(stable_seed(cfg.seed, chunk.book_id, chunk.chunk_index))
    if guard is not None:
        return memfree_generate(model, chunk.prompt, cfg_i, guard, preset=preset)
    return generate(model, chunk.prompt, cfg_i, preset=preset)


def eval_split(
    model: LanguageModel,
    split: Sequence[ChunkPair],
    cfg: SamplerConfig,
    guard: NGramFilter | None = None,
    preset: PromptPreset | None = None,
    generator: Callable[..., TokenSequence] = default_generator,
) -> SplitScores:
    """Mean chunk-level Rouge-1/Rouge-L F1 of generated vs reference continuations."""
    if not split:
        raise EvalError("cannot evaluate an empty split")
    r1 = rl = 0.0
    for chunk in split:
        hyp = detokenize(generator(model, chunk, cfg, guard, preset))
        ref = detokenize(chunk.continuation)
        r1 += rouge1(hyp, ref).f1
        rl += rougeL(hyp, ref).f1
    n = len(split)
    return SplitScores(rouge1_avg=r1 / n, rougeL_avg=rl / n, n_chunks=n)


def perplexity(model: LanguageModel, split: Sequence[ChunkPair]) -> float:
    """exp(total continuation NLL / total continuation tokens)."""
    if not split:
        raise EvalError("cannot evaluate an empty split")
    with torch.no_grad():
        nll = float(batch_nll_t(model, [(c.prompt, c.continuation) for c in split]).sum())
    n_tokens = sum(len(c.continuation) for c in split)
    return math.exp(nll / n_tokens)


def tradeoff_fields(
    rouge_f: tuple[float, float],
    rouge_prev: tuple[float, float] | None,
    retain_perplexity: float,
    vanilla_retain_perplexity: float,
) -> tuple[float, float]:
    """(efficacy, ability_proxy).

    Efficacy sums the negated half-sums of (Rouge-1, Rouge-L) on the forget and
    previously-forgotten splits; a missing previous split contributes zero. The
    ability proxy is vanilla/current retain perplexity clamped to [0, 1].
    """
    if retain_perplexity <= 0 or vanilla_retain_perplexity <= 0:
        raise EvalError("perplexities must be positive")
    u_f = -0.5 * (rouge_f[0] + rouge_f[1])
    u_prev = -0.5 * (rouge_prev[0] + rouge_prev[1]) if rouge_prev is not None else 0.0
    efficacy = u_f + u_prev
    ability = min(1.0, max(0.0, vanilla_retain_perplexity / retain_perplexity))
    return efficacy, ability


def step_report(
    model: LanguageModel,
    t: int,
    d_f: Sequence[ChunkPair],
    d_prev: Sequence[ChunkPair],
    d_nor: Sequence[ChunkPair],
    cfg: SamplerConfig,
    vanilla_retain_perplexity: float,
    guard: NGramFilter | None = None,
    preset: PromptPreset | None = None,
) -> MetricReport:
    """Score one time step on its three evaluation splits."""
    splits = {"d_f": eval_split(model, d_f, cfg, guard=guard, preset=preset)}
    if d_prev:
        splits["d_prev"] = eval_split(model, d_prev, cfg, guard=guard, preset=preset)
    splits["d_nor"] = eval_split(model, d_nor, cfg, guard=guard, preset=preset)
    ppl = perplexity(model, d_nor)
    prev_pair = None
    if "d_prev" in splits:
        prev_pair = (splits["d_prev"].rouge1_avg, splits["d_prev"].rougeL_avg)
    efficacy, ability = tradeoff_fields(
        (splits["d_f"].rouge1_avg, splits["d_f"].rougeL_avg),
        prev_pair,
        ppl,
        vanilla_retain_perplexity,
    )
    return MetricReport(
        t=t,
        splits=splits,
        retain_perplexity=ppl,
        efficacy=efficacy,
        ability_proxy=ability,
    )
