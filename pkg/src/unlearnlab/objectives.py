"""Training objectives for unlearning runs.

Every objective is a pure, differentiable function of the model weights given
fixed data and seed, so it can be handed to ``loss_and_grad`` or probed with
finite differences. Batch values are the mean of per-pair sequence losses so
step sizes stay comparable across batch sizes; each per-pair loss is the sum
of token cross-entropies over the continuation.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Sequence

import torch
import torch.nn.functional as F

from .corpus import ChunkPair
from .model import LanguageModel, ParameterVector, batch_nll_t, clone_model


class ObjectiveError(ValueError):
    pass


@dataclass(frozen=True)
class SSUWeights:
    """Mixing weights for the forget and random-labeling terms."""

    eps1: float = 1.0
    eps2: float = 0.5

    def __post_init__(self) -> None:
        if self.eps1 < 0 or self.eps2 < 0:
            raise ObjectiveError("weights must be non-negative")
        if self.eps1 == 0 and self.eps2 == 0:
            raise ObjectiveError("at least one weight must be positive")


@dataclass(frozen=True)
class GradDiffWeights:
    eps1: float = 1.0
    eps2: float = 0.5
    eps3: float = 0.5

    def __post_init__(self) -> None:
        if self.eps1 <= 0:
            raise ObjectiveError("eps1 must be positive")
        if self.eps2 < 0 or self.eps3 < 0:
            raise ObjectiveError("weights must be non-negative")


@dataclass(frozen=True)
class NPOConfig:
    beta: float
    reference_params: ParameterVector

    def __post_init__(self) -> None:
        if self.beta <= 0:
            raise ObjectiveError(f"beta must be positive, got {self.beta}")
        if not self.reference_params.all_finite():
            raise ObjectiveError("reference parameters contain non-finite values")


def _pairs(chunks: Sequence[ChunkPair]) -> list:
    return [(c.prompt, c.continuation) for c in chunks]


def forget_loss(model: LanguageModel, forget_set: Sequence[ChunkPair]) -> torch.Tensor:
    """Mean over the forget pairs of the continuation cross-entropy sum."""
    if not forget_set:
        raise ObjectiveError("forget set is empty")
    return batch_nll_t(model, _pairs(forget_set)).mean()


def mismatch_draws(
    prompts_from: Sequence[ChunkPair],
    pool: Sequence[ChunkPair],
    k: int,
    seed: int,
) -> list[tuple[ChunkPair, list[ChunkPair]]]:
    """For each prompt chunk, a seeded draw of up to k non-matching pool chunks.

    The chunk matching a prompt's own (book, index) is never drawn. The draw is
    a pure function of (prompts, pool, k, seed).
    """
    if k < 1:
        raise ObjectiveError(f"k must be >= 1, got {k}")
    rng = random.Random(seed)
    out = []
    for chunk in prompts_from:
        candidates = [c for c in pool if c.key != chunk.key]
        if not candidates:
            raise ObjectiveError(
                "no mismatched continuation available; need a pool of at least 2 chunks"
            )
        out.append((chunk, rng.sample(candidates, min(k, len(candidates)))))
    return out


def random_label_loss(
    model: LanguageModel,
    forget_set: Sequence[ChunkPair],
    k: int,
    seed: int,
    pool: Sequence[ChunkPair] | None = None,
) -> torch.Tensor:
    """Cross-entropy of each forget prompt against mismatched continuations.

    Continuations are drawn from ``pool`` (default: the forget set itself,
    which then must hold at least two chunks). Per prompt the k draws are
    averaged; prompts are averaged in turn. With k >= |pool|-1 the draw is
    exhaustive.
    """
    if not forget_set:
        raise ObjectiveError("forget set is empty")
    src = forget_set if pool is None else pool
    if pool is None and len(forget_set) < 2:
        raise ObjectiveError("random labeling needs at least 2 forget chunks to mismatch")
    scored = []
    for chunk, draws in mismatch_draws(forget_set, src, k, seed):
        nlls = batch_nll_t(model, [(chunk.prompt, d.continuation) for d in draws])
        scored.append(nlls.mean())
    return torch.stack(scored).mean()


def ssu_objective(
    model: LanguageModel,
    forget_set: Sequence[ChunkPair],
    weights: SSUWeights,
    k: int,
    seed: int,
    pool: Sequence[ChunkPair] | None = None,
) -> torch.Tensor:
    """Weighted sum of the forget loss and the random-labeling loss.

    Zero-weighted terms are skipped entirely, so a run with eps2=0 performs
    bit-identical arithmetic to a plain forget-loss descent.
    """
    total = None
    if weights.eps1 != 0.0:
        total = weights.eps1 * forget_loss(model, forget_set)
    if weights.eps2 != 0.0:
        rnd = weights.eps2 * random_label_loss(model, forget_set, k, seed, pool=pool)
        total = rnd if total is None else total + rnd
    return total


def kl_retain_loss(
    model: LanguageModel,
    reference_params: ParameterVector,
    retain_set: Sequence[ChunkPair],
) -> torch.Tensor:
    """Mean per-position KL(reference || trainee) over retain continuations.

    The reference distribution is frozen; gradients reach only the trainee.
    """
    if not retain_set:
        raise ObjectiveError("retain set is empty")
    ref = clone_model(model, reference_params)
    total = None
    n_positions = 0
    for chunk in retain_set:
        ids = torch.tensor(list(chunk.tokens.ids), dtype=torch.long)
        p = len(chunk.prompt)
        rows = slice(p - 1, len(ids) - 1)
        with torch.no_grad():
            ref_logp = F.log_softmax(ref.logits_t(ids)[rows], dim=-1)
        cur_logp = F.log_softmax(model.logits_t(ids)[rows], dim=-1)
        kl = (ref_logp.exp() * (ref_logp - cur_logp)).sum(dim=-1)
        total = kl.sum() if total is None else total + kl.sum()
        n_positions += kl.shape[0]
    return total / n_positions


def grad_diff_objective(
    model: LanguageModel,
    original_params: ParameterVector,
    forget_set: Sequence[ChunkPair],
    aux_retain_set: Sequence[ChunkPair],
    weights: GradDiffWeights,
    k: int,
    seed: int,
) -> torch.Tensor:
    """Three-term gradient-difference loss: ascent on the forget pairs,
    random mismatching against auxiliary continuations, and a KL anchor to the
    frozen reference on the auxiliary retain set."""
    total = -weights.eps1 * forget_loss(model, forget_set)
    if weights.eps2 != 0.0:
        if not aux_retain_set:
            raise ObjectiveError("random mismatch term needs a non-empty auxiliary set")
        total = total + weights.eps2 * random_label_loss(
            model, forget_set, k, seed, pool=aux_retain_set
        )
    if weights.eps3 != 0.0:
        if not aux_retain_set:
            raise ObjectiveError("KL retain term needs a non-empty auxiliary set")
        total = total + weights.eps3 * kl_retain_loss(model, original_params, aux_retain_set)
    return total


def npo_loss(
    model: LanguageModel,
    cfg: NPOConfig,
    forget_set: Sequence[ChunkPair],
) -> torch.Tensor:
    """Preference-style unlearning loss against a frozen reference model.

    Per pair: (2/beta) * log(1 + (p_model/p_ref)^beta) on the continuation
    log-probabilities, evaluated in log space via softplus.
    """
    if not forget_set:
        raise ObjectiveError("forget set is empty")
    ref = clone_model(model, cfg.reference_params)
    pairs = _pairs(forget_set)
    with torch.no_grad():
        ref_nll = batch_nll_t(ref, pairs)
    cur_nll = batch_nll_t(model, pairs)
    margin = ref_nll - cur_nll  # = log p_model - log p_ref
    return (2.0 / cfg.beta) * F.softplus(cfg.beta * margin).mean()
