"""The unlearning engine.

One time step erases one book: the task-vector family (ssu, tv) fine-tunes the
incoming model on the step's forget chunks, gating each weight write through a
gradient-magnitude saliency mask, then negates the resulting task vector; the
direct family (ga, grad_diff, npo) descends its objective in place. A
sequential run chains steps, feeding each step the previous step's unlearned
weights.
"""
from __future__ import annotations

import random
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from .checkpoint import checkpoint_save
from .corpus import ChunkPair, SplitDataset, stable_seed
from .model import (
    LanguageModel,
    NonFiniteLossError,
    ParameterVector,
    loss_and_grad,
    param_axpy,
)
from .objectives import (
    GradDiffWeights,
    NPOConfig,
    SSUWeights,
    forget_loss,
    grad_diff_objective,
    npo_loss,
    ssu_objective,
)

ALGORITHMS = ("ssu", "tv", "ga", "grad_diff", "npo")
TASK_VECTOR_ALGORITHMS = ("ssu", "tv")


class UnlearnError(RuntimeError):
    pass


class DivergenceError(UnlearnError):
    """Raised when the divergence guard trips or a loss goes non-finite."""


@dataclass(frozen=True)
class GammaPolicy:
    """Saliency threshold rule: adaptive mean + std_multiplier*std of |grad|,
    or a fixed absolute value."""

    kind: str = "mean_plus_std"
    gamma: float | None = None
    std_multiplier: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("mean_plus_std", "absolute"):
            raise UnlearnError(f"unknown gamma policy {self.kind!r}")
        if self.kind == "absolute" and (self.gamma is None or self.gamma < 0):
            raise UnlearnError("absolute gamma policy needs gamma >= 0")
        if self.std_multiplier < 0:
            raise UnlearnError("std_multiplier must be >= 0")

    @staticmethod
    def absolute(gamma: float) -> "GammaPolicy":
        return GammaPolicy(kind="absolute", gamma=gamma)

    @staticmethod
    def mean_plus_std(std_multiplier: float = 1.0) -> "GammaPolicy":
        return GammaPolicy(kind="mean_plus_std", std_multiplier=std_multiplier)


@dataclass
class SaliencyMask:
    bits: np.ndarray
    gamma_used: float

    def __post_init__(self) -> None:
        if self.bits.dtype != np.bool_:
            raise UnlearnError("mask bits must be boolean")

    @property
    def density(self) -> float:
        return float(self.bits.mean()) if self.bits.size else 0.0


def saliency_mask(grad: ParameterVector, policy: GammaPolicy) -> SaliencyMask:
    """Bit i is set iff |grad_i| >= gamma."""
    if len(grad) == 0:
        raise UnlearnError("cannot build a mask from an empty gradient")
    mag = np.abs(grad.values)
    if not np.isfinite(mag).all():
        raise UnlearnError("gradient contains non-finite values")
    if policy.kind == "absolute":
        gamma = float(policy.gamma)
    else:
        stats = mag.astype(np.float64, copy=False)
        gamma = float(stats.mean() + policy.std_multiplier * stats.std())
    return SaliencyMask(bits=mag >= gamma, gamma_used=gamma)


def all_ones_mask(params: ParameterVector) -> SaliencyMask:
    return SaliencyMask(bits=np.ones(len(params), dtype=np.bool_), gamma_used=0.0)


def masked_update(
    params: ParameterVector, delta: ParameterVector, mask: SaliencyMask
) -> ParameterVector:
    """Apply delta only where the mask bit is set; other coordinates pass through bit-exactly."""
    if len(delta) != len(params) or not params.same_table(delta):
        raise UnlearnError("params and delta are not aligned")
    if mask.bits.size != len(params):
        raise UnlearnError("mask length does not match parameters")
    out = np.where(mask.bits, params.values + delta.values, params.values)
    return ParameterVector(out.astype(params.values.dtype, copy=False), params.segments)


def negate_task_vector(theta_prev: ParameterVector, theta_ft: ParameterVector) -> ParameterVector:
    """Subtract the fine-tune delta from the incoming weights: 2*theta_prev - theta_ft."""
    return param_axpy(2.0, theta_prev, -1.0, theta_ft)


@dataclass(frozen=True)
class UnlearnConfig:
    algorithm: str = "ssu"
    lr: float = 0.1
    epochs: int = 1
    batch_size: int = 2
    ssu_weights: SSUWeights = field(default_factory=SSUWeights)
    graddiff_weights: GradDiffWeights = field(default_factory=GradDiffWeights)
    npo_beta: float = 0.4
    gamma_policy: GammaPolicy = field(default_factory=GammaPolicy)
    k_random: int = 1
    seed: int = 0
    optimizer: str = "sgd"
    freeze_mask: bool = False
    divergence_guard: bool = False
    divergence_factor: float = 10.0
    graddiff_kl_anchor: str = "previous"
    lr_decay_at: int | None = None
    lr_decayed: float | None = None

    def __post_init__(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise UnlearnError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if self.lr <= 0:
            raise UnlearnError("lr must be positive")
        if self.epochs < 0 or self.batch_size < 1 or self.k_random < 1:
            raise UnlearnError("epochs must be >= 0, batch_size and k_random >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise UnlearnError(f"unknown optimizer {self.optimizer!r}")
        if self.graddiff_kl_anchor not in ("previous", "original"):
            raise UnlearnError("graddiff_kl_anchor must be 'previous' or 'original'")
        if self.npo_beta <= 0:
            raise UnlearnError("npo_beta must be positive")

    def lr_at_step(self, t: int) -> float:
        if self.lr_decay_at is not None and t > self.lr_decay_at:
            if self.lr_decayed is None:
                raise UnlearnError("lr_decay_at set without lr_decayed")
            return self.lr_decayed
        return self.lr


@dataclass
class TimeStepResult:
    t: int
    algorithm: str
    theta_u: ParameterVector
    theta_ft: ParameterVector | None
    gamma_history: list[float]
    losses: list[float]
    theta_u_checkpoint: str | None = None
    theta_ft_checkpoint: str | None = None
    metrics_path: str | None = None
    wall_clock: float = 0.0


class _AdamState:
    """Adaptive update proposal on the flat vector; the mask still gates writes."""

    def __init__(self, n: int, dtype, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = np.zeros(n, dtype=np.float64)
        self.v = np.zeros(n, dtype=np.float64)
        self.t = 0
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.dtype = dtype

    def proposal(self, grad: np.ndarray, lr: float) -> np.ndarray:
        self.t += 1
        g = grad.astype(np.float64)
        self.m = self.beta1 * self.m + (1 - self.beta1) * g
        self.v = self.beta2 * self.v + (1 - self.beta2) * g * g
        mhat = self.m / (1 - self.beta1**self.t)
        vhat = self.v / (1 - self.beta2**self.t)
        return (-lr * mhat / (np.sqrt(vhat) + self.eps)).astype(self.dtype)


def _batches(chunks: Sequence[ChunkPair], batch_size: int, seed: int, epoch: int) -> list[list[ChunkPair]]:
    order = list(chunks)
    random.Random(stable_seed(seed, "order", epoch)).shuffle(order)
    return [order[i : i + batch_size] for i in range(0, len(order), batch_size)]


def _descend(
    model: LanguageModel,
    start_params: ParameterVector,
    chunks: Sequence[ChunkPair],
    cfg: UnlearnConfig,
    objective_for_batch: Callable[[LanguageModel, list[ChunkPair], int], torch.Tensor],
    mask_for_grad: Callable[[ParameterVector], SaliencyMask] | None,
) -> tuple[ParameterVector, list[float], list[float]]:
    """Shared accumulation loop: per batch, grad -> proposal -> (masked) write.

    Returns the final params plus per-step loss and gamma traces.
    """
    params = start_params.copy()
    model.set_params(params)
    adam = _AdamState(len(params), params.values.dtype) if cfg.optimizer == "adam" else None
    losses: list[float] = []
    gammas: list[float] = []
    frozen_mask: SaliencyMask | None = None
    initial_loss: float | None = None
    step = 0
    for epoch in range(cfg.epochs):
        for batch in _batches(chunks, cfg.batch_size, cfg.seed, epoch):
            try:
                loss, grad = loss_and_grad(
                    model, lambda m: objective_for_batch(m, batch, step)
                )
            except NonFiniteLossError as exc:
                raise DivergenceError(
                    f"non-finite loss at step {step} (algorithm={cfg.algorithm}): {exc}"
                ) from exc
            if initial_loss is None:
                initial_loss = loss
            if (
                cfg.divergence_guard
                and abs(loss) > cfg.divergence_factor * max(1e-12, abs(initial_loss))
            ):
                raise DivergenceError(
                    f"loss {loss:.4g} exceeded {cfg.divergence_factor}x its initial "
                    f"value {initial_loss:.4g} at step {step} (algorithm={cfg.algorithm})"
                )
            losses.append(loss)
            if adam is not None:
                delta = ParameterVector(adam.proposal(grad.values, cfg.lr), params.segments)
            else:
                delta = param_axpy(-cfg.lr, grad, 0.0, grad)
            if mask_for_grad is None:
                mask = all_ones_mask(params)
            elif cfg.freeze_mask:
                if frozen_mask is None:
                    frozen_mask = mask_for_grad(grad)
                mask = frozen_mask
            else:
                mask = mask_for_grad(grad)
            gammas.append(mask.gamma_used)
            params = masked_update(params, delta, mask)
            model.set_params(params)
            step += 1
    return params, losses, gammas


def fine_tune_stage(
    model: LanguageModel,
    start_params: ParameterVector,
    forget_set: Sequence[ChunkPair],
    cfg: UnlearnConfig,
) -> tuple[ParameterVector, list[float], list[float]]:
    """First stage of the task-vector procedure: descend the combined forget
    objective from ``start_params``, recomputing the saliency mask at every
    accumulation step (ssu) or leaving writes ungated (tv).

    Returns (theta_ft, loss trace, gamma trace). Zero epochs return
    ``start_params`` unchanged.
    """
    if cfg.algorithm not in TASK_VECTOR_ALGORITHMS:
        raise UnlearnError(f"fine_tune_stage applies to {TASK_VECTOR_ALGORITHMS}")
    if cfg.epochs == 0:
        return start_params.copy(), [], []
    if cfg.algorithm == "ssu":
        weights = cfg.ssu_weights
        mask_fn = lambda g: saliency_mask(g, cfg.gamma_policy)
    else:
        weights = SSUWeights(eps1=cfg.ssu_weights.eps1, eps2=0.0)
        mask_fn = None
    if weights.eps2 > 0 and len(forget_set) < 2:
        raise UnlearnError("random labeling needs at least 2 forget chunks")

    def batch_objective(m: LanguageModel, batch: list[ChunkPair], step: int) -> torch.Tensor:
        return ssu_objective(
            m,
            batch,
            weights,
            cfg.k_random,
            stable_seed(cfg.seed, "rnd", step),
            pool=forget_set,
        )

    return _descend(model, start_params, forget_set, cfg, batch_objective, mask_fn)


def run_time_step(
    model: LanguageModel,
    theta_prev: ParameterVector,
    forget_set: Sequence[ChunkPair],
    splits: SplitDataset,
    cfg: UnlearnConfig,
    t: int = 1,
    npo_reference: ParameterVector | None = None,
    theta_original: ParameterVector | None = None,
) -> TimeStepResult:
    """Unlearn one book and return the new weights (model is left loaded with them)."""
    started = time.monotonic()
    step_cfg = replace(cfg, lr=cfg.lr_at_step(t), seed=stable_seed(cfg.seed, "step", t))
    theta_ft = None
    if cfg.algorithm in TASK_VECTOR_ALGORITHMS:
        theta_ft, losses, gammas = fine_tune_stage(model, theta_prev, forget_set, step_cfg)
        theta_u = negate_task_vector(theta_prev, theta_ft)
    elif cfg.algorithm == "ga":
        objective = lambda m, batch, step: -forget_loss(m, batch)
        theta_u, losses, gammas = _descend(
            model, theta_prev, forget_set, step_cfg, objective, None
        )
    elif cfg.algorithm == "grad_diff":
        anchor = theta_prev if cfg.graddiff_kl_anchor == "previous" else theta_original
        if anchor is None:
            raise UnlearnError("grad_diff with 'original' anchor needs theta_original")
        if not splits.aux_retain:
            raise UnlearnError("grad_diff needs a non-empty auxiliary retain set")

        def objective(m, batch, step):
            return grad_diff_objective(
                m,
                anchor,
                batch,
                splits.aux_retain,
                cfg.graddiff_weights,
                cfg.k_random,
                stable_seed(step_cfg.seed, "rnd", step),
            )

        theta_u, losses, gammas = _descend(
            model, theta_prev, forget_set, step_cfg, objective, None
        )
    elif cfg.algorithm == "npo":
        if npo_reference is None:
            npo_reference = build_npo_reference(model, theta_prev, splits, cfg)
        npo_cfg = NPOConfig(beta=cfg.npo_beta, reference_params=npo_reference)
        objective = lambda m, batch, step: npo_loss(m, npo_cfg, batch)
        theta_u, losses, gammas = _descend(
            model, theta_prev, forget_set, step_cfg, objective, None
        )
    else:  # pragma: no cover - guarded by UnlearnConfig validation
        raise UnlearnError(f"unhandled algorithm {cfg.algorithm!r}")

    model.set_params(theta_u)
    return TimeStepResult(
        t=t,
        algorithm=cfg.algorithm,
        theta_u=theta_u,
        theta_ft=theta_ft,
        gamma_history=gammas,
        losses=losses,
        wall_clock=time.monotonic() - started,
    )


def build_npo_reference(
    model: LanguageModel,
    theta_start: ParameterVector,
    splits: SplitDataset,
    cfg: UnlearnConfig,
) -> ParameterVector:
    """Reference weights for the preference loss: the starting model fine-tuned
    for one epoch on the union of all forget chunks and the retain sample."""
    corpus = list(splits.all_forget()) + list(splits.retain_eval)
    ref_cfg = replace(
        cfg,
        algorithm="tv",
        epochs=1,
        seed=stable_seed(cfg.seed, "npo_ref"),
        divergence_guard=False,
    )
    saved = model.get_params()
    theta_ref, _, _ = fine_tune_stage(model, theta_start, corpus, ref_cfg)
    model.set_params(saved)
    return theta_ref


def run_sequence(
    model: LanguageModel,
    theta_0: ParameterVector,
    splits: SplitDataset,
    cfg: UnlearnConfig,
    T: int,
    out_dir: str | Path | None = None,
    evaluate_step: Callable[[int, LanguageModel, TimeStepResult], str | None] | None = None,
) -> list[TimeStepResult]:
    """Chain T unlearning steps, checkpointing and evaluating after each.

    ``evaluate_step`` (if given) runs on the freshly unlearned model and may
    return a metrics file path recorded in the result. A failure at step t
    raises after the results for steps < t have been checkpointed.
    """
    if T < 1 or T > splits.num_steps:
        raise UnlearnError(f"T must be in 1..{splits.num_steps}, got {T}")
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    npo_reference = None
    if cfg.algorithm == "npo":
        npo_reference = build_npo_reference(model, theta_0, splits, cfg)
    results: list[TimeStepResult] = []
    theta = theta_0
    for t in range(1, T + 1):
        result = run_time_step(
            model,
            theta,
            splits.forget_at(t),
            splits,
            cfg,
            t=t,
            npo_reference=npo_reference,
            theta_original=theta_0,
        )
        if out_dir is not None:
            u_path = out_dir / f"theta_u_t{t}.ckpt"
            checkpoint_save(result.theta_u, model.config, u_path)
            result.theta_u_checkpoint = str(u_path)
            if result.theta_ft is not None:
                ft_path = out_dir / f"theta_ft_t{t}.ckpt"
                checkpoint_save(result.theta_ft, model.config, ft_path)
                result.theta_ft_checkpoint = str(ft_path)
        if evaluate_step is not None:
            result.metrics_path = evaluate_step(t, model, result)
        results.append(result)
        theta = result.theta_u
    return results
