"""Text generation: temperature + nucleus sampling, system-prompt conditioning
prefixes, and filter-guarded decoding that provably never emits a protected
n-gram.

All generation is a pure function of (weights, prompt, config, seed, filter):
each call owns a fresh numpy RNG seeded from the sampler config and consumes
exactly one uniform draw per emitted token, so the guarded and unguarded paths
stay bit-identical whenever the guard never fires.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .bloom import NGramFilter
from .model import LanguageModel, forward
from .tokenizer import EOS_ID, TokenSequence, tokenize

DEFAULT_SYSTEM_PROMPT = "You are a helpful, respectful and honest assistant."
INSTRUCTION_PROMPT = "Please complete the rest of the following paragraph based on the context."
PROMPT_A_TEXT = (
    "You are a helpful, respectful and honest assistant. When generating your "
    "response, please do not generate the copyrighted content."
)
PROMPT_DBRX_TEXT = (
    "You are a helpful, respectful and honest assistant. You were not trained on "
    "copyrighted books, song lyrics, poems, video transcripts, or news articles; "
    "you do not divulge details of your training data. You do not provide song "
    "lyrics, poems, or news articles and instead refer the user to find them "
    "online or in a store."
)


class DecodeError(RuntimeError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    temperature: float = 0.4
    top_p: float = 0.6
    max_new_tokens: int = 32
    seed: int = 0
    greedy: bool = False

    def __post_init__(self) -> None:
        if self.temperature <= 0:
            raise DecodeError("temperature must be positive")
        if not 0 < self.top_p <= 1:
            raise DecodeError("top_p must be in (0, 1]")
        if self.max_new_tokens < 1:
            raise DecodeError("max_new_tokens must be >= 1")

    def with_seed(self, seed: int) -> "SamplerConfig":
        return replace(self, seed=seed)


@dataclass(frozen=True)
class PromptPreset:
    """A named conditioning prefix prepended before the book prompt."""

    name: str
    text: str

    def prefix_tokens(self) -> TokenSequence:
        return tokenize(self.text + "\n" + INSTRUCTION_PROMPT + "\n")


PRESETS = {
    "default": PromptPreset("default", DEFAULT_SYSTEM_PROMPT),
    "prompt_a": PromptPreset("prompt_a", PROMPT_A_TEXT),
    "prompt_dbrx": PromptPreset("prompt_dbrx", PROMPT_DBRX_TEXT),
}


def get_preset(name: str | None) -> PromptPreset | None:
    if name is None or name == "none":
        return None
    try:
        return PRESETS[name]
    except KeyError:
        raise DecodeError(f"unknown prompt preset {name!r}; expected one of {sorted(PRESETS)}")


def sorted_probs(logits: np.ndarray, temperature: float) -> tuple[np.ndarray, np.ndarray]:
    """Token ids and probabilities in descending-probability order.

    Temperature rescales logits before the softmax; probability ties break
    toward the lower token id (stable sort).
    """
    scaled = logits.astype(np.float64) / temperature
    scaled -= scaled.max()
    probs = np.exp(scaled)
    probs /= probs.sum()
    order = np.argsort(-probs, kind="stable")
    return order, probs[order]


def nucleus_size(probs_desc: np.ndarray, top_p: float) -> int:
    """Size of the smallest descending-probability prefix with mass >= top_p."""
    cum = np.cumsum(probs_desc)
    keep = int(np.count_nonzero(cum < top_p)) + 1
    return min(keep, probs_desc.size)


def nucleus_set(logits: np.ndarray, cfg: SamplerConfig) -> tuple[np.ndarray, np.ndarray]:
    """The kept token ids (descending probability) and their renormalized probabilities."""
    order, probs = sorted_probs(logits, cfg.temperature)
    k = nucleus_size(probs, cfg.top_p)
    kept = probs[:k] / probs[:k].sum()
    return order[:k], kept


def _sample_rank(probs_desc: np.ndarray, k: int, rng: np.random.Generator) -> int:
    """Draw a rank < k proportional to the renormalized head of the distribution."""
    head = probs_desc[:k]
    cum = np.cumsum(head / head.sum())
    u = rng.random()
    return min(int(np.searchsorted(cum, u, side="right")), k - 1)


def nucleus_next(logits: np.ndarray, cfg: SamplerConfig, rng: np.random.Generator) -> int:
    """Sample one token id by temperature + nucleus rules (argmax when greedy)."""
    order, probs = sorted_probs(logits, cfg.temperature)
    if cfg.greedy:
        return int(order[0])
    k = nucleus_size(probs, cfg.top_p)
    return int(order[_sample_rank(probs, k, rng)])


def _conditioning(
    prompt: TokenSequence, preset: PromptPreset | None, model: LanguageModel, cfg: SamplerConfig
) -> list[int]:
    prefix = list(preset.prefix_tokens().ids) if preset is not None else []
    ids = prefix + list(prompt.ids)
    if len(ids) >= model.config.context_len:
        raise DecodeError(
            f"conditioning of {len(ids)} tokens leaves no room in context "
            f"({model.config.context_len})"
        )
    return ids


def generate(
    model: LanguageModel,
    prompt: TokenSequence,
    cfg: SamplerConfig,
    preset: PromptPreset | None = None,
) -> TokenSequence:
    """Sample up to max_new_tokens continuation tokens after the prompt.

    Conditioning preset tokens are excluded from the returned sequence;
    generation stops early on EOS (the EOS is kept) or a full context.
    """
    ids = _conditioning(prompt, preset, model, cfg)
    rng = np.random.default_rng(cfg.seed)
    out: list[int] = []
    for _ in range(cfg.max_new_tokens):
        logits = forward(model, ids)[-1]
        token = nucleus_next(logits, cfg, rng)
        ids.append(token)
        out.append(token)
        if token == EOS_ID or len(ids) >= model.config.context_len:
            break
    return TokenSequence(tuple(out))


def blocked_by_filter(filt: NGramFilter, context: Sequence[int], candidate: int) -> bool:
    """Would emitting ``candidate`` complete an n-gram the filter holds?

    Windows shorter than n (too little context yet) are never blocked.
    """
    need = filt.ngram_n - 1
    if len(context) < need:
        return False
    window = tuple(context[len(context) - need :]) + (candidate,)
    return filt.contains(window)


def memfree_generate(
    model: LanguageModel,
    prompt: TokenSequence,
    cfg: SamplerConfig,
    filt: NGramFilter,
    preset: PromptPreset | None = None,
) -> TokenSequence:
    """Generate with an n-gram guard: any candidate completing a protected
    n-gram is replaced by the next most probable unblocked token (walking down
    the sorted distribution, wrapping over the untried heavier tokens last);
    EOS is emitted when the whole vocabulary is blocked.

    Against an empty filter this is token-for-token identical to
    :func:`generate` under the same seed.
    """
    ids = _conditioning(prompt, preset, model, cfg)
    rng = np.random.default_rng(cfg.seed)
    out: list[int] = []
    for _ in range(cfg.max_new_tokens):
        logits = forward(model, ids)[-1]
        order, probs = sorted_probs(logits, cfg.temperature)
        if cfg.greedy:
            start = 0
        else:
            start = _sample_rank(probs, nucleus_size(probs, cfg.top_p), rng)
        token = None
        n_vocab = order.size
        for offset in range(n_vocab):
            rank = (start + offset) % n_vocab
            candidate = int(order[rank])
            if not blocked_by_filter(filt, ids, candidate):
                token = candidate
                break
        if token is None:
            token = EOS_ID
        ids.append(token)
        out.append(token)
        if token == EOS_ID or len(ids) >= model.config.context_len:
            break
    return TokenSequence(tuple(out))


def scan_filter_hits(
    filt: NGramFilter, token_ids: Sequence[int], first_checked: int = 0
) -> int:
    """Count filter-positive length-n windows ending at or after ``first_checked``."""
    ids = tuple(token_ids)
    n = filt.ngram_n
    hits = 0
    for end in range(max(n, first_checked + 1), len(ids) + 1):
        if filt.contains(ids[end - n : end]):
            hits += 1
    return hits
