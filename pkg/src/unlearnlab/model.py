"""Compact decoder-only transformer with flat parameter-vector arithmetic.

The model is deliberately small (defaults: 2 layers, 64-dim, 4 heads) so that
full-run experiments finish in minutes on one CPU core and gradients can be
checked against finite differences in double precision. All weight-space
surgery elsewhere in the package operates on :class:`ParameterVector`, a flat
numpy view of the weights with a named segment table; torch supplies the
forward pass and reverse-mode gradients behind that interface.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .tokenizer import VOCAB_SIZE, TokenSequence


class ModelError(ValueError):
    pass


class NonFiniteLossError(RuntimeError):
    """Raised when an objective evaluates to NaN or infinity."""


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int = VOCAB_SIZE
    embed_dim: int = 64
    n_layers: int = 2
    n_heads: int = 4
    context_len: int = 128
    init_seed: int = 0
    precision: str = "f32"

    def __post_init__(self) -> None:
        if self.vocab_size < 1 or self.embed_dim < 1 or self.n_layers < 1:
            raise ModelError("vocab_size, embed_dim and n_layers must be positive")
        if self.n_heads < 1 or self.embed_dim % self.n_heads != 0:
            raise ModelError(
                f"embed_dim ({self.embed_dim}) must be divisible by n_heads ({self.n_heads})"
            )
        if self.context_len < 2:
            raise ModelError("context_len must be at least 2")
        if self.precision not in ("f32", "f64"):
            raise ModelError(f"precision must be 'f32' or 'f64', got {self.precision!r}")

    @property
    def torch_dtype(self) -> torch.dtype:
        return torch.float64 if self.precision == "f64" else torch.float32

    @property
    def numpy_dtype(self) -> type:
        return np.float64 if self.precision == "f64" else np.float32

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "embed_dim": self.embed_dim,
            "n_layers": self.n_layers,
            "n_heads": self.n_heads,
            "context_len": self.context_len,
            "init_seed": self.init_seed,
            "precision": self.precision,
        }

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        return ModelConfig(**d)


class Segment(NamedTuple):
    name: str
    offset: int
    length: int


@dataclass
class ParameterVector:
    """Flat weight vector plus the (name, offset, length) table that names it."""

    values: np.ndarray
    segments: tuple[Segment, ...]

    def __post_init__(self) -> None:
        if self.values.ndim != 1:
            raise ModelError("parameter values must be one-dimensional")
        total = sum(s.length for s in self.segments)
        if total != self.values.size:
            raise ModelError(
                f"segment table covers {total} values but vector holds {self.values.size}"
            )

    def __len__(self) -> int:
        return self.values.size

    def copy(self) -> "ParameterVector":
        return ParameterVector(self.values.copy(), self.segments)

    def same_table(self, other: "ParameterVector") -> bool:
        return self.segments == other.segments

    def segment(self, name: str) -> np.ndarray:
        for s in self.segments:
            if s.name == name:
                return self.values[s.offset : s.offset + s.length]
        raise KeyError(name)

    def all_finite(self) -> bool:
        return bool(np.isfinite(self.values).all())


def param_axpy(a: float, x: ParameterVector, b: float, y: ParameterVector) -> ParameterVector:
    """Element-wise a*x + b*y; the shared segment table carries over."""
    if not x.same_table(y):
        raise ModelError("parameter vectors have mismatched segment tables")
    dtype = x.values.dtype
    out = dtype.type(a) * x.values + dtype.type(b) * y.values
    return ParameterVector(out, x.segments)


def zeros_like(pv: ParameterVector) -> ParameterVector:
    return ParameterVector(np.zeros_like(pv.values), pv.segments)


class _Block(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        d, dt = cfg.embed_dim, cfg.torch_dtype
        self.n_heads = cfg.n_heads
        self.ln1 = nn.LayerNorm(d, dtype=dt)
        self.qkv = nn.Linear(d, 3 * d, dtype=dt)
        self.proj = nn.Linear(d, d, dtype=dt)
        self.ln2 = nn.LayerNorm(d, dtype=dt)
        self.fc = nn.Linear(d, 4 * d, dtype=dt)
        self.out = nn.Linear(4 * d, d, dtype=dt)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, t, d = x.shape
        h = self.ln1(x)
        q, k, v = self.qkv(h).split(d, dim=2)
        hd = d // self.n_heads
        q = q.view(b, t, self.n_heads, hd).transpose(1, 2)
        k = k.view(b, t, self.n_heads, hd).transpose(1, 2)
        v = v.view(b, t, self.n_heads, hd).transpose(1, 2)
        att = (q @ k.transpose(-2, -1)) / (hd**0.5)
        causal = torch.ones(t, t, dtype=torch.bool, device=x.device).tril()
        att = att.masked_fill(~causal, float("-inf"))
        att = F.softmax(att, dim=-1)
        y = (att @ v).transpose(1, 2).reshape(b, t, d)
        x = x + self.proj(y)
        x = x + self.out(F.gelu(self.fc(self.ln2(x))))
        return x


class _Decoder(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        dt = cfg.torch_dtype
        self.wte = nn.Embedding(cfg.vocab_size, cfg.embed_dim, dtype=dt)
        self.wpe = nn.Embedding(cfg.context_len, cfg.embed_dim, dtype=dt)
        self.blocks = nn.ModuleList(_Block(cfg) for _ in range(cfg.n_layers))
        self.ln_f = nn.LayerNorm(cfg.embed_dim, dtype=dt)
        self.head = nn.Linear(cfg.embed_dim, cfg.vocab_size, bias=False, dtype=dt)

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        t = ids.shape[-1]
        pos = torch.arange(t, device=ids.device)
        x = self.wte(ids) + self.wpe(pos)
        for blk in self.blocks:
            x = blk(x)
        return self.head(self.ln_f(x))


def _init_weights(module: nn.Module, seed: int) -> None:
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, p in module.named_parameters():
            parent = name.rsplit(".", 1)[0] if "." in name else ""
            owner = module.get_submodule(parent) if parent else module
            if isinstance(owner, nn.LayerNorm):
                p.fill_(1.0) if name.endswith("weight") else p.zero_()
            elif name.endswith(".bias"):
                p.zero_()
            else:
                p.copy_(torch.empty_like(p).normal_(0.0, 0.02, generator=gen))


class LanguageModel:
    """A config plus live torch weights, exposed through flat parameter vectors."""

    def __init__(self, config: ModelConfig):
        self.config = config
        self.module = _Decoder(config)
        _init_weights(self.module, config.init_seed)
        offset = 0
        segs = []
        for name, p in self.module.named_parameters():
            segs.append(Segment(name, offset, p.numel()))
            offset += p.numel()
        self.segments: tuple[Segment, ...] = tuple(segs)
        self.n_params = offset

    def get_params(self) -> ParameterVector:
        flat = np.empty(self.n_params, dtype=self.config.numpy_dtype)
        for seg, (_, p) in zip(self.segments, self.module.named_parameters()):
            flat[seg.offset : seg.offset + seg.length] = (
                p.detach().reshape(-1).numpy()
            )
        return ParameterVector(flat, self.segments)

    def set_params(self, pv: ParameterVector) -> None:
        if pv.segments != self.segments:
            raise ModelError("parameter vector does not match this model's segment table")
        if pv.values.dtype != self.config.numpy_dtype:
            raise ModelError(
                f"parameter dtype {pv.values.dtype} does not match precision {self.config.precision}"
            )
        with torch.no_grad():
            for seg, (_, p) in zip(self.segments, self.module.named_parameters()):
                chunk = pv.values[seg.offset : seg.offset + seg.length]
                p.copy_(torch.from_numpy(chunk.reshape(tuple(p.shape)).copy()))

    def logits_t(self, ids: torch.Tensor) -> torch.Tensor:
        """Differentiable logits for a (T,) or (B, T) id tensor."""
        t = ids.shape[-1]
        if t > self.config.context_len:
            raise ModelError(
                f"sequence of {t} tokens exceeds context_len {self.config.context_len}"
            )
        if ids.numel() and (ids.min() < 0 or ids.max() >= self.config.vocab_size):
            raise ModelError("token id out of range")
        squeeze = ids.dim() == 1
        out = self.module(ids.unsqueeze(0) if squeeze else ids)
        return out.squeeze(0) if squeeze else out

    def zero_grad(self) -> None:
        for p in self.module.parameters():
            p.grad = None

    def grad_vector(self) -> ParameterVector:
        flat = np.zeros(self.n_params, dtype=self.config.numpy_dtype)
        for seg, (_, p) in zip(self.segments, self.module.named_parameters()):
            if p.grad is not None:
                flat[seg.offset : seg.offset + seg.length] = (
                    p.grad.detach().reshape(-1).numpy()
                )
        return ParameterVector(flat, self.segments)


def init_model(config: ModelConfig) -> LanguageModel:
    """Build a model with weights fully determined by ``config.init_seed``."""
    return LanguageModel(config)


def clone_model(model: LanguageModel, params: ParameterVector | None = None) -> LanguageModel:
    """A fresh model with the same config, loaded with ``params`` (default: a copy of the source's)."""
    out = LanguageModel(model.config)
    out.set_params(params if params is not None else model.get_params())
    return out


def forward(model: LanguageModel, tokens: TokenSequence | Sequence[int]) -> np.ndarray:
    """Causal logits, one row per input position; (0, vocab) for empty input."""
    ids = list(tokens.ids if isinstance(tokens, TokenSequence) else tokens)
    if not ids:
        return np.zeros((0, model.config.vocab_size), dtype=model.config.numpy_dtype)
    with torch.no_grad():
        out = model.logits_t(torch.tensor(ids, dtype=torch.long))
    return out.numpy().copy()


def sequence_nll_t(
    model: LanguageModel, prompt: TokenSequence, target: TokenSequence
) -> torch.Tensor:
    """Differentiable sum of per-token cross-entropies over the target positions."""
    if len(target) == 0:
        raise ModelError("target must be non-empty")
    if len(prompt) == 0:
        raise ModelError("prompt must be non-empty")
    ids = torch.tensor(list(prompt.ids + target.ids), dtype=torch.long)
    logits = model.logits_t(ids)
    p = len(prompt)
    rows = logits[p - 1 : p + len(target) - 1]
    tgt = ids[p:]
    return F.cross_entropy(rows, tgt, reduction="sum")


def batch_nll_t(
    model: LanguageModel, pairs: Sequence[tuple[TokenSequence, TokenSequence]]
) -> torch.Tensor:
    """Per-pair nll sums as one differentiable vector.

    Pairs with uniform prompt/target lengths run as a single rectangular batch.
    """
    if not pairs:
        raise ModelError("no pairs to score")
    plens = {len(p) for p, _ in pairs}
    tlens = {len(t) for _, t in pairs}
    if len(plens) == 1 and len(tlens) == 1:
        p, tl = plens.pop(), tlens.pop()
        if tl == 0 or p == 0:
            raise ModelError("prompt and target must be non-empty")
        ids = torch.tensor([list(pp.ids + tt.ids) for pp, tt in pairs], dtype=torch.long)
        logits = model.logits_t(ids)
        rows = logits[:, p - 1 : p + tl - 1, :]
        tgt = ids[:, p:]
        flat = F.cross_entropy(
            rows.reshape(-1, rows.shape[-1]), tgt.reshape(-1), reduction="none"
        )
        return flat.view(len(pairs), tl).sum(dim=1)
    return torch.stack([sequence_nll_t(model, p, t) for p, t in pairs])


def sequence_nll(
    model: LanguageModel, prompt: TokenSequence, target: TokenSequence
) -> float:
    with torch.no_grad():
        return float(sequence_nll_t(model, prompt, target))


def loss_and_grad(
    model: LanguageModel, objective: Callable[[LanguageModel], torch.Tensor]
) -> tuple[float, ParameterVector]:
    """Evaluate a differentiable scalar objective and its gradient at the current weights."""
    model.zero_grad()
    loss = objective(model)
    value = float(loss.detach())
    if not torch.isfinite(loss):
        raise NonFiniteLossError(f"objective evaluated to {value}")
    loss.backward()
    grad = model.grad_vector()
    model.zero_grad()
    return value, grad


def config_with(config: ModelConfig, **changes) -> ModelConfig:
    return replace(config, **changes)
