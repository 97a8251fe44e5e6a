"""Experiment orchestration: config file handling, the vanilla memorization
phase, sequential unlearning runs, and report emission.

A run is fully determined by its config file and seed: every emitted byte
except wall-clock fields reproduces on rerun. All artifacts land under the
config's output directory: checkpoints, one metrics CSV for the run, one
MetricReport JSON per time step, and a manifest tying them together.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from . import __version__
from .bloom import NGramFilter, build_filter_for_chunks
from .checkpoint import checkpoint_load, checkpoint_save
from .corpus import (
    ChunkPair,
    Document,
    DocumentRole,
    SplitDataset,
    build_schedule,
    ingest_document,
    stable_seed,
)
from .decode import PRESETS, SamplerConfig, get_preset
from .evaluate import MetricReport, eval_split, perplexity, step_report
from .model import LanguageModel, ModelConfig, ParameterVector, init_model
from .objectives import GradDiffWeights, SSUWeights
from .rouge import rougeL
from .tokenizer import EOS_ID, detokenize
from .unlearn import GammaPolicy, TimeStepResult, UnlearnConfig, run_sequence


class ConfigError(ValueError):
    pass


def _take(section: dict, path: str, key: str, default, required: bool = False):
    if key not in section:
        if required:
            raise ConfigError(f"missing required config field {path}{key}")
        return default
    return section.pop(key)


def _no_leftovers(section: dict, path: str) -> None:
    if section:
        raise ConfigError(f"unknown config field {path}{next(iter(section))}")


@dataclass(frozen=True)
class EvalVariant:
    preset: str | None = None
    memfree: bool = False

    @property
    def label(self) -> str:
        parts = []
        if self.preset:
            parts.append(self.preset)
        if self.memfree:
            parts.append("memfree")
        return "+".join(parts) if parts else "plain"


@dataclass(frozen=True)
class CorpusConfig:
    forget_books: tuple[str, ...]
    retain_books: tuple[str, ...]
    aux_books: tuple[str, ...] = ()
    chunk_len: int = 64
    prompt_len: int = 32
    samples_per_split: int = 16


@dataclass(frozen=True)
class MemorizeConfig:
    optimizer: str = "adam"
    lr: float = 1e-3
    weight_decay: float = 0.0
    batch_size: int = 16
    max_steps: int = 3000
    target_rouge_l: float = 0.8
    check_every: int = 100
    include_retain: bool = True
    vanilla_checkpoint: str | None = None


@dataclass(frozen=True)
class MemFreeConfig:
    ngram_n: int = 6
    target_fp_rate: float = 1e-3


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    output_dir: str
    corpus: CorpusConfig
    model: ModelConfig
    memorize: MemorizeConfig
    unlearn: UnlearnConfig
    sampler: SamplerConfig
    memfree: MemFreeConfig
    eval_variants: tuple[EvalVariant, ...]
    time_steps: int | None = None
    raw: dict = field(default_factory=dict, compare=False)

    def digest(self) -> str:
        return hashlib.sha256(
            json.dumps(self.raw, sort_keys=True).encode("utf-8")
        ).hexdigest()


def parse_config(doc: dict) -> ExperimentConfig:
    """Strict parse: every unknown key is an error naming the offending field."""
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    raw = json.loads(json.dumps(doc))
    doc = dict(doc)
    seed = _take(doc, "", "seed", None, required=True)
    output_dir = _take(doc, "", "output_dir", None, required=True)
    time_steps = _take(doc, "", "time_steps", None)

    c = dict(_take(doc, "", "corpus", None, required=True))
    corpus = CorpusConfig(
        forget_books=tuple(_take(c, "corpus.", "forget_books", None, required=True)),
        retain_books=tuple(_take(c, "corpus.", "retain_books", None, required=True)),
        aux_books=tuple(_take(c, "corpus.", "aux_books", ())),
        chunk_len=_take(c, "corpus.", "chunk_len", 64),
        prompt_len=_take(c, "corpus.", "prompt_len", 32),
        samples_per_split=_take(c, "corpus.", "samples_per_split", 16),
    )
    _no_leftovers(c, "corpus.")

    m = dict(_take(doc, "", "model", {}))
    try:
        model = ModelConfig(
            vocab_size=_take(m, "model.", "vocab_size", 260),
            embed_dim=_take(m, "model.", "embed_dim", 64),
            n_layers=_take(m, "model.", "n_layers", 2),
            n_heads=_take(m, "model.", "n_heads", 4),
            context_len=_take(m, "model.", "context_len", 128),
            init_seed=_take(m, "model.", "init_seed", stable_seed(seed, "init")),
            precision=_take(m, "model.", "precision", "f32"),
        )
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from exc
    _no_leftovers(m, "model.")

    mem = dict(_take(doc, "", "memorize", {}))
    memorize = MemorizeConfig(
        optimizer=_take(mem, "memorize.", "optimizer", "adam"),
        lr=_take(mem, "memorize.", "lr", 1e-3),
        batch_size=_take(mem, "memorize.", "batch_size", 16),
        max_steps=_take(mem, "memorize.", "max_steps", 3000),
        target_rouge_l=_take(mem, "memorize.", "target_rouge_l", 0.8),
        check_every=_take(mem, "memorize.", "check_every", 100),
        include_retain=_take(mem, "memorize.", "include_retain", True),
        vanilla_checkpoint=_take(mem, "memorize.", "vanilla_checkpoint", None),
    )
    _no_leftovers(mem, "memorize.")
    if memorize.optimizer not in ("adam", "sgd"):
        raise ConfigError(f"memorize.optimizer: unknown optimizer {memorize.optimizer!r}")

    u = dict(_take(doc, "", "unlearn", {}))
    gamma_kind = _take(u, "unlearn.", "gamma_policy", "mean_plus_std")
    gamma_value = _take(u, "unlearn.", "gamma", None)
    try:
        policy = (
            GammaPolicy.absolute(gamma_value)
            if gamma_kind == "absolute"
            else GammaPolicy(kind=gamma_kind)
        )
        unlearn = UnlearnConfig(
            algorithm=_take(u, "unlearn.", "algorithm", "ssu"),
            lr=_take(u, "unlearn.", "lr", 0.1),
            epochs=_take(u, "unlearn.", "epochs", 1),
            batch_size=_take(u, "unlearn.", "batch_size", 2),
            ssu_weights=SSUWeights(
                eps1=_take(u, "unlearn.", "eps1", 1.0),
                eps2=_take(u, "unlearn.", "eps2", 0.5),
            ),
            graddiff_weights=GradDiffWeights(
                eps1=_take(u, "unlearn.", "gd_eps1", 1.0),
                eps2=_take(u, "unlearn.", "gd_eps2", 0.5),
                eps3=_take(u, "unlearn.", "gd_eps3", 0.5),
            ),
            npo_beta=_take(u, "unlearn.", "npo_beta", 0.4),
            gamma_policy=policy,
            k_random=_take(u, "unlearn.", "k_random", 1),
            seed=stable_seed(seed, "unlearn"),
            optimizer=_take(u, "unlearn.", "optimizer", "sgd"),
            freeze_mask=_take(u, "unlearn.", "freeze_mask", False),
            divergence_guard=_take(u, "unlearn.", "divergence_guard", False),
            divergence_factor=_take(u, "unlearn.", "divergence_factor", 10.0),
            graddiff_kl_anchor=_take(u, "unlearn.", "graddiff_kl_anchor", "previous"),
            lr_decay_at=_take(u, "unlearn.", "lr_decay_at", None),
            lr_decayed=_take(u, "unlearn.", "lr_decayed", None),
        )
    except (ValueError, RuntimeError) as exc:
        raise ConfigError(f"unlearn: {exc}") from exc
    _no_leftovers(u, "unlearn.")

    s = dict(_take(doc, "", "sampler", {}))
    try:
        sampler = SamplerConfig(
            temperature=_take(s, "sampler.", "temperature", 0.4),
            top_p=_take(s, "sampler.", "top_p", 0.6),
            max_new_tokens=_take(
                s, "sampler.", "max_new_tokens", corpus.chunk_len - corpus.prompt_len
            ),
            seed=stable_seed(seed, "sampler"),
            greedy=_take(s, "sampler.", "greedy", False),
        )
    except RuntimeError as exc:
        raise ConfigError(f"sampler: {exc}") from exc
    _no_leftovers(s, "sampler.")

    mf = dict(_take(doc, "", "memfree", {}))
    memfree = MemFreeConfig(
        ngram_n=_take(mf, "memfree.", "ngram_n", 6),
        target_fp_rate=_take(mf, "memfree.", "target_fp_rate", 1e-3),
    )
    _no_leftovers(mf, "memfree.")

    e = dict(_take(doc, "", "eval", {}))
    variant_docs = _take(e, "eval.", "variants", [{"preset": None, "memfree": False}])
    _no_leftovers(e, "eval.")
    variants = []
    for i, v in enumerate(variant_docs):
        v = dict(v)
        preset = _take(v, f"eval.variants[{i}].", "preset", None)
        use_mf = _take(v, f"eval.variants[{i}].", "memfree", False)
        _no_leftovers(v, f"eval.variants[{i}].")
        if preset is not None and preset not in PRESETS:
            raise ConfigError(
                f"eval.variants[{i}].preset: unknown preset {preset!r} "
                f"(expected one of {sorted(PRESETS)})"
            )
        variants.append(EvalVariant(preset=preset, memfree=use_mf))
    if not variants:
        raise ConfigError("eval.variants must not be empty")

    _no_leftovers(doc, "")
    return ExperimentConfig(
        seed=seed,
        output_dir=output_dir,
        corpus=corpus,
        model=model,
        memorize=memorize,
        unlearn=unlearn,
        sampler=sampler,
        memfree=memfree,
        eval_variants=tuple(variants),
        time_steps=time_steps,
        raw=raw,
    )


def load_config(path: str | Path, overrides: Sequence[str] = ()) -> ExperimentConfig:
    """Parse a config file, applying dotted ``key=value`` overrides first."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        dotted, _, value = item.partition("=")
        node = doc
        keys = dotted.split(".")
        for k in keys[:-1]:
            node = node.setdefault(k, {})
        node[keys[-1]] = json.loads(value)
    return parse_config(doc)


def load_documents(cfg: CorpusConfig) -> tuple[list[Document], list[Document], list[Document]]:
    forget = [ingest_document(p, DocumentRole.FORGET) for p in cfg.forget_books]
    retain = [ingest_document(p, DocumentRole.RETAIN) for p in cfg.retain_books]
    aux = [ingest_document(p, DocumentRole.AUXILIARY) for p in cfg.aux_books]
    return forget, retain, aux


def build_splits(config: ExperimentConfig) -> SplitDataset:
    forget, retain, aux = load_documents(config.corpus)
    return build_schedule(
        forget,
        retain,
        chunk_len=config.corpus.chunk_len,
        prompt_len=config.corpus.prompt_len,
        samples_per_split=config.corpus.samples_per_split,
        seed=stable_seed(config.seed, "splits"),
        aux_books=aux,
    )


def greedy_continuations(
    model: LanguageModel, chunks: Sequence[ChunkPair], max_new_tokens: int
) -> list[list[int]]:
    """Batched greedy continuations for equal-length prompts; rows cut at EOS."""
    ids = torch.tensor([list(c.prompt.ids) for c in chunks], dtype=torch.long)
    outs = []
    with torch.no_grad():
        for _ in range(max_new_tokens):
            logits = model.logits_t(ids)[:, -1, :]
            nxt = logits.argmax(dim=-1, keepdim=True)
            ids = torch.cat([ids, nxt], dim=1)
            outs.append(nxt.squeeze(1).tolist())
    rows = []
    for b in range(len(chunks)):
        row = [outs[i][b] for i in range(len(outs))]
        if EOS_ID in row:
            row = row[: row.index(EOS_ID) + 1]
        rows.append(row)
    return rows


def greedy_rouge_l(model: LanguageModel, chunks: Sequence[ChunkPair]) -> float:
    """Mean Rouge-L F1 of batched greedy continuations against the references."""
    rows = greedy_continuations(model, chunks, max_new_tokens=len(chunks[0].continuation))
    total = 0.0
    for chunk, row in zip(chunks, rows):
        total += rougeL(detokenize(row), detokenize(chunk.continuation)).f1
    return total / len(chunks)


@dataclass
class VanillaResult:
    params: ParameterVector
    steps_trained: int
    final_loss: float
    greedy_forget_rouge_l: float
    reached_target: bool


def memorize(
    model: LanguageModel,
    train_chunks: Sequence[ChunkPair],
    gate_chunks: Sequence[ChunkPair],
    cfg: MemorizeConfig,
    seed: int,
) -> VanillaResult:
    """Train the model on full chunk sequences until the gate split's greedy
    Rouge-L reaches the target (or the step cap runs out)."""
    if cfg.optimizer == "adam":
        opt = torch.optim.Adam(model.module.parameters(), lr=cfg.lr)
    else:
        opt = torch.optim.SGD(model.module.parameters(), lr=cfg.lr)
    sequences = [list(c.tokens.ids) for c in train_chunks]
    order_rng = random.Random(stable_seed(seed, "memorize_order"))
    step = 0
    loss_val = float("inf")
    rouge = 0.0
    reached = False
    while step < cfg.max_steps:
        order = list(range(len(sequences)))
        order_rng.shuffle(order)
        for lo in range(0, len(order), cfg.batch_size):
            batch = [sequences[i] for i in order[lo : lo + cfg.batch_size]]
            ids = torch.tensor(batch, dtype=torch.long)
            logits = model.logits_t(ids)
            loss = torch.nn.functional.cross_entropy(
                logits[:, :-1, :].reshape(-1, logits.shape[-1]),
                ids[:, 1:].reshape(-1),
            )
            opt.zero_grad()
            loss.backward()
            opt.step()
            loss_val = float(loss.detach())
            step += 1
            if step % cfg.check_every == 0 or step >= cfg.max_steps:
                rouge = greedy_rouge_l(model, gate_chunks)
                if rouge >= cfg.target_rouge_l:
                    reached = True
                    break
            if step >= cfg.max_steps:
                break
        if reached or step >= cfg.max_steps:
            break
    if not reached:
        rouge = greedy_rouge_l(model, gate_chunks)
        reached = rouge >= cfg.target_rouge_l
    return VanillaResult(
        params=model.get_params(),
        steps_trained=step,
        final_loss=loss_val,
        greedy_forget_rouge_l=rouge,
        reached_target=reached,
    )


def _csv_bytes(rows: list[dict], columns: list[str]) -> bytes:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue().encode("utf-8")


METRIC_COLUMNS = ["t", "split", "rouge1", "rougeL", "n_chunks"]


@dataclass
class RunManifest:
    path: Path
    doc: dict

    @staticmethod
    def load(path: str | Path) -> "RunManifest":
        path = Path(path)
        return RunManifest(path=path, doc=json.loads(path.read_text()))

    def save(self) -> None:
        tmp = self.path.with_name(self.path.name + ".tmp")
        tmp.write_text(json.dumps(self.doc, indent=1, sort_keys=True) + "\n")
        tmp.replace(self.path)


def run_experiment(config: ExperimentConfig) -> RunManifest:
    """Execute the full protocol: memorize, unlearn sequentially, evaluate, report."""
    out = Path(config.output_dir)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    (out / "metrics").mkdir(parents=True, exist_ok=True)
    started = time.monotonic()

    splits = build_splits(config)
    T = config.time_steps if config.time_steps is not None else splits.num_steps
    if not 1 <= T <= splits.num_steps:
        raise ConfigError(f"time_steps: must be in 1..{splits.num_steps}, got {T}")

    model = init_model(config.model)
    if config.model.context_len < config.corpus.chunk_len:
        raise ConfigError("model.context_len: smaller than corpus.chunk_len")

    # Vanilla phase: memorize the original dataset (forget books, plus retain
    # books so there is non-targeted knowledge to preserve).
    if config.memorize.vanilla_checkpoint:
        vanilla_params, ck_cfg = checkpoint_load(config.memorize.vanilla_checkpoint)
        if ck_cfg != config.model:
            raise ConfigError(
                "memorize.vanilla_checkpoint: checkpoint config does not match model config"
            )
        model.set_params(vanilla_params)
        vanilla = VanillaResult(
            params=vanilla_params,
            steps_trained=0,
            final_loss=float("nan"),
            greedy_forget_rouge_l=greedy_rouge_l(model, list(splits.all_forget())),
            reached_target=True,
        )
    else:
        train_chunks = list(splits.all_forget())
        if config.memorize.include_retain:
            train_chunks += list(splits.retain_eval)
        vanilla = memorize(
            model,
            train_chunks,
            list(splits.all_forget()),
            config.memorize,
            seed=config.seed,
        )
    vanilla_path = out / "checkpoints" / "vanilla.ckpt"
    checkpoint_save(vanilla.params, config.model, vanilla_path)

    guard = None
    if any(v.memfree for v in config.eval_variants):
        guard = build_filter_for_chunks(
            list(splits.all_forget()),
            fp_rate=config.memfree.target_fp_rate,
            ngram_n=config.memfree.ngram_n,
        )

    # Vanilla reference metrics, one row per future forget split plus retain.
    vanilla_rows: list[dict] = []
    vanilla_retain_ppl = perplexity(model, splits.retain_eval)
    for t in range(1, T + 1):
        scores = eval_split(model, splits.forget_at(t), config.sampler)
        vanilla_rows.append({"t": 0, "split": f"d_f_t{t}", **scores.to_dict()})
    nor_scores = eval_split(model, splits.retain_eval, config.sampler)
    vanilla_rows.append({"t": 0, "split": "d_nor", **nor_scores.to_dict()})

    csv_rows = [dict(r) for r in vanilla_rows]
    manifest = RunManifest(
        path=out / "manifest.json",
        doc={
            "config_digest": config.digest(),
            "versions": {
                "unlearnlab": __version__,
                "torch": torch.__version__,
                "numpy": np.__version__,
            },
            "algorithm": config.unlearn.algorithm,
            "status": "running",
            "vanilla": {
                "checkpoint": str(vanilla_path),
                "steps_trained": vanilla.steps_trained,
                "greedy_forget_rouge_l": vanilla.greedy_forget_rouge_l,
                "reached_target": vanilla.reached_target,
                "retain_perplexity": vanilla_retain_ppl,
                "rows": vanilla_rows,
            },
            "steps": [],
            "metrics_csv": str(out / "metrics" / "metrics.csv"),
        },
    )

    def evaluate_step(t: int, step_model: LanguageModel, result: TimeStepResult) -> str:
        primary = config.eval_variants[0]
        report = step_report(
            step_model,
            t,
            splits.forget_at(t),
            splits.prev_at(t),
            splits.retain_eval,
            config.sampler,
            vanilla_retain_ppl,
            guard=guard if primary.memfree else None,
            preset=get_preset(primary.preset),
        )
        for name, scores in report.splits.items():
            csv_rows.append({"t": t, "split": name, **scores.to_dict()})
        for variant in config.eval_variants[1:]:
            for name, chunks in (
                ("d_f", splits.forget_at(t)),
                ("d_prev", splits.prev_at(t)),
                ("d_nor", splits.retain_eval),
            ):
                if not chunks:
                    continue
                scores = eval_split(
                    step_model,
                    chunks,
                    config.sampler,
                    guard=guard if variant.memfree else None,
                    preset=get_preset(variant.preset),
                )
                label = f"{name}@{variant.label}"
                report.extras[label] = scores.to_dict()
                csv_rows.append({"t": t, "split": label, **scores.to_dict()})
        report_path = out / "metrics" / f"step_{t}.json"
        report.save(report_path)
        manifest.doc["steps"].append(
            {
                "t": t,
                "algorithm": result.algorithm,
                "gamma_mean": (
                    float(np.mean(result.gamma_history)) if result.gamma_history else None
                ),
                "losses": result.losses,
                "theta_u_checkpoint": result.theta_u_checkpoint,
                "theta_ft_checkpoint": result.theta_ft_checkpoint,
                "metrics_json": str(report_path),
                "efficacy": report.efficacy,
                "ability_proxy": report.ability_proxy,
                "retain_perplexity": report.retain_perplexity,
                "wall_clock": result.wall_clock,
            }
        )
        return str(report_path)

    try:
        run_sequence(
            model,
            vanilla.params,
            splits,
            config.unlearn,
            T,
            out_dir=out / "checkpoints",
            evaluate_step=evaluate_step,
        )
    except Exception as exc:
        manifest.doc["status"] = f"failed: {exc}"
        manifest.doc["wall_clock"] = time.monotonic() - started
        (out / "metrics" / "metrics.csv").write_bytes(_csv_bytes(csv_rows, METRIC_COLUMNS))
        manifest.save()
        raise
    manifest.doc["status"] = "completed"
    manifest.doc["wall_clock"] = time.monotonic() - started
    (out / "metrics" / "metrics.csv").write_bytes(_csv_bytes(csv_rows, METRIC_COLUMNS))
    manifest.save()
    return manifest


def evaluate_checkpoint(
    config: ExperimentConfig,
    checkpoint_path: str | Path,
    out_dir: str | Path,
    t: int | None = None,
) -> dict:
    """Re-score saved weights on the config's splits.

    With ``t`` given, scores that step's forget/prev splits plus the retain
    sample; otherwise scores every forget split and the retain sample.
    """
    params, ck_cfg = checkpoint_load(checkpoint_path)
    if ck_cfg != config.model:
        raise ConfigError("checkpoint config does not match experiment model config")
    model = init_model(config.model)
    model.set_params(params)
    splits = build_splits(config)
    rows: list[dict] = []
    if t is not None:
        rows.append(
            {"t": t, "split": "d_f", **eval_split(model, splits.forget_at(t), config.sampler).to_dict()}
        )
        if splits.prev_at(t):
            rows.append(
                {"t": t, "split": "d_prev", **eval_split(model, splits.prev_at(t), config.sampler).to_dict()}
            )
    else:
        for step in range(1, splits.num_steps + 1):
            rows.append(
                {
                    "t": step,
                    "split": f"d_f_t{step}",
                    **eval_split(model, splits.forget_at(step), config.sampler).to_dict(),
                }
            )
    rows.append(
        {"t": t if t is not None else 0, "split": "d_nor",
         **eval_split(model, splits.retain_eval, config.sampler).to_dict()}
    )
    result = {
        "checkpoint": str(checkpoint_path),
        "retain_perplexity": perplexity(model, splits.retain_eval),
        "rows": rows,
    }
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "eval_metrics.csv").write_bytes(_csv_bytes(rows, METRIC_COLUMNS))
    (out_dir / "eval_metrics.json").write_text(json.dumps(result, indent=1) + "\n")
    return result


TRADEOFF_COLUMNS = ["t", "algorithm", "efficacy", "ability_proxy", "retain_perplexity"]


def report_emit(manifest: RunManifest, out_dir: str | Path | None = None) -> Path:
    """Write the per-step trade-off series as CSV and print a summary table."""
    steps = manifest.doc.get("steps", [])
    if not steps:
        raise ConfigError("manifest has no completed steps to report")
    out_dir = Path(out_dir) if out_dir is not None else manifest.path.parent / "metrics"
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [
        {
            "t": s["t"],
            "algorithm": s["algorithm"],
            "efficacy": s["efficacy"],
            "ability_proxy": s["ability_proxy"],
            "retain_perplexity": s["retain_perplexity"],
        }
        for s in steps
    ]
    path = out_dir / "tradeoff.csv"
    path.write_bytes(_csv_bytes(rows, TRADEOFF_COLUMNS))
    header = f"{'t':>3} {'algorithm':>10} {'gamma':>12} {'efficacy':>10} {'ability':>9} {'ppl':>10}"
    print(header)
    print("-" * len(header))
    for s in steps:
        gamma = s.get("gamma_mean")
        gamma_txt = f"{gamma:.4g}" if gamma is not None else "-"
        print(
            f"{s['t']:>3} {s['algorithm']:>10} {gamma_txt:>12} "
            f"{s['efficacy']:>10.4f} {s['ability_proxy']:>9.4f} {s['retain_perplexity']:>10.4f}"
        )
    return path
