"""Stage functions behind the CLI. Each reads and writes files under ``out_dir``.

Artifacts carry the config hash so later stages can refuse inputs produced
under a different configuration. Nothing time-dependent is written, so two
runs with the same inputs and config produce byte-identical files.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .cache import EncodingCache, read_checkpoint
from .classifier import label_examples
from .config import RunConfig
from .data import Question, read_corpus, read_questions, write_jsonl
from .encoder import precompute_corpus
from .errors import InvalidInputError, ProvenanceError, StageError
from .metrics import evaluate
from .model import Model
from .rerank import MODES, rerank
from .retrieval import RankedList, TfidfIndex, read_ranked_tsv, write_ranked_tsv
from .text import split_tokens
from .training import build_vocab, tokenize_all, train

logger = logging.getLogger(__name__)

STAGES = ("ingest", "index", "train", "encode-docs", "rerank", "eval", "bench", "report")


@dataclass
class Workspace:
    """Resolves every artifact path from a config."""

    config: RunConfig

    @property
    def root(self) -> Path:
        return Path(self.config.out_dir or "run")

    def _require(self, name: str) -> Path:
        value = getattr(self.config, name)
        if not value:
            raise InvalidInputError(f"--{name.replace('_', '-')} is required for this stage")
        return Path(value)

    @property
    def corpus(self) -> Path:
        return self._require("corpus")

    @property
    def questions(self) -> Path:
        return self._require("questions")

    @property
    def eval_questions(self) -> Path:
        return Path(self.config.eval_questions) if self.config.eval_questions else self.questions

    @property
    def summary(self) -> Path:
        return self.root / "summary.json"

    @property
    def index(self) -> Path:
        return self.root / "index.npz"

    @property
    def tfidf(self) -> Path:
        return self.root / "tfidf.tsv"

    @property
    def checkpoint(self) -> Path:
        return Path(self.config.checkpoint) if self.config.checkpoint else self.root / "checkpoint.bin"

    @property
    def cache(self) -> Path:
        return Path(self.config.cache) if self.config.cache else self.root / "cache.bin"

    def rerank(self, mode: str) -> Path:
        return self.root / f"rerank_{mode}.jsonl"

    @property
    def metrics(self) -> Path:
        return self.root / "metrics.json"

    def ensure(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)


def run_stage(stage: str, fn: Callable, *args, **kwargs):
    """Call ``fn`` and re-raise any failure as a StageError naming ``stage``."""
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001 - every failure is reported with its stage
        raise StageError(stage, exc) from exc


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _all_questions(ws: Workspace) -> list[Question]:
    """Training questions followed by any held-out questions not already present."""
    qs = read_questions(ws.questions)
    if ws.config.eval_questions:
        seen = {q.id for q in qs}
        qs += [q for q in read_questions(ws.eval_questions) if q.id not in seen]
    return qs


def _histogram(lengths: Sequence[int], bins: int = 10) -> dict:
    counts, edges = np.histogram(np.asarray(lengths), bins=bins)
    return {"counts": counts.tolist(), "edges": [float(e) for e in edges],
            "min": int(min(lengths)), "max": int(max(lengths)), "mean": float(np.mean(lengths))}


# -- stages -------------------------------------------------------------------

def stage_ingest(config: RunConfig) -> dict:
    """Validate the inputs and summarise them; the vocabulary size is what ``train`` will build."""
    ws = Workspace(config)
    corpus = read_corpus(ws.corpus)
    questions = read_questions(ws.questions)
    eval_qs = read_questions(ws.eval_questions) if config.eval_questions else []
    vocab = build_vocab(config, corpus, questions)
    summary = {
        "documents": len(corpus),
        "questions": len(questions),
        "eval_questions": len(eval_qs),
        "questions_without_answers": sum(1 for q in questions + eval_qs if not any(a.strip() for a in q.answers)),
        "vocab_size": len(vocab),
        "doc_tokens": _histogram([len(split_tokens(d.content)) for d in corpus.values()]),
        "question_tokens": _histogram([len(split_tokens(q.question)) for q in questions + eval_qs]),
        "docs_truncated": sum(1 for d in corpus.values() if len(split_tokens(d.content)) + 2 > config.max_d_len),
    }
    ws.ensure()
    _dump_json(ws.summary, summary)
    return summary


def stage_index(config: RunConfig) -> dict:
    """Build the TF-IDF index and write the top ``pool_size`` list for every question."""
    ws = Workspace(config)
    corpus = read_corpus(ws.corpus)
    questions = _all_questions(ws)
    index = TfidfIndex.build({i: d.content for i, d in corpus.items()})
    lists = [index.retrieve(q.question, config.pool_size, q.id) for q in questions]
    ws.ensure()
    index.save(ws.index)
    write_ranked_tsv(ws.tfidf, lists)
    empty = sum(1 for rl in lists if not rl.ranked)
    return {"documents": index.n_docs, "questions": len(lists), "empty_lists": empty}


def _ranked_lists(ws: Workspace, questions: Sequence[Question]) -> dict[str, RankedList]:
    lists = read_ranked_tsv(ws.tfidf)
    # Questions with no overlapping terms retrieve nothing and are absent from the TSV.
    for q in questions:
        lists.setdefault(q.id, RankedList(q.id, [], "tfidf"))
    return lists


def stage_train(config: RunConfig) -> dict:
    ws = Workspace(config)
    corpus = read_corpus(ws.corpus)
    questions = read_questions(ws.questions)
    lists = _ranked_lists(ws, questions)
    retrieval = {qid: rl.doc_ids[:config.pool_size] for qid, rl in lists.items()}
    examples = label_examples(questions, retrieval, corpus, config.neg_ratio, config.seed)
    positives = sum(e.label for e in examples)
    if not positives:
        raise InvalidInputError("no positive training pairs: no retrieved document contains an answer")
    start = time.perf_counter()
    model = train(config, examples, corpus, questions)
    elapsed = time.perf_counter() - start
    ws.ensure()
    model.save(ws.checkpoint, {"examples": len(examples), "positives": positives})
    return {"examples": len(examples), "positives": positives, "epochs": len(model.loss_log),
            "final_loss": model.loss_log[-1], "seconds": elapsed,
            "model_hash": f"{model.model_hash:016x}", "config_hash": model.config.config_hash()}


def _load_model(ws: Workspace) -> Model:
    return Model.load(ws.checkpoint, ws.config)


def _open_cache(path: Path, model: Model) -> EncodingCache:
    """The cache on disk if it belongs to this model, otherwise an empty one."""
    c = model.config
    if path.exists():
        cache = EncodingCache.load(path)
        if cache.model_hash == model.model_hash and (cache.d, cache.max_len) == (c.d, c.max_d_len):
            return cache
        logger.warning("%s was built for another model; starting a new cache", path)
    return EncodingCache(c.d, c.max_d_len, model.model_hash)


def stage_encode_docs(config: RunConfig) -> dict:
    ws = Workspace(config)
    model = _load_model(ws)
    if model.config.arch == "concat":
        raise InvalidInputError("the concat architecture has no document encodings to cache")
    corpus = read_corpus(ws.corpus)
    _, d_seqs = tokenize_all(model, corpus, [])
    cache = _open_cache(ws.cache, model)
    start = time.perf_counter()
    written = precompute_corpus(sorted(d_seqs.items()), model, cache)
    elapsed = time.perf_counter() - start
    ws.ensure()
    cache.persist(ws.cache)
    return {"entries": len(cache), "written": written, "seconds": elapsed,
            "bytes": ws.cache.stat().st_size}


def default_mode(arch: str) -> str:
    return "concat" if arch == "concat" else "cached"


def _check_mode(mode: str, arch: str) -> None:
    if mode not in MODES:
        raise InvalidInputError(f"mode must be one of {MODES}, got {mode!r}")
    if (mode == "concat") != (arch == "concat"):
        raise InvalidInputError(f"mode {mode} cannot run a model trained with arch={arch}")


def stage_rerank(config: RunConfig, mode: str | None = None) -> dict:
    """Rerank the first-stage pool of every evaluation question; the full pool order is kept."""
    ws = Workspace(config)
    model = _load_model(ws)
    mode = mode or default_mode(model.config.arch)
    _check_mode(mode, model.config.arch)
    corpus = read_corpus(ws.corpus)
    questions = read_questions(ws.eval_questions)
    lists = _ranked_lists(ws, questions)
    pools = {q.id: lists[q.id].doc_ids[:config.pool_size] for q in questions}
    needed = sorted({d for pool in pools.values() for d in pool})
    q_seqs, d_seqs = tokenize_all(model, corpus, questions, needed)
    cache = None
    if mode == "cached":
        # A missing cache file behaves like an empty cache: rerank raises a cache miss.
        cache = _open_cache(ws.cache, model)
    config_hash = model.config.config_hash()
    rows = []
    total_pairs = 0
    elapsed = 0.0
    for q in questions:
        result = rerank(q.id, q_seqs[q.id], pools[q.id], model, cache, mode, None, d_seqs)
        total_pairs += result.total.attention_pairs
        elapsed += result.elapsed
        rows.append({"config_hash": config_hash, "mode": mode, **result.output.to_json()})
    ws.ensure()
    write_jsonl(ws.rerank(mode), rows)
    return {"mode": mode, "questions": len(rows), "attention_pairs": total_pairs,
            "seconds": elapsed, "seconds_per_question": elapsed / max(len(rows), 1)}


def read_rerank(path: str | Path) -> tuple[str, str, dict[str, list[str]]]:
    """Return (config_hash, mode, question_id -> ranked doc ids) and check that all rows agree."""
    hashes, modes, lists = set(), set(), {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            hashes.add(row["config_hash"])
            modes.add(row["mode"])
            lists[row["question_id"]] = [d for d, _ in row["ranked"]]
    if len(hashes) != 1 or len(modes) != 1:
        raise ProvenanceError(f"{path} mixes configs {sorted(hashes)} or modes {sorted(modes)}")
    return hashes.pop(), modes.pop(), lists


def stage_eval(config: RunConfig, mode: str | None = None) -> dict:
    ws = Workspace(config)
    _, meta = read_checkpoint(ws.checkpoint)
    expected = meta["config_hash"]
    mode = mode or default_mode(meta["config"]["arch"])
    config_hash, _, reranked = read_rerank(ws.rerank(mode))
    if config_hash != expected:
        raise ProvenanceError(f"{ws.rerank(mode)} has config hash {config_hash}, checkpoint has {expected}")
    corpus = read_corpus(ws.corpus)
    questions = read_questions(ws.eval_questions)
    tfidf = {qid: rl.doc_ids for qid, rl in _ranked_lists(ws, questions).items()}
    reports = [evaluate(tfidf, tfidf, questions, corpus, config.eval_ns, "tfidf"),
               evaluate(reranked, tfidf, questions, corpus, config.eval_ns, mode)]
    out = {"config_hash": config_hash, "reports": [r.to_json() for r in reports]}
    ws.ensure()
    _dump_json(ws.metrics, out)
    return out


def stage_bench(config: RunConfig, reps: int = 5, n_questions: int = 2,
                nd_sweep: Sequence[int] = (1, 8, 20, 40, 80), k_sweep: Sequence[int] = (1, 2, 3),
                build_cache: bool = False, seed: int = 0) -> dict:
    """Benchmark on synthetic full-length inputs.

    With ``config.checkpoint`` set, that model is timed instead of a fresh
    initialisation. With ``config.cache`` set, cached mode reads that file
    and a missing entry is an error; ``build_cache`` writes it first.
    """
    from .bench import make_inputs, run_bench, synthetic_vocab

    ws = Workspace(config)
    model = Model.load(config.checkpoint, config) if config.checkpoint else Model.create(config, synthetic_vocab())
    cache = None
    if config.cache:
        if build_cache:
            c = model.config
            inputs = make_inputs(c, n_questions, max([c.pool_size, *nd_sweep]), len(model.vocab), seed)
            cache = _open_cache(Path(config.cache), model)
            precompute_corpus(sorted(inputs.docs.items()), model, cache)
            cache.persist(config.cache)
        else:
            cache = EncodingCache.load(config.cache)
    report = run_bench(model.config, model, n_questions, reps, nd_sweep, k_sweep, seed=seed, cache=cache)
    ws.ensure()
    _dump_json(ws.root / "bench.json", report)
    return report


def stage_report(config: RunConfig, metrics: Sequence[str | Path] = (), bench: str | Path | None = None,
                 n: int | None = None, figures: bool = True) -> dict:
    from .report import cmd_report

    ws = Workspace(config)
    paths = list(metrics) or ([ws.metrics] if ws.metrics.exists() else [])
    n = n or config.top_k
    table, written = cmd_report(paths, bench, ws.root, n, figures)
    return {"table": table, "written": [str(p) for p in written]}


def cmd_pipeline(config: RunConfig, log: Callable[[str, dict], None] | None = None) -> dict:
    """ingest, index, train, encode-docs, rerank, eval and report in sequence."""
    steps: list[tuple[str, Callable]] = [
        ("ingest", stage_ingest), ("index", stage_index), ("train", stage_train)]
    if config.arch != "concat":
        steps.append(("encode-docs", stage_encode_docs))
    steps += [("rerank", stage_rerank), ("eval", stage_eval), ("report", stage_report)]
    results = {}
    for name, fn in steps:
        results[name] = run_stage(name, fn, config)
        if log:
            log(name, results[name])
    return results


__all__ = ["STAGES", "Workspace", "run_stage", "stage_ingest", "stage_index", "stage_train",
           "stage_encode_docs", "stage_rerank", "stage_eval", "stage_bench", "stage_report", "cmd_pipeline",
           "read_rerank", "default_mode"]
