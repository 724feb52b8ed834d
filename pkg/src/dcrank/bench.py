"""Cost benchmark: instrumented counters against closed forms, plus wall-clock latency.

Only encode + interact + classify is timed; tokenisation and first-stage
retrieval are identical across modes and stay outside the measured region.
"""

from __future__ import annotations

import logging
import statistics
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cache import EncodingCache
from .config import RunConfig
from .encoder import DOCUMENT, QUESTION, TokenSequence, precompute_corpus
from .errors import CacheMissError
from .model import Model
from .rerank import MODES, rerank
from .text import CLS, SEP, Vocab

logger = logging.getLogger(__name__)


def closed_form_pairs(mode: str, lq: int, ld: int, nd: int, n_lower: int, k: int, h: int,
                      arch: str = "dc") -> int:
    """Attention score pairs per question, derived from shapes alone."""
    interaction = 0 if arch == "dc-linear" else nd * k * h * (lq + ld) ** 2
    if mode == "cached":
        return n_lower * h * lq ** 2 + interaction
    if mode == "fresh":
        return n_lower * h * (lq ** 2 + nd * ld ** 2) + interaction
    if mode == "concat":
        return nd * n_lower * h * (lq + ld) ** 2
    raise ValueError(f"unknown mode {mode!r}")


def counter_speedup(config: RunConfig, nd: int, mode: str = "cached") -> float:
    c = config
    args = (c.max_q_len, c.max_d_len, nd, c.n_lower, c.k_layers, c.n_heads, c.arch)
    return closed_form_pairs("concat", *args) / closed_form_pairs(mode, *args)


def synthetic_vocab(size: int = 512) -> Vocab:
    return Vocab(["[PAD]", "[UNK]", "[CLS]", "[SEP]"] + [f"tok{i}" for i in range(size - 4)])


def full_length_sequence(rng: np.random.Generator, length: int, role: str, vocab_size: int) -> TokenSequence:
    ids = rng.integers(4, vocab_size, size=length)
    ids[0] = CLS
    ids[-1] = SEP
    return TokenSequence(ids=ids.astype(np.int64), role=role, true_length=length)


@dataclass
class BenchInputs:
    questions: list[TokenSequence]
    docs: dict[str, TokenSequence]


def make_inputs(config: RunConfig, n_questions: int, nd: int, vocab_size: int, seed: int) -> BenchInputs:
    """Questions and documents that fill their max lengths exactly (no padding)."""
    rng = np.random.default_rng(seed)
    qs = [full_length_sequence(rng, config.max_q_len, QUESTION, vocab_size) for _ in range(n_questions)]
    docs = {f"doc{i:05d}": full_length_sequence(rng, config.max_d_len, DOCUMENT, vocab_size) for i in range(nd)}
    return BenchInputs(qs, docs)


def _measure(model: Model, inputs: BenchInputs, cache: EncodingCache, mode: str, reps: int,
             candidates: Sequence[str]) -> dict:
    """Run one mode over all questions ``reps`` times; return counters and per-question latencies."""
    rep_means = []
    pairs = macs = None
    stage_pairs = None
    for _ in range(reps):
        times = []
        for qi, q in enumerate(inputs.questions):
            r = rerank(f"bq{qi}", q, candidates, model, cache, mode, None, inputs.docs)
            times.append(r.elapsed)
            total = r.total
            if pairs is None:
                pairs, macs = total.attention_pairs, total.macs
                stage_pairs = {s: c.attention_pairs for s, c in r.counters.items()}
            elif (total.attention_pairs, total.macs) != (pairs, macs):
                raise AssertionError(f"{mode}: counters changed between identical runs")
        rep_means.append(statistics.fmean(times))
    return {
        "attention_pairs": pairs,
        "macs": macs,
        "stage_attention_pairs": stage_pairs,
        "latency_reps": rep_means,
        "latency_mean": statistics.fmean(rep_means),
        "latency_std": statistics.stdev(rep_means) if len(rep_means) > 1 else 0.0,
    }


def run_bench(config: RunConfig, model: Model | None = None, n_questions: int = 2, reps: int = 5,
              nd_sweep: Sequence[int] = (1, 8, 20, 40, 80), k_sweep: Sequence[int] = (1, 2, 3),
              modes: Sequence[str] = MODES, seed: int = 0, cache: EncodingCache | None = None) -> dict:
    """Benchmark all modes at ``config.pool_size`` candidates, then sweep Nd and K on counters."""
    if model is None:
        model = Model.create(config, synthetic_vocab())
    config = model.config
    vocab_size = len(model.vocab)
    nd = config.pool_size
    inputs = make_inputs(config, n_questions, max([nd, *nd_sweep]), vocab_size, seed)
    all_ids = sorted(inputs.docs)
    if cache is None:
        cache = EncodingCache(config.d, config.max_d_len, model.model_hash)
        precompute_corpus(((i, inputs.docs[i]) for i in all_ids), model, cache)
    missing = cache.missing(all_ids, model.model_hash)
    if missing and "cached" in modes:
        raise CacheMissError(missing)

    c = config
    shape = (c.max_q_len, c.max_d_len)
    candidates = all_ids[:nd]
    results = {}
    for mode in modes:
        logger.info("bench mode %s", mode)
        res = _measure(model, inputs, cache, mode, reps, candidates)
        res["closed_form_pairs"] = closed_form_pairs(mode, *shape, nd, c.n_lower, c.k_layers, c.n_heads, c.arch)
        res["counter_match"] = res["attention_pairs"] == res["closed_form_pairs"]
        results[mode] = res
    if "concat" in results:
        for res in results.values():
            res["counter_speedup"] = results["concat"]["attention_pairs"] / res["attention_pairs"]
            res["wall_speedup"] = results["concat"]["latency_mean"] / res["latency_mean"]

    one_q = BenchInputs(inputs.questions[:1], inputs.docs)
    nd_rows = []
    for n in nd_sweep:
        row = {"nd": n}
        for mode in ("cached", "fresh", "concat"):
            measured = _measure(model, one_q, cache, mode, 1, all_ids[:n])["attention_pairs"]
            closed = closed_form_pairs(mode, *shape, n, c.n_lower, c.k_layers, c.n_heads, c.arch)
            row[f"{mode}_pairs"] = measured
            row[f"{mode}_match"] = measured == closed
        row["cached_speedup"] = row["concat_pairs"] / row["cached_pairs"]
        row["fresh_speedup"] = row["concat_pairs"] / row["fresh_pairs"]
        nd_rows.append(row)

    k_rows = []
    for k in k_sweep:
        k_model = Model(config.replace(k_layers=k), model.vocab,
                        _with_k_layers(model, config.replace(k_layers=k)))
        k_cache = EncodingCache(c.d, c.max_d_len, k_model.model_hash)
        precompute_corpus(((i, inputs.docs[i]) for i in candidates), k_model, k_cache)
        cached = _measure(k_model, one_q, k_cache, "cached", reps, candidates)
        concat_pairs = closed_form_pairs("concat", *shape, nd, c.n_lower, k, c.n_heads, c.arch)
        concat_measured = (results["concat"]["attention_pairs"] if "concat" in results
                           else _measure(k_model, one_q, k_cache, "concat", 1, candidates)["attention_pairs"])
        k_rows.append({
            "k": k,
            "interaction_pairs": cached["stage_attention_pairs"]["interaction"],
            "cached_pairs": cached["attention_pairs"],
            "cached_match": cached["attention_pairs"] == closed_form_pairs(
                "cached", *shape, nd, c.n_lower, k, c.n_heads, c.arch),
            "concat_pairs": concat_measured,
            "concat_match": concat_measured == concat_pairs,
            "counter_speedup": concat_measured / cached["attention_pairs"],
            "cached_latency_mean": cached["latency_mean"],
        })

    return {
        "config": config.model_fields(),
        "config_hash": config.config_hash(),
        "n_questions": n_questions,
        "repetitions": reps,
        "nd": nd,
        "modes": results,
        "nd_sweep": nd_rows,
        "k_sweep": k_rows,
    }


def _with_k_layers(model: Model, config: RunConfig):
    """Copy of ``model``'s parameters with the interaction stack re-initialised to K blocks."""
    from .interaction import init_interaction
    from .model import ModelParams

    p = model.params
    rng = np.random.default_rng(config.seed + 1000 * config.k_layers)
    return ModelParams(question=p.question, document=p.document, concat=p.concat,
                       interaction=init_interaction(rng, config.joint_len, config.d, config.n_heads,
                                                    config.k_layers),
                       linear=p.linear, classifier=p.classifier)
