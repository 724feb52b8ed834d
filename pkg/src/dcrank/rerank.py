"""Scoring first-stage candidates in the three serving modes.

``cached``  question encoded online, document encodings read from the cache
``fresh``   both sides encoded on the spot by the decoupled stacks
``concat``  the cross-encoder baseline over every packed pair
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .cache import CacheKey, EncodingCache
from .classifier import pair_logit, probability
from .encoder import EncodingMatrix, TokenSequence, encode_document, encode_pair_concat, encode_question
from .errors import CacheMissError, InvalidInputError
from .interaction import PairOutput, interact, interact_linear
from .layers import OpCounters
from .model import Model

MODES = ("cached", "fresh", "concat")
STAGES = ("question", "document", "pair", "interaction", "classifier")


@dataclass
class RerankOutput:
    question_id: str
    ranked: list[tuple[str, float]]

    @property
    def doc_ids(self) -> list[str]:
        return [d for d, _ in self.ranked]

    def to_json(self) -> dict:
        return {"question_id": self.question_id, "ranked": [[d, p] for d, p in self.ranked]}


@dataclass
class RerankResult:
    output: RerankOutput
    counters: dict[str, OpCounters]
    elapsed: float
    logits: dict[str, float] = field(default_factory=dict)

    @property
    def total(self) -> OpCounters:
        out = OpCounters()
        for c in self.counters.values():
            out.merge(c)
        return out


def _classifier_macs(model: Model) -> int:
    w1 = model.params.classifier.w1.shape
    return w1[0] * w1[1] + w1[1]


def rerank(question_id: str, q_seq: TokenSequence, candidates: Sequence[str], model: Model,
           cache: EncodingCache | None = None, mode: str = "cached", top_k: int | None = 10,
           doc_seqs: Mapping[str, TokenSequence] | None = None) -> RerankResult:
    """Score and sort ``candidates`` (given in first-stage order) for one question.

    Sorted by descending probability; ties go to the better first-stage rank,
    then to the smaller doc id. Ordering uses the logits so saturated
    probabilities cannot tie spuriously.
    """
    if mode not in MODES:
        raise InvalidInputError(f"unknown rerank mode {mode!r}")
    if len(set(candidates)) != len(candidates):
        raise InvalidInputError(f"duplicate candidates for question {question_id}")
    if doc_seqs is not None:
        unknown = [d for d in candidates if d not in doc_seqs]
        if unknown:
            raise InvalidInputError(f"unknown doc id(s): {', '.join(unknown[:10])}")
    if mode == "cached":
        if cache is None:
            raise CacheMissError([CacheKey(d, model.model_hash) for d in candidates])
        missing = cache.missing(candidates, model.model_hash)
        if missing:
            raise CacheMissError([CacheKey(d, model.model_hash) for d in missing])
    elif doc_seqs is None:
        raise InvalidInputError(f"{mode} mode needs document token sequences")

    counters = {s: OpCounters() for s in STAGES}
    cls_macs = _classifier_macs(model)
    linear = model.config.arch == "dc-linear"
    logits: dict[str, float] = {}

    start = time.perf_counter()
    if mode == "concat":
        for doc_id in candidates:
            enc = encode_pair_concat(q_seq, doc_seqs[doc_id], model, counters["pair"])
            pair = PairOutput(enc.values[0], enc.values[enc.doc_offset])
            logits[doc_id] = pair_logit(pair, model.params.classifier)
            counters["classifier"].macs += cls_macs
    else:
        q_enc = encode_question(q_seq, model, counters["question"])
        for doc_id in candidates:
            if mode == "cached":
                d_enc: EncodingMatrix = cache.get(CacheKey(doc_id, model.model_hash))
            else:
                d_enc = encode_document(doc_seqs[doc_id], model, counters["document"])
            if linear:
                pair = interact_linear(q_enc, d_enc, model.params.linear, counters["interaction"])
            else:
                pair = interact(q_enc, d_enc, model.params.interaction, counters["interaction"])
            logits[doc_id] = pair_logit(pair, model.params.classifier)
            counters["classifier"].macs += cls_macs
    elapsed = time.perf_counter() - start

    first_rank = {d: i for i, d in enumerate(candidates)}
    order = sorted(candidates, key=lambda d: (-logits[d], first_rank[d], d))
    if top_k is not None:
        order = order[:top_k]
    ranked = [(d, probability(logits[d])) for d in order]
    return RerankResult(RerankOutput(question_id, ranked), counters, elapsed, logits)
