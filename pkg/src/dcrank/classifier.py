"""Relevance classifier head, its loss, and distant-supervision labelling."""

from __future__ import annotations

import logging
import math
import zlib
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import InvalidInputError
from .interaction import PairOutput
from .layers import ParamSet, normal_param, zeros_param
from .tensor import Tensor, concat, no_grad
from .text import AnswerMatcher

logger = logging.getLogger(__name__)

PROB_CLAMP = 1e-7


@dataclass
class ClassifierParams(ParamSet):
    w1: Tensor  # (2d, h)
    b1: Tensor
    w2: Tensor  # (h, 1)
    b2: Tensor


def init_classifier(rng: np.random.Generator, d: int, hidden: int | None = None) -> ClassifierParams:
    hidden = hidden or d
    return ClassifierParams(w1=normal_param(rng, 2 * d, hidden), b1=zeros_param(hidden),
                            w2=normal_param(rng, hidden, 1), b2=zeros_param(1))


def classifier_logits(params: ClassifierParams, o_q: Tensor, o_d: Tensor) -> Tensor:
    """Logit of tanh-MLP over [o_q ; o_d]; shape (...,)."""
    joint = concat([o_q, o_d], axis=-1)
    if joint.shape[-1] != params.w1.shape[0]:
        raise InvalidInputError(f"classifier expects width {params.w1.shape[0]}, got {joint.shape[-1]}")
    hidden = (joint @ params.w1 + params.b1).tanh()
    logit = hidden @ params.w2 + params.b2
    return logit.reshape(logit.shape[:-1])


def sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def pair_logit(pair: PairOutput, params: ClassifierParams) -> float:
    if not (np.all(np.isfinite(pair.o_cls)) and np.all(np.isfinite(pair.o_cls_doc))):
        raise InvalidInputError("non-finite CLS encodings passed to the classifier")
    with no_grad():
        z = classifier_logits(params, Tensor(pair.o_cls[None]), Tensor(pair.o_cls_doc[None]))
    return float(z.data[0])


def probability(logit: float) -> float:
    """Sigmoid kept strictly inside (0, 1) even when it saturates in float64."""
    return min(max(sigmoid(logit), 5e-324), 1.0 - 2.0 ** -53)


def classify(pair: PairOutput, params: ClassifierParams) -> float:
    return probability(pair_logit(pair, params))


def bce_loss(p: float, y: int) -> float:
    if y not in (0, 1):
        raise InvalidInputError(f"label must be 0 or 1, got {y!r}")
    p = min(max(float(p), PROB_CLAMP), 1.0 - PROB_CLAMP)
    return -(y * math.log(p) + (1 - y) * math.log(1.0 - p))


@dataclass(frozen=True)
class TrainingExample:
    question_id: str
    doc_id: str
    label: int


def _question_rng(seed: int, question_id: str) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(question_id.encode("utf-8"))])


def label_examples(questions: Sequence, retrieval: Mapping[str, Sequence[str]], corpus: Mapping,
                   neg_ratio: int | None = 4, seed: int = 0) -> list[TrainingExample]:
    """Distant supervision over retrieved lists.

    A retrieved document is positive iff its normalised text contains one of
    the question's normalised answers as a contiguous token run. Negatives
    are sampled down to ``neg_ratio`` per positive with a per-question seed
    (None keeps them all). Questions without answers are skipped.
    """
    matcher = AnswerMatcher({doc_id: doc.text for doc_id, doc in corpus.items()})
    examples: list[TrainingExample] = []
    skipped = 0
    for q in questions:
        answers = [a for a in q.answers if a.strip()]
        if not answers:
            skipped += 1
            continue
        doc_ids = sorted(set(retrieval.get(q.id, ())))
        pos = [d for d in doc_ids if matcher.contains(d, answers)]
        pos_set = set(pos)
        neg = [d for d in doc_ids if d not in pos_set]
        if neg_ratio is not None and len(neg) > neg_ratio * len(pos):
            keep = _question_rng(seed, q.id).choice(len(neg), size=neg_ratio * len(pos), replace=False)
            neg = [neg[i] for i in sorted(keep)]
        examples.extend(TrainingExample(q.id, d, 1) for d in pos)
        examples.extend(TrainingExample(q.id, d, 0) for d in neg)
    if skipped:
        logger.warning("skipped %d question(s) with no answers", skipped)
    return examples
