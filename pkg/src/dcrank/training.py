"""Joint training of encoders, interaction head and classifier with Adam."""

from __future__ import annotations

import logging
import math
from typing import Mapping, Sequence

import numpy as np

from .classifier import TrainingExample
from .config import RunConfig
from .data import Document, Question
from .encoder import DOCUMENT, QUESTION, TokenSequence, tokenize
from .errors import InvalidInputError, NonFiniteGradientError, TrainingDiverged
from .layers import AdamState, adam_step
from .model import Model
from .tensor import bce_with_logits
from .text import Vocab

logger = logging.getLogger(__name__)


def build_vocab(config: RunConfig, corpus: Mapping[str, Document], questions: Sequence[Question]) -> Vocab:
    texts = [d.content for d in corpus.values()] + [q.question for q in questions]
    return Vocab.build(texts, min_freq=config.min_freq, max_size=config.vocab_size)


def tokenize_all(model: Model, corpus: Mapping[str, Document], questions: Sequence[Question],
                 doc_ids=None) -> tuple[dict[str, TokenSequence], dict[str, TokenSequence]]:
    c = model.config
    q_seqs = {q.id: tokenize(q.question, QUESTION, model.vocab, c.max_q_len) for q in questions}
    ids = corpus.keys() if doc_ids is None else doc_ids
    d_seqs = {i: tokenize(corpus[i].content, DOCUMENT, model.vocab, c.max_d_len) for i in ids}
    return q_seqs, d_seqs


def _snapshot(model: Model) -> dict[str, np.ndarray]:
    return {n: t.data.copy() for n, t in model.params.named_parameters()}


def train(config: RunConfig, examples: Sequence[TrainingExample], corpus: Mapping[str, Document],
          questions: Sequence[Question], vocab: Vocab | None = None, model: Model | None = None) -> Model:
    """Train ``config.arch`` on labelled pairs; returns the model with its per-epoch loss log.

    Each epoch visits the examples in a seeded permutation. Training stops
    after ``config.epochs`` epochs or once the epoch loss has not improved
    for ``config.patience`` epochs.
    """
    if not examples:
        raise InvalidInputError("no training examples")
    if model is None:
        model = Model.create(config, vocab or build_vocab(config, corpus, questions))
    by_id = {q.id: q for q in questions}
    missing = sorted({e.question_id for e in examples} - set(by_id))
    if missing:
        raise InvalidInputError(f"examples reference unknown questions: {missing[:5]}")
    q_seqs, d_seqs = tokenize_all(model, corpus, [by_id[i] for i in sorted({e.question_id for e in examples})],
                                  sorted({e.doc_id for e in examples}))
    q_ids = np.stack([q_seqs[e.question_id].ids for e in examples])
    q_len = np.array([q_seqs[e.question_id].true_length for e in examples])
    d_ids = np.stack([d_seqs[e.doc_id].ids for e in examples])
    d_len = np.array([d_seqs[e.doc_id].true_length for e in examples])
    labels = np.array([e.label for e in examples], dtype=np.float32)

    trainable = model.params.trainable_for(config.arch)
    named = dict(trainable)
    state = AdamState()
    rng = np.random.default_rng(config.seed)
    n = len(examples)
    log: list[float] = []
    best = math.inf
    stale = 0
    last_good = _snapshot(model)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for step, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            logits = model.pair_logits(q_ids[idx], q_len[idx], d_ids[idx], d_len[idx], config.arch)
            loss = bce_with_logits(logits, labels[idx])
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingDiverged(epoch, step, last_good)
            for _, t in trainable:
                t.grad = None
            loss.backward()
            grads = {name: (t.grad if t.grad is not None else np.zeros_like(t.data)) for name, t in trainable}
            try:
                adam_step(named, grads, state, config.lr)
            except NonFiniteGradientError as exc:
                raise TrainingDiverged(epoch, step, last_good) from exc
            total += value * len(idx)
        epoch_loss = total / n
        log.append(epoch_loss)
        logger.info("epoch %d loss %.6f", epoch, epoch_loss)
        last_good = _snapshot(model)
        if epoch_loss < best:
            best = epoch_loss
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    for _, t in model.params.named_parameters():
        t.grad = None
    model.loss_log = log
    model.invalidate_hash()
    return model
