"""Tokenisation and the three encoder stacks.

The question and document stacks run independently, so a document's
encoding can be computed once and cached. The concatenated cross-encoder
baseline has to re-run its stack for every (question, document) pair.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable

import numpy as np

from .errors import DuplicateKeyError, InvalidInputError
from .layers import BlockParams, OpCounters, ParamSet, init_block, normal_param, transformer_block
from .tensor import Tensor, embedding, no_grad
from .text import CLS, PAD, SEP, Vocab, split_tokens

if TYPE_CHECKING:
    from .cache import EncodingCache
    from .model import Model

QUESTION = "question"
DOCUMENT = "document"
PAIR = "pair"
ROLES = (QUESTION, DOCUMENT)


@dataclass
class TokenSequence:
    ids: np.ndarray
    role: str
    true_length: int

    @property
    def max_len(self) -> int:
        return len(self.ids)

    @property
    def mask(self) -> np.ndarray:
        return np.arange(len(self.ids)) < self.true_length


@dataclass
class EncodingMatrix:
    values: np.ndarray
    role: str
    model_hash: int
    true_length: int
    # Position of the document CLS row inside a concatenated pair encoding.
    doc_offset: int | None = None

    @property
    def mask(self) -> np.ndarray:
        return np.arange(self.values.shape[0]) < self.true_length


@dataclass
class EncoderParams(ParamSet):
    tok_emb: Tensor
    pos_emb: Tensor
    blocks: list[BlockParams]
    # Segment embeddings; only the concatenated baseline has them.
    type_emb: Tensor | None = None


def init_encoder(rng: np.random.Generator, vocab_size: int, max_len: int, d: int,
                 n_heads: int, n_layers: int, with_types: bool = False) -> EncoderParams:
    return EncoderParams(
        tok_emb=normal_param(rng, vocab_size, d),
        pos_emb=normal_param(rng, max_len, d),
        blocks=[init_block(rng, d, n_heads) for _ in range(n_layers)],
        type_emb=normal_param(rng, 2, d) if with_types else None,
    )


def tokenize(text: str, role: str, vocab: Vocab, max_len: int) -> TokenSequence:
    """CLS + word ids + SEP, truncated to ``max_len`` (CLS/SEP kept), PAD-filled."""
    if role not in ROLES:
        raise InvalidInputError(f"unknown role {role!r}")
    if max_len < 2:
        raise InvalidInputError("max_len must be at least 2")
    tokens = split_tokens(" ".join(text.split()))
    if not tokens:
        raise InvalidInputError(f"empty {role} text")
    body = vocab.ids(tokens[: max_len - 2])
    ids = np.full(max_len, PAD, dtype=np.int64)
    ids[0] = CLS
    ids[1:1 + len(body)] = body
    ids[1 + len(body)] = SEP
    return TokenSequence(ids=ids, role=role, true_length=len(body) + 2)


def encoder_forward(p: EncoderParams, ids: np.ndarray, mask: np.ndarray,
                    counters: OpCounters | None = None, type_ids: np.ndarray | None = None) -> Tensor:
    """Embed ``ids`` of shape (..., L) and run the block stack."""
    length = ids.shape[-1]
    x = embedding(p.tok_emb, ids) + p.pos_emb[:length]
    if p.type_emb is not None and type_ids is not None:
        x = x + embedding(p.type_emb, type_ids)
    for block in p.blocks:
        x = transformer_block(x, mask, block, counters)
    return x


def _encode_single(seq: TokenSequence, role: str, p: EncoderParams, model_hash: int,
                   counters: OpCounters | None) -> EncodingMatrix:
    if seq.role != role:
        raise InvalidInputError(f"expected a {role} sequence, got {seq.role}")
    with no_grad():
        out = encoder_forward(p, seq.ids, seq.mask, counters)
    return EncodingMatrix(values=out.data, role=role, model_hash=model_hash, true_length=seq.true_length)


def encode_question(q: TokenSequence, model: "Model", counters: OpCounters | None = None) -> EncodingMatrix:
    """Online encoding of one question with the question stack."""
    return _encode_single(q, QUESTION, model.params.question, model.model_hash, counters)


def encode_document(d: TokenSequence, model: "Model", counters: OpCounters | None = None) -> EncodingMatrix:
    """Encoding of one document with the (offline) document stack."""
    return _encode_single(d, DOCUMENT, model.params.document, model.model_hash, counters)


def pack_pair(q_ids: np.ndarray, q_len: np.ndarray, d_ids: np.ndarray, d_len: np.ndarray,
              joint_len: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pack question then document tokens into one sequence (batched over leading axes).

    Returns ``(ids, type_ids, mask)``; the document CLS lands at index ``q_len``.
    """
    q_ids = np.atleast_2d(q_ids)
    d_ids = np.atleast_2d(d_ids)
    q_len = np.atleast_1d(q_len)
    d_len = np.atleast_1d(d_len)
    batch = q_ids.shape[0]
    ids = np.full((batch, joint_len), PAD, dtype=np.int64)
    types = np.zeros((batch, joint_len), dtype=np.int64)
    for b in range(batch):
        lq, ld = int(q_len[b]), int(d_len[b])
        ids[b, :lq] = q_ids[b, :lq]
        ids[b, lq:lq + ld] = d_ids[b, :ld]
        types[b, lq:lq + ld] = 1
    mask = np.arange(joint_len)[None, :] < (q_len + d_len)[:, None]
    return ids, types, mask


def encode_pair_concat(q: TokenSequence, d: TokenSequence, model: "Model",
                       counters: OpCounters | None = None) -> EncodingMatrix:
    """Cross-encoder baseline: one stack over the packed question+document tokens."""
    if q.role != QUESTION or d.role != DOCUMENT:
        raise InvalidInputError("encode_pair_concat takes (question, document) sequences")
    joint = model.config.joint_len
    if q.true_length + d.true_length > joint:
        raise InvalidInputError(
            f"combined length {q.true_length + d.true_length} exceeds joint max {joint}")
    ids, types, mask = pack_pair(q.ids, np.array([q.true_length]), d.ids, np.array([d.true_length]), joint)
    with no_grad():
        out = encoder_forward(model.params.concat, ids[0], mask[0], counters, types[0])
    return EncodingMatrix(values=out.data, role=PAIR, model_hash=model.model_hash,
                          true_length=q.true_length + d.true_length, doc_offset=q.true_length)


def precompute_corpus(docs: Iterable[tuple[str, TokenSequence]], model: "Model", cache: "EncodingCache",
                      counters: OpCounters | None = None) -> int:
    """Encode every document not yet cached under the current model hash.

    Returns the number of new cache entries; a second run over the same
    corpus writes nothing.
    """
    from .cache import CacheKey

    docs = list(docs)
    counts = Counter(doc_id for doc_id, _ in docs)
    dupes = sorted(doc_id for doc_id, n in counts.items() if n > 1)
    if dupes:
        raise DuplicateKeyError(dupes)
    written = 0
    for doc_id, seq in docs:
        key = CacheKey(doc_id, model.model_hash)
        if key in cache:
            continue
        cache.put(key, encode_document(seq, model, counters))
        written += 1
    return written
