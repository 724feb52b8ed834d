from __future__ import annotations

import numpy as np
import pytest

from dcrank.cache import CacheKey, EncodingCache
from dcrank.encoder import DOCUMENT, QUESTION, EncodingMatrix, encode_document, encode_question, tokenize
from dcrank.errors import DimensionError, InvalidInputError
from dcrank.interaction import (init_interaction, init_linear_interaction, interact, interact_linear,
                                interaction_inputs)
from dcrank.layers import OpCounters
from dcrank.tensor import Tensor
from oracles import layer_norm_ref


def enc(rng, role, length, d, true_length=None) -> EncodingMatrix:
    return EncodingMatrix(rng.normal(size=(length, d)).astype(np.float32), role, 7,
                          true_length if true_length is not None else length)


def test_zero_everything_leaves_residual_path(rng):
    p = init_interaction(rng, 10, 8, 2, 1)
    for _, t in p.named_parameters():
        if "gain" not in _:
            t.data[:] = 0
    q, d = enc(rng, QUESTION, 4, 8), enc(rng, DOCUMENT, 6, 8)
    out = interact(q, d, p)
    assert np.allclose(out.o_cls, layer_norm_ref(layer_norm_ref(list(q.values[0].astype(float)))), atol=1e-5)
    assert np.allclose(out.o_cls_doc, layer_norm_ref(layer_norm_ref(list(d.values[0].astype(float)))), atol=1e-5)


def test_interaction_counter_at_bench_shape(rng):
    p = init_interaction(rng, 144, 64, 4, 1)
    c = OpCounters()
    interact(enc(rng, QUESTION, 16, 64), enc(rng, DOCUMENT, 128, 64), p, c)
    assert c.attention_pairs == 82944


@pytest.mark.parametrize("k", [1, 2, 3])
def test_interaction_cost_linear_in_k(k):
    rng = np.random.default_rng(0)
    p = init_interaction(rng, 14, 8, 2, k)
    c = OpCounters()
    interact(enc(rng, QUESTION, 4, 8, 3), enc(rng, DOCUMENT, 10, 8, 7), p, c)
    assert c.attention_pairs == k * 2 * (3 + 7) ** 2


def test_interaction_is_stateless(rng):
    p = init_interaction(rng, 10, 8, 2, 1)
    q, d1, d2 = enc(rng, QUESTION, 4, 8), enc(rng, DOCUMENT, 6, 8), enc(rng, DOCUMENT, 6, 8)
    first = interact(q, d1, p)
    interact(q, d2, p)
    again = interact(q, d1, p)
    assert np.array_equal(first.o_cls, again.o_cls) and np.array_equal(first.o_cls_doc, again.o_cls_doc)


def test_type_embeddings_touch_only_their_segment(rng):
    p = init_interaction(rng, 10, 8, 2, 1)
    q, d = Tensor(rng.normal(size=(4, 8))), Tensor(rng.normal(size=(6, 8)))
    base = interaction_inputs(p, q, d).data.copy()
    saved = p.global_emb.type_q.data.copy()
    p.global_emb.type_q.data = saved + 1.0
    bumped_q = interaction_inputs(p, q, d).data
    assert not np.allclose(bumped_q[:4], base[:4]) and np.array_equal(bumped_q[4:], base[4:])
    p.global_emb.type_q.data = saved
    p.global_emb.type_d.data += 1.0
    bumped_d = interaction_inputs(p, q, d).data
    assert np.array_equal(bumped_d[:4], base[:4]) and not np.allclose(bumped_d[4:], base[4:])


def test_global_positions_cover_joint_sequence_without_reuse(rng):
    p = init_interaction(rng, 10, 8, 2, 1)
    g = p.global_emb
    for t in (g.type_q, g.type_d):
        t.data[:] = 0
    g.position.data = np.arange(10, dtype=np.float32)[:, None] * np.ones(8, np.float32)
    x = interaction_inputs(p, Tensor(np.zeros((4, 8))), Tensor(np.zeros((6, 8)))).data
    assert x[:, 0].tolist() == list(range(10))
    with pytest.raises(DimensionError):
        interaction_inputs(p, Tensor(np.zeros((5, 8))), Tensor(np.zeros((6, 8))))


def test_interaction_input_checks(rng):
    p = init_interaction(rng, 10, 8, 2, 1)
    with pytest.raises(InvalidInputError):
        interact(enc(rng, DOCUMENT, 4, 8), enc(rng, DOCUMENT, 6, 8), p)
    with pytest.raises(DimensionError):
        interact(enc(rng, QUESTION, 4, 8), enc(rng, DOCUMENT, 6, 4), p)
    with pytest.raises(InvalidInputError):
        init_interaction(rng, 10, 8, 2, 0)


def test_cached_encodings_interact_like_fresh_ones(tiny_model, tiny_vocab):
    q = encode_question(tokenize("capital of france", QUESTION, tiny_vocab, 6), tiny_model)
    d = encode_document(tokenize("paris is the capital of france", DOCUMENT, tiny_vocab, 10), tiny_model)
    cache = EncodingCache.from_bytes(_round_trip(tiny_model.model_hash, d))
    d_cached = cache.get(CacheKey("x", tiny_model.model_hash))
    a = interact(q, d, tiny_model.params.interaction)
    b = interact(q, d_cached, tiny_model.params.interaction)
    assert a.o_cls.tobytes() == b.o_cls.tobytes() and a.o_cls_doc.tobytes() == b.o_cls_doc.tobytes()


def _round_trip(model_hash, d_enc) -> bytes:
    c = EncodingCache(d_enc.values.shape[1], d_enc.values.shape[0], model_hash)
    c.put(CacheKey("x", model_hash), d_enc)
    return c.to_bytes()


# -- linear ablation ----------------------------------------------------------------------

def test_linear_identity_and_zero(rng):
    p = init_linear_interaction(rng, 8)
    q, d = enc(rng, QUESTION, 4, 8), enc(rng, DOCUMENT, 6, 8)
    p.w_q.data = np.eye(8, dtype=np.float32)
    p.w_d.data = np.eye(8, dtype=np.float32)
    out = interact_linear(q, d, p)
    assert np.array_equal(out.o_cls, q.values[0]) and np.array_equal(out.o_cls_doc, d.values[0])
    for t in p.parameters():
        t.data[:] = 0
    out = interact_linear(q, d, p)
    assert not out.o_cls.any() and not out.o_cls_doc.any()


def test_linear_uses_only_cls_rows_and_counts_macs(rng):
    p = init_linear_interaction(rng, 64)
    q, d = enc(rng, QUESTION, 16, 64), enc(rng, DOCUMENT, 128, 64)
    c = OpCounters()
    out = interact_linear(q, d, p, c)
    assert c.macs == 8192 and c.attention_pairs == 0
    q.values[1:] += 5
    assert np.array_equal(interact_linear(q, d, p).o_cls, out.o_cls)
    with pytest.raises(DimensionError):
        interact_linear(enc(rng, QUESTION, 4, 8), enc(rng, DOCUMENT, 6, 8), p)
