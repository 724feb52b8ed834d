"""Question-document interaction over independently produced encodings.

The question rows and document rows are stacked (question first), global
position and type embeddings are added, and K Transformer blocks let the two
segments attend to each other. The two CLS rows come out as the pair
representation. ``interact_linear`` is the ablation with no cross-token
attention at all.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import DOCUMENT, QUESTION, EncodingMatrix
from .errors import DimensionError, InvalidInputError
from .layers import (BlockParams, OpCounters, ParamSet, init_block, normal_param, transformer_block,
                     zeros_param)
from .tensor import Tensor, concat, no_grad


@dataclass
class GlobalEmbeddings(ParamSet):
    position: Tensor  # (Lq + Ld, d)
    type_q: Tensor  # (d,)
    type_d: Tensor  # (d,)


@dataclass
class InteractionParams(ParamSet):
    global_emb: GlobalEmbeddings
    blocks: list[BlockParams]


@dataclass
class LinearInteractionParams(ParamSet):
    w_q: Tensor
    b_q: Tensor
    w_d: Tensor
    b_d: Tensor


@dataclass
class PairOutput:
    o_cls: np.ndarray
    o_cls_doc: np.ndarray


def init_interaction(rng: np.random.Generator, joint_len: int, d: int, n_heads: int, k_layers: int) -> InteractionParams:
    if k_layers < 1:
        raise InvalidInputError("the Transformer interaction needs K >= 1")
    return InteractionParams(
        global_emb=GlobalEmbeddings(
            position=normal_param(rng, joint_len, d),
            type_q=normal_param(rng, d),
            type_d=normal_param(rng, d),
        ),
        blocks=[init_block(rng, d, n_heads) for _ in range(k_layers)],
    )


def init_linear_interaction(rng: np.random.Generator, d: int) -> LinearInteractionParams:
    return LinearInteractionParams(
        w_q=normal_param(rng, d, d), b_q=zeros_param(d),
        w_d=normal_param(rng, d, d), b_d=zeros_param(d),
    )


def interaction_inputs(params: InteractionParams, q_vals: Tensor, d_vals: Tensor) -> Tensor:
    """Stacked encodings plus global position and type embeddings (the block input)."""
    lq, ld = q_vals.shape[-2], d_vals.shape[-2]
    if lq + ld > params.global_emb.position.shape[0]:
        raise DimensionError(
            f"joint length {lq + ld} exceeds global position table {params.global_emb.position.shape[0]}")
    g = params.global_emb
    joint = concat([q_vals + g.type_q, d_vals + g.type_d], axis=-2)
    return joint + g.position[: lq + ld]


def interaction_forward(params: InteractionParams, q_vals: Tensor, q_mask: np.ndarray,
                        d_vals: Tensor, d_mask: np.ndarray,
                        counters: OpCounters | None = None) -> tuple[Tensor, Tensor]:
    lq = q_vals.shape[-2]
    x = interaction_inputs(params, q_vals, d_vals)
    mask = np.concatenate([q_mask, d_mask], axis=-1)
    for block in params.blocks:
        x = transformer_block(x, mask, block, counters)
    return x[..., 0, :], x[..., lq, :]


def _check_pair(q_enc: EncodingMatrix, d_enc: EncodingMatrix) -> None:
    if q_enc.role != QUESTION or d_enc.role != DOCUMENT:
        raise InvalidInputError(f"interaction expects (question, document), got ({q_enc.role}, {d_enc.role})")
    if q_enc.values.shape[-1] != d_enc.values.shape[-1]:
        raise DimensionError(
            f"encoding widths differ: {q_enc.values.shape} vs {d_enc.values.shape}")


def interact(q_enc: EncodingMatrix, d_enc: EncodingMatrix, params: InteractionParams,
             counters: OpCounters | None = None) -> PairOutput:
    _check_pair(q_enc, d_enc)
    with no_grad():
        o_q, o_d = interaction_forward(params, Tensor(q_enc.values), q_enc.mask,
                                       Tensor(d_enc.values), d_enc.mask, counters)
    return PairOutput(o_cls=o_q.data, o_cls_doc=o_d.data)


def linear_forward(params: LinearInteractionParams, q_cls: Tensor, d_cls: Tensor,
                   counters: OpCounters | None = None) -> tuple[Tensor, Tensor]:
    if q_cls.shape[-1] != params.w_q.shape[0] or d_cls.shape[-1] != params.w_d.shape[0]:
        raise DimensionError(
            f"CLS widths {q_cls.shape[-1]}/{d_cls.shape[-1]} do not match linear maps {params.w_q.shape}")
    if counters is not None:
        d = params.w_q.shape[0]
        rows = int(np.prod(q_cls.shape[:-1], dtype=np.int64))
        counters.macs += 2 * d * d * rows
    return q_cls @ params.w_q + params.b_q, d_cls @ params.w_d + params.b_d


def interact_linear(q_enc: EncodingMatrix, d_enc: EncodingMatrix, params: LinearInteractionParams,
                    counters: OpCounters | None = None) -> PairOutput:
    """Per-role affine map of the CLS rows; no cross attention."""
    _check_pair(q_enc, d_enc)
    with no_grad():
        o_q, o_d = linear_forward(params, Tensor(q_enc.values[None, 0]), Tensor(d_enc.values[None, 0]), counters)
    return PairOutput(o_cls=o_q.data[0], o_cls_doc=o_d.data[0])
