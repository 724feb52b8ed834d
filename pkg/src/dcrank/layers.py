"""Transformer building blocks, operation counters and the Adam optimizer."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Iterator, Mapping

import numpy as np

from .errors import DimensionError, InvalidInputError, NonFiniteGradientError
from .tensor import Tensor, gelu, layer_norm, softmax

INIT_STD = 0.02


@dataclass
class OpCounters:
    """Exact work counts: query-key score pairs and projection/FF multiply-accumulates."""

    attention_pairs: int = 0
    macs: int = 0

    def __add__(self, other: "OpCounters") -> "OpCounters":
        return OpCounters(self.attention_pairs + other.attention_pairs, self.macs + other.macs)

    def merge(self, other: "OpCounters") -> None:
        self.attention_pairs += other.attention_pairs
        self.macs += other.macs

    def to_dict(self) -> dict[str, int]:
        return {"attention_pairs": self.attention_pairs, "macs": self.macs}


class ParamSet:
    """Mixin for dataclasses whose fields are Tensors, nested ParamSets or lists of them."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, Tensor):
                yield prefix + f.name, value
            elif isinstance(value, ParamSet):
                yield from value.named_parameters(f"{prefix}{f.name}.")
            elif isinstance(value, list):
                for i, item in enumerate(value):
                    yield from item.named_parameters(f"{prefix}{f.name}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def zero_grad(self) -> None:
        for t in self.parameters():
            t.grad = None

    def cast_(self, dtype) -> None:
        for t in self.parameters():
            t.data = t.data.astype(dtype)


def normal_param(rng: np.random.Generator, *shape: int) -> Tensor:
    return Tensor(rng.normal(0.0, INIT_STD, size=shape).astype(np.float32), requires_grad=True)


def zeros_param(*shape: int) -> Tensor:
    return Tensor(np.zeros(shape, dtype=np.float32), requires_grad=True)


def ones_param(*shape: int) -> Tensor:
    return Tensor(np.ones(shape, dtype=np.float32), requires_grad=True)


@dataclass
class BlockParams(ParamSet):
    """One post-norm Transformer block. Heads share the d x d projections."""

    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_o: Tensor
    w_ff1: Tensor
    b_ff1: Tensor
    w_ff2: Tensor
    b_ff2: Tensor
    ln1_gain: Tensor
    ln1_bias: Tensor
    ln2_gain: Tensor
    ln2_bias: Tensor
    n_heads: int = field(default=1, metadata={"static": True})

    @property
    def d_model(self) -> int:
        return self.w_q.shape[0]


def init_block(rng: np.random.Generator, d: int, n_heads: int) -> BlockParams:
    if d % n_heads:
        raise InvalidInputError(f"d={d} is not divisible by n_heads={n_heads}")
    return BlockParams(
        w_q=normal_param(rng, d, d),
        w_k=normal_param(rng, d, d),
        w_v=normal_param(rng, d, d),
        w_o=normal_param(rng, d, d),
        w_ff1=normal_param(rng, d, 4 * d),
        b_ff1=zeros_param(4 * d),
        w_ff2=normal_param(rng, 4 * d, d),
        b_ff2=zeros_param(d),
        ln1_gain=ones_param(d),
        ln1_bias=zeros_param(d),
        ln2_gain=ones_param(d),
        ln2_bias=zeros_param(d),
        n_heads=n_heads,
    )


def self_attention(x: Tensor, mask: np.ndarray, p: BlockParams,
                   counters: OpCounters | None = None) -> Tensor:
    """Multi-head self-attention over ``x`` of shape (..., L, d).

    ``mask`` has shape (..., L) and is True at real tokens. Padding keys get
    zero attention weight, so outputs at real positions do not depend on what
    sits in padded rows.
    """
    mask = np.asarray(mask, dtype=bool)
    *lead, length, d = x.shape
    if mask.shape != tuple(lead) + (length,):
        raise DimensionError(f"mask shape {mask.shape} does not match input {x.shape}")
    if d != p.d_model:
        raise DimensionError(f"input width {d} does not match block width {p.d_model}")
    lengths = mask.sum(axis=-1)
    if np.any(lengths == 0):
        raise InvalidInputError("self-attention over an all-padding sequence")
    h = p.n_heads
    dh = d // h

    def heads(t: Tensor) -> Tensor:
        return t.reshape(*lead, length, h, dh).swapaxes(-3, -2)

    q = heads(x @ p.w_q)
    k = heads(x @ p.w_k)
    v = heads(x @ p.w_v)
    scores = (q @ k.mT) * (1.0 / np.sqrt(dh))
    att = softmax(scores, mask[..., None, None, :])
    ctx = (att @ v).swapaxes(-3, -2).reshape(*lead, length, d)
    out = ctx @ p.w_o
    if counters is not None:
        counters.attention_pairs += int(h * np.sum(lengths.astype(np.int64) ** 2))
        counters.macs += 4 * d * d * int(np.prod(lead, dtype=np.int64)) * length
    return out


def transformer_block(x: Tensor, mask: np.ndarray, p: BlockParams,
                      counters: OpCounters | None = None) -> Tensor:
    """Post-norm block: LN(x + attn(x)), then LN(h + FF(h)) with a GELU feed-forward."""
    hidden = layer_norm(x + self_attention(x, mask, p, counters), p.ln1_gain, p.ln1_bias)
    ff = gelu(hidden @ p.w_ff1 + p.b_ff1) @ p.w_ff2 + p.b_ff2
    if counters is not None:
        d = x.shape[-1]
        counters.macs += 8 * d * d * int(np.prod(x.shape[:-1], dtype=np.int64))
    return layer_norm(hidden + ff, p.ln2_gain, p.ln2_bias)


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One bias-corrected Adam update, in place.

    The whole step is refused (nothing is modified) if any gradient holds a
    NaN or Inf.
    """
    bad = [name for name, g in grads.items() if not np.all(np.isfinite(g))]
    if bad:
        raise NonFiniteGradientError(bad)
    state.t += 1
    t = state.t
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, g in grads.items():
        param = params[name]
        dtype = param.data.dtype
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(param.data)
            v = np.zeros_like(param.data)
        m = (beta1 * m + (1 - beta1) * g).astype(dtype)
        v = (beta2 * v + (1 - beta2) * g * g).astype(dtype)
        state.m[name] = m
        state.v[name] = v
        m_hat = m / c1
        v_hat = v / c2
        param.data = (param.data - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(dtype)
