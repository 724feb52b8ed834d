"""Finite-difference gradient checks shared by the unit tests and the acceptance run.

Every check returns the worst relative error it saw instead of asserting, so
callers choose the tolerance.
"""

from __future__ import annotations

import numpy as np

from dcrank.bench import synthetic_vocab
from dcrank.config import RunConfig
from dcrank.layers import init_block, transformer_block
from dcrank.model import Model
from dcrank.tensor import Tensor, bce_with_logits, concat, embedding, gelu, layer_norm, matmul, no_grad, softmax
from oracles import central_diff, rel_err


def t64(a, grad=True) -> Tensor:
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=grad)


def block64(seed: int, d: int = 8, h: int = 2, scale: float = 0.3):
    """A block with float64 weights large enough that every path matters."""
    rng = np.random.default_rng(seed)
    p = init_block(rng, d, h)
    p.cast_(np.float64)
    for name, t in p.named_parameters():
        if name.startswith("w_"):
            t.data = rng.normal(scale=scale, size=t.shape)
        elif name.startswith("b_") or name.endswith("bias"):
            t.data = rng.normal(scale=0.1, size=t.shape)
        else:
            t.data = 1 + rng.normal(scale=0.1, size=t.shape)
    return p


def op_error(build, inputs: list[Tensor], rng, n_probe: int = 6) -> float:
    """backward() against central differences on a random linear read-out of ``build``."""
    out = build(*inputs)
    r = rng.normal(size=out.shape)

    def loss() -> float:
        with no_grad():
            return float(np.sum(build(*inputs).data * r))

    for t in inputs:
        t.grad = None
    (build(*inputs) * Tensor(r)).sum().backward()
    worst = 0.0
    for t in inputs:
        if not t.requires_grad:
            continue
        flat = t.data.reshape(-1)
        for i in rng.choice(flat.size, size=min(n_probe, flat.size), replace=False):
            idx = np.unravel_index(i, t.shape)
            worst = max(worst, rel_err(float(t.grad[idx]), central_diff(loss, t.data, idx)))
    return worst


def op_suite(seed: int) -> dict[str, float]:
    """Worst error per tensor-core op family for one seed."""
    rng = np.random.default_rng(seed)
    out = {}
    out["matmul"] = op_error(matmul, [t64(rng.normal(size=(5, 7))), t64(rng.normal(size=(7, 3)))], rng)
    mask = rng.random(6) < 0.7
    mask[0] = True
    out["softmax"] = op_error(lambda x: softmax(x, mask), [t64(rng.normal(size=(3, 6)))], rng)
    out["layer_norm"] = op_error(layer_norm, [t64(rng.normal(size=(4, 8))), t64(rng.normal(size=8)),
                                              t64(rng.normal(size=8))], rng)
    x, y = t64(rng.normal(size=(3, 5))), t64(rng.normal(size=(3, 5)))
    out["elementwise"] = max(
        op_error(gelu, [x], rng),
        op_error(lambda a: a.tanh(), [x], rng),
        op_error(lambda a: (a * 0.3).exp(), [x], rng),
        op_error(lambda a, b: a * b - b + a / 2.0, [x, y], rng),
        op_error(lambda a: a.mean(axis=0, keepdims=True) + a.sum(axis=1).reshape(3, 1), [x], rng))
    a3, b3 = t64(rng.normal(size=(2, 3, 4))), t64(rng.normal(size=(2, 2, 4)))
    table = t64(rng.normal(size=(7, 4)))
    ids = rng.integers(0, 7, size=(2, 5))
    out["structural"] = max(
        op_error(lambda a, b: concat([a, b], axis=1), [a3, b3], rng),
        op_error(lambda a: a.swapaxes(0, 2).reshape(4, 6), [a3], rng),
        op_error(lambda a: a[:, 1] + a[:, 2], [a3], rng),
        op_error(lambda tb: embedding(tb, ids), [table], rng))
    z, lab = t64(rng.normal(scale=3, size=6)), rng.integers(0, 2, size=6)
    out["bce"] = op_error(lambda v: bce_with_logits(v, lab), [z], rng)

    p = block64(seed)
    xb = t64(rng.normal(size=(4, 8)))
    bmask = np.array([True, True, True, rng.random() < 0.5])
    params = [t for _, t in p.named_parameters()]
    out["transformer_block"] = op_error(lambda xx, *_: transformer_block(xx, bmask, p), [xb, *params], rng, 2)
    return out


def e2e_error(arch: str, seed: int, n_params: int = 50) -> tuple[float, int]:
    """Worst error over ``n_params`` sampled trainable scalars of the full pair loss, and how many had
    a nonzero analytic gradient."""
    cfg = RunConfig(d=8, n_heads=2, n_lower=1, k_layers=1, max_q_len=4, max_d_len=6, arch=arch, seed=seed)
    model = Model.create(cfg, synthetic_vocab(20))
    model.params.cast_(np.float64)
    rng = np.random.default_rng(1000 + seed)
    for _, t in model.params.named_parameters():
        if t.data.ndim == 2:
            t.data = t.data * 10  # away from the near-linear regime so every path contributes
    q_ids = rng.integers(4, 20, size=(3, 4))
    d_ids = rng.integers(4, 20, size=(3, 6))
    q_len, d_len = np.array([4, 3, 2]), np.array([6, 5, 4])
    labels = np.array([1, 0, 1])

    def loss_value() -> float:
        with no_grad():
            return float(bce_with_logits(model.pair_logits(q_ids, q_len, d_ids, d_len), labels).data)

    trainable = model.params.trainable_for(arch)
    for _, t in trainable:
        t.grad = None
    bce_with_logits(model.pair_logits(q_ids, q_len, d_ids, d_len), labels).backward()
    sizes = np.array([t.data.size for _, t in trainable])
    starts = np.concatenate([[0], np.cumsum(sizes)])
    worst, nonzero = 0.0, 0
    for flat in rng.choice(sizes.sum(), size=n_params, replace=False):
        k = int(np.searchsorted(starts, flat, side="right") - 1)
        _, t = trainable[k]
        idx = np.unravel_index(flat - starts[k], t.shape)
        analytic = 0.0 if t.grad is None else float(t.grad[idx])
        nonzero += analytic != 0.0
        worst = max(worst, rel_err(analytic, central_diff(loss_value, t.data, idx), floor=1e-6))
    return worst, nonzero
