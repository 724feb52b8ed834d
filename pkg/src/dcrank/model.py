"""Full parameter set, the model hash, checkpoint I/O and the batched training forward."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cache import read_checkpoint, write_checkpoint
from .classifier import ClassifierParams, classifier_logits, init_classifier
from .config import PATH_FIELDS, RunConfig
from .encoder import EncoderParams, encoder_forward, init_encoder, pack_pair
from .errors import FormatError
from .interaction import (InteractionParams, LinearInteractionParams, init_interaction,
                          init_linear_interaction, interaction_forward, linear_forward)
from .layers import OpCounters, ParamSet
from .tensor import Tensor
from .text import Vocab


@dataclass
class ModelParams(ParamSet):
    question: EncoderParams
    document: EncoderParams
    concat: EncoderParams
    interaction: InteractionParams
    linear: LinearInteractionParams
    classifier: ClassifierParams

    def trainable_for(self, arch: str) -> list[tuple[str, Tensor]]:
        groups = {"dc": ("question", "document", "interaction", "classifier"),
                  "dc-linear": ("question", "document", "linear", "classifier"),
                  "concat": ("concat", "classifier")}[arch]
        return [(n, t) for n, t in self.named_parameters() if n.split(".", 1)[0] in groups]


def init_model_params(config: RunConfig, vocab_size: int, seed: int | None = None) -> ModelParams:
    c = config
    rng = np.random.default_rng(c.seed if seed is None else seed)
    return ModelParams(
        question=init_encoder(rng, vocab_size, c.max_q_len, c.d, c.n_heads, c.n_lower),
        document=init_encoder(rng, vocab_size, c.max_d_len, c.d, c.n_heads, c.n_lower),
        concat=init_encoder(rng, vocab_size, c.joint_len, c.d, c.n_heads, c.n_lower, with_types=True),
        interaction=init_interaction(rng, c.joint_len, c.d, c.n_heads, c.k_layers),
        linear=init_linear_interaction(rng, c.d),
        classifier=init_classifier(rng, c.d),
    )


def compute_model_hash(params: ModelParams, arch: str) -> int:
    """64-bit digest over the architecture tag and every parameter's name, shape and bytes."""
    h = hashlib.blake2b(digest_size=8)
    h.update(arch.encode())
    for name, t in params.named_parameters():
        h.update(name.encode())
        h.update(repr(t.shape).encode())
        h.update(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    return int.from_bytes(h.digest(), "little")


@dataclass
class Model:
    config: RunConfig
    vocab: Vocab
    params: ModelParams
    loss_log: list[float] = field(default_factory=list)
    _hash: int | None = field(default=None, repr=False)

    @classmethod
    def create(cls, config: RunConfig, vocab: Vocab) -> "Model":
        return cls(config, vocab, init_model_params(config, len(vocab)))

    @property
    def model_hash(self) -> int:
        if self._hash is None:
            self._hash = compute_model_hash(self.params, self.config.arch)
        return self._hash

    def invalidate_hash(self) -> None:
        self._hash = None

    # -- batched training forward ------------------------------------------
    def pair_logits(self, q_ids: np.ndarray, q_len: np.ndarray, d_ids: np.ndarray, d_len: np.ndarray,
                    arch: str | None = None, counters: OpCounters | None = None) -> Tensor:
        """Logits for a batch of (question, document) token id rows."""
        arch = arch or self.config.arch
        p = self.params
        q_mask = np.arange(q_ids.shape[-1])[None, :] < q_len[:, None]
        d_mask = np.arange(d_ids.shape[-1])[None, :] < d_len[:, None]
        if arch == "concat":
            ids, types, mask = pack_pair(q_ids, q_len, d_ids, d_len, self.config.joint_len)
            x = encoder_forward(p.concat, ids, mask, counters, types)
            rows = np.arange(len(q_len))
            return classifier_logits(p.classifier, x[rows, 0], x[rows, q_len])
        q_vals = encoder_forward(p.question, q_ids, q_mask, counters)
        d_vals = encoder_forward(p.document, d_ids, d_mask, counters)
        if arch == "dc":
            o_q, o_d = interaction_forward(p.interaction, q_vals, q_mask, d_vals, d_mask, counters)
        else:
            o_q, o_d = linear_forward(p.linear, q_vals[:, 0], d_vals[:, 0], counters)
        return classifier_logits(p.classifier, o_q, o_d)

    # -- checkpoints ---------------------------------------------------------
    def save(self, path: str | Path, extra: dict | None = None) -> None:
        meta = {
            "config": self.config.model_fields(),
            "config_hash": self.config.config_hash(),
            "model_hash": f"{self.model_hash:016x}",
            "vocab": self.vocab.tokens,
            "loss_log": self.loss_log,
        }
        if extra:
            meta.update(extra)
        write_checkpoint(path, [(n, t.data) for n, t in self.params.named_parameters()], meta)

    @classmethod
    def load(cls, path: str | Path, config: RunConfig | None = None) -> "Model":
        arrays, meta = read_checkpoint(path)
        saved = RunConfig.from_dict(meta["config"])
        if config is not None:
            saved = saved.replace(**{k: getattr(config, k) for k in PATH_FIELDS})
        vocab = Vocab(meta["vocab"])
        model = cls(saved, vocab, init_model_params(saved, len(vocab)), list(meta.get("loss_log", [])))
        named = dict(model.params.named_parameters())
        if set(named) != set(arrays):
            raise FormatError("checkpoint tensors do not match the configured architecture")
        for name, t in named.items():
            if t.shape != arrays[name].shape:
                raise FormatError(f"tensor {name} has shape {arrays[name].shape}, expected {t.shape}")
            t.data = arrays[name]
        if f"{model.model_hash:016x}" != meta["model_hash"]:
            raise FormatError("checkpoint model hash does not match its tensors")
        return model
