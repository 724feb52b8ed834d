"""Run configuration: defaults, file loading and the provenance hash."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import InvalidInputError

ARCHES = ("dc", "dc-linear", "concat")

# Fields that locate files rather than change results; excluded from the config hash.
PATH_FIELDS = ("corpus", "questions", "eval_questions", "cache", "checkpoint", "out_dir")


@dataclass
class RunConfig:
    # model
    d: int = 64
    n_heads: int = 4
    n_lower: int = 12
    k_layers: int = 1
    arch: str = "dc"
    max_q_len: int = 32
    max_d_len: int = 256
    # training
    lr: float = 4e-5
    batch_size: int = 32
    epochs: int = 100
    patience: int = 5
    seed: int = 0
    neg_ratio: int | None = 4
    min_freq: int = 2
    vocab_size: int = 20000
    # retrieval / evaluation
    pool_size: int = 80
    top_k: int = 10
    eval_ns: list[int] = field(default_factory=lambda: [1, 5, 10, 20])
    # paths
    corpus: str | None = None
    questions: str | None = None
    # Held-out questions for rerank/eval; the training questions are used when unset.
    eval_questions: str | None = None
    cache: str | None = None
    checkpoint: str | None = None
    out_dir: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        positive = ("d", "n_heads", "n_lower", "k_layers", "max_q_len", "max_d_len",
                    "batch_size", "epochs", "pool_size", "top_k", "min_freq", "vocab_size")
        for name in positive:
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise InvalidInputError(f"config field {name} must be a positive integer, got {value!r}")
        if self.d % self.n_heads:
            raise InvalidInputError(f"d={self.d} must be divisible by n_heads={self.n_heads}")
        if self.arch not in ARCHES:
            raise InvalidInputError(f"arch must be one of {ARCHES}, got {self.arch!r}")
        if self.max_q_len < 2 or self.max_d_len < 2:
            raise InvalidInputError("max lengths must leave room for CLS and SEP")
        if not (self.lr >= 0 and math.isfinite(self.lr)):
            raise InvalidInputError(f"lr must be finite and >= 0, got {self.lr}")
        if self.neg_ratio is not None and self.neg_ratio < 0:
            raise InvalidInputError("neg_ratio must be >= 0 or null (keep all negatives)")
        if self.patience < 0:
            raise InvalidInputError("patience must be >= 0")

    @property
    def joint_len(self) -> int:
        return self.max_q_len + self.max_d_len

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def model_fields(self) -> dict[str, Any]:
        return {k: v for k, v in self.to_dict().items() if k not in PATH_FIELDS}

    def config_hash(self) -> str:
        blob = json.dumps(self.model_fields(), sort_keys=True, separators=(",", ":"))
        return hashlib.blake2b(blob.encode(), digest_size=8).hexdigest()

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise InvalidInputError(f"unknown config field(s): {', '.join(unknown)}")
        return cls(**{k: _coerce(k, v) for k, v in data.items()})


BENCH_PROFILE = dict(d=64, n_heads=4, n_lower=12, k_layers=1, max_q_len=16, max_d_len=128, pool_size=80)


def _coerce(name: str, value: Any) -> Any:
    if not isinstance(value, str):
        return value
    if name == "eval_ns":
        return [int(x) for x in value.replace(",", " ").split()]
    if name == "neg_ratio":
        return None if value.lower() in ("none", "null", "inf", "all") else int(value)
    if name == "lr":
        return float(value)
    if name in ("arch",) or name in PATH_FIELDS:
        return value
    return int(value)


def load_config_file(path: str | Path) -> dict[str, Any]:
    """Read a JSON object or ``key=value`` lines (``#`` comments allowed)."""
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("{"):
        return json.loads(text)
    out: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidInputError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out
