from __future__ import annotations

import numpy as np
import pytest

from dcrank.classifier import TrainingExample
from dcrank.config import RunConfig
from dcrank.data import Document, Question
from dcrank.errors import FormatError, InvalidInputError, TrainingDiverged
from dcrank.model import Model
from dcrank.tensor import bce_with_logits, no_grad
from dcrank.training import train
from gradsuite import e2e_error

NAMES = ["alba", "brim", "cort", "dune"]
CAPITALS = ["xeno", "yarl", "zeph", "wick"]


@pytest.fixture(scope="module")
def separable():
    """Four questions, each with one answer-bearing and one distractor document: 8 examples."""
    corpus, questions, examples = {}, [], []
    for n, c in zip(NAMES, CAPITALS):
        corpus[f"{n}-gold"] = Document(f"{n}-gold", n, f"{c} is the capital of {n} .")
        corpus[f"{n}-other"] = Document(f"{n}-other", n, f"{n} has many hills and old roads .")
        questions.append(Question(n, f"what is the capital of {n} ?", (c,)))
        examples += [TrainingExample(n, f"{n}-gold", 1), TrainingExample(n, f"{n}-other", 0)]
    return corpus, questions, examples


OVERFIT = RunConfig(d=32, n_heads=4, n_lower=2, k_layers=1, max_q_len=10, max_d_len=12, lr=1e-3,
                    batch_size=8, epochs=200, patience=200, min_freq=1, seed=0)


@pytest.mark.parametrize("arch", ["dc", "dc-linear", "concat"])
def test_overfits_separable_examples(separable, arch):
    # Pilot (seed 0): loss first drops below 0.05 near epoch 95 for every arch.
    model = train(OVERFIT.replace(arch=arch), *_args(separable))
    assert len(model.loss_log) <= 200
    assert model.loss_log[-1] < 0.05


def _args(separable):
    corpus, questions, examples = separable
    return examples, corpus, questions


def test_same_seed_same_loss_log_and_parameters(separable):
    cfg = OVERFIT.replace(epochs=4)
    a, b = train(cfg, *_args(separable)), train(cfg, *_args(separable))
    assert a.loss_log == b.loss_log
    assert a.model_hash == b.model_hash
    c = train(cfg.replace(seed=1), *_args(separable))
    assert c.loss_log != a.loss_log


def test_zero_learning_rate_changes_nothing(separable):
    cfg = OVERFIT.replace(epochs=3, lr=0.0)
    corpus, questions, examples = separable
    ref = Model.create(cfg, _vocab(cfg, separable))
    trained = train(cfg, examples, corpus, questions, model=Model.create(cfg, ref.vocab))
    assert trained.model_hash == ref.model_hash


def _vocab(cfg, separable):
    from dcrank.training import build_vocab
    corpus, questions, _ = separable
    return build_vocab(cfg, corpus, questions)


def test_patience_stops_early(separable):
    model = train(OVERFIT.replace(epochs=50, lr=0.0, patience=2), *_args(separable))
    assert len(model.loss_log) == 3  # best at epoch 0, then two stale epochs


def test_divergence_raises_with_last_good_snapshot(separable):
    corpus, questions, examples = separable
    cfg = OVERFIT.replace(epochs=2)
    model = Model.create(cfg, _vocab(cfg, separable))
    model.params.classifier.b2.data[:] = np.nan
    with pytest.raises(TrainingDiverged) as err:
        train(cfg, examples, corpus, questions, model=model)
    assert err.value.epoch == 0 and err.value.step == 0
    assert set(err.value.last_good) == {n for n, _ in model.params.named_parameters()}


def test_empty_examples_rejected(separable):
    corpus, questions, _ = separable
    with pytest.raises(InvalidInputError):
        train(OVERFIT, [], corpus, questions)


@pytest.mark.parametrize("arch", ["dc", "dc-linear", "concat"])
def test_end_to_end_gradient_check(arch):
    worst, nonzero = e2e_error(arch, seed=3)
    assert worst < 1e-2
    assert nonzero >= 40  # the sampled parameters actually influence the loss


def test_checkpoint_round_trip(tmp_path, separable):
    cfg = OVERFIT.replace(epochs=2)
    model = train(cfg, *_args(separable))
    path = tmp_path / "m.bin"
    model.save(path)
    loaded = Model.load(path, cfg.replace(out_dir="elsewhere"))
    assert loaded.model_hash == model.model_hash and loaded.loss_log == model.loss_log
    assert loaded.config.out_dir == "elsewhere" and loaded.config.config_hash() == cfg.config_hash()
    for (n, a), (_, b) in zip(model.params.named_parameters(), loaded.params.named_parameters()):
        assert a.data.tobytes() == b.data.tobytes(), n
    model.save(tmp_path / "again.bin")
    assert (tmp_path / "again.bin").read_bytes() == path.read_bytes()


def test_checkpoint_tamper_detected(tmp_path, tiny_model):
    path = tmp_path / "m.bin"
    tiny_model.save(path)
    raw = bytearray(path.read_bytes())
    raw[-1] ^= 0x40
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError, match="hash"):
        Model.load(path)
    path.write_bytes(b"XXXX" + bytes(raw[4:]))
    with pytest.raises(FormatError, match="magic"):
        Model.load(path)
    path.write_bytes(bytes(raw[:-3]))
    with pytest.raises(FormatError):
        Model.load(path)
