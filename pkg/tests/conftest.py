from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from dcrank.config import RunConfig  # noqa: E402
from dcrank.data import Document, Question  # noqa: E402
from dcrank.model import Model  # noqa: E402
from dcrank.text import Vocab  # noqa: E402

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

REPO = Path(__file__).resolve().parents[1]

# -- acceptance verdicts ---------------------------------------------------------
# Each test marked ``acceptance(n, title)`` contributes one PASS/FAIL line, with any
# ``record_property("detail", ...)`` text, to a section at the end of the run.

_VERDICTS: dict[tuple, str] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or not (rep.when == "call" or rep.failed):
        return
    number, title = mark.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    verdict = "PASS" if rep.passed else "FAIL"
    line = f"criterion {number} {verdict}  {title}"
    _VERDICTS[(number, item.nodeid)] = line + (f"  ({detail})" if detail else "")


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[key])


@pytest.fixture
def tiny_config() -> RunConfig:
    return RunConfig(d=8, n_heads=2, n_lower=1, k_layers=1, max_q_len=6, max_d_len=10,
                     lr=1e-2, batch_size=4, epochs=3, seed=0)


@pytest.fixture
def tiny_vocab() -> Vocab:
    words = "what is the capital of river currency paris france rome italy city a b c ?".split()
    return Vocab(["[PAD]", "[UNK]", "[CLS]", "[SEP]"] + words)


@pytest.fixture
def tiny_model(tiny_config, tiny_vocab) -> Model:
    return Model.create(tiny_config, tiny_vocab)


@pytest.fixture
def toy_corpus() -> dict[str, Document]:
    docs = [
        Document("d1", "Paris", "paris is the capital of france ."),
        Document("d2", "Rome", "rome is the capital of italy ."),
        Document("d3", "Seine", "the river seine flows through paris ."),
        Document("d4", "Lira", "the lira was the currency of italy ."),
        Document("d5", "Misc", "a city by a river ."),
    ]
    return {d.id: d for d in docs}


@pytest.fixture
def toy_questions() -> list[Question]:
    return [Question("q1", "what is the capital of france ?", ("paris",)),
            Question("q2", "what is the capital of italy ?", ("rome",)),
            Question("q3", "what was the currency of italy ?", ("lira",))]


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
