"""Seeded generator for a desk-scale QA corpus with planted answer spans.

Every entity gets one question about one relation. Its documents are:

* one gold paragraph stating the answer with wording that barely overlaps
  the question (TF-IDF finds it only through the entity name),
* several keyword-stuffed paragraphs that repeat the question's words but
  never state an answer (TF-IDF loves these),
* one paragraph per other relation, each stating a different-type fact.

A term-matching retriever therefore often buries the gold paragraph below
the stuffed ones, while a learned reranker can tell them apart.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Document, Question

_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "gr", "kr", "st", "tr"]
_VOWELS = ["a", "e", "i", "o", "u", "ai", "ou"]
_CODAS = ["", "n", "r", "s", "l", "th", "k", "x"]


@dataclass(frozen=True)
class Relation:
    name: str
    questions: tuple[str, ...]
    gold: tuple[str, ...]
    stuffed: tuple[str, ...]
    suffix: str


RELATIONS = (
    Relation(
        "capital",
        ("which city is the capital of {e} ?", "what is the capital city of {e} ?"),
        ("{e} is governed from {a} , where the council sits .",
         "the council of {e} sits in {a} every spring ."),
        ("the capital city of {e} is a question which many ask .",
         "which city is the capital of {e} ? the capital question of {e} is debated .",
         "{e} capital city records : which city ? the capital of {e} is unclear ."),
        "ton",
    ),
    Relation(
        "river",
        ("what river flows through {e} ?", "which river runs through {e} ?"),
        ("the {a} waters cross {e} .",
         "boats on the {a} carry grain across {e} ."),
        ("a river flows through {e} , but what river flows there is rarely written .",
         "which river runs through {e} ? the river through {e} flows past old farms .",
         "{e} river notes : the river flows , the river runs , through {e} ."),
        "wa",
    ),
    Relation(
        "founder",
        ("who founded {e} ?", "who was the founder of {e} ?"),
        ("{e} was established by {a} after a long war .",
         "the first settlers of {e} followed {a} into the valley ."),
        ("the founder of {e} is a figure who founded many legends .",
         "who founded {e} ? the founder of {e} remains a mystery to who asks .",
         "{e} founder stories : who was the founder ? who founded {e} ?"),
        "ric",
    ),
    Relation(
        "currency",
        ("what currency is used in {e} ?", "which currency do people use in {e} ?"),
        ("traders in {e} pay with the {a} at every market .",
         "coins called the {a} change hands across {e} ."),
        ("the currency used in {e} is a topic ; what currency is used varies .",
         "which currency do people use in {e} ? currency use in {e} is studied .",
         "{e} currency notes : what currency is used in {e} ? people use currency ."),
        "mark",
    ),
)

_FILLER = (
    "the weather there was mild for most of the year .",
    "local markets open early and close before dusk .",
    "old stone bridges cross the smaller streams .",
    "travellers often rest at the inns along the road .",
    "the hills to the east are covered in pine forest .",
    "farmers grow barley , oats and a little rye .",
    "festivals are held when the harvest is done .",
    "the roads are muddy after the autumn rains .",
)


def _names(rng: np.random.Generator, count: int, suffix: str = "", taken: set[str] | None = None) -> list[str]:
    taken = set() if taken is None else taken
    out: list[str] = []
    while len(out) < count:
        syll = rng.integers(2, 4)
        word = "".join(_ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))]
                       + _CODAS[rng.integers(len(_CODAS))] for _ in range(syll)) + suffix
        if word not in taken:
            taken.add(word)
            out.append(word)
    return out


@dataclass
class SyntheticDataset:
    corpus: dict[str, Document]
    train: list[Question]
    dev: list[Question]

    @property
    def questions(self) -> list[Question]:
        return self.train + self.dev


def generate(n_entities: int = 320, dev_fraction: float = 0.25, stuffed_range: tuple[int, int] = (4, 14),
             answers_per_relation: int = 60, n_filler_docs: int = 200, seed: int = 13) -> SyntheticDataset:
    rng = np.random.default_rng(seed)
    taken: set[str] = set()
    entities = _names(rng, n_entities, taken=taken)
    pools = {r.name: _names(rng, answers_per_relation, r.suffix, taken) for r in RELATIONS}

    def filler(k: int) -> str:
        return " ".join(_FILLER[i] for i in rng.choice(len(_FILLER), size=k, replace=False))

    docs: list[Document] = []
    questions: list[Question] = []
    for ei, ent in enumerate(entities):
        rel = RELATIONS[ei % len(RELATIONS)]
        answers = {r.name: pools[r.name][rng.integers(answers_per_relation)] for r in RELATIONS}
        qtext = rel.questions[rng.integers(len(rel.questions))].format(e=ent)
        questions.append(Question(f"q{ei:04d}", qtext, (answers[rel.name],)))
        for r in RELATIONS:
            sentence = r.gold[rng.integers(len(r.gold))].format(e=ent, a=answers[r.name])
            body = sentence if rng.random() < 0.7 else f"{sentence} {filler(1)}"
            kind = "gold" if r is rel else f"fact-{r.name}"
            docs.append(Document(f"{ent}-{kind}", ent, body))
        for si in range(int(rng.integers(stuffed_range[0], stuffed_range[1] + 1))):
            sentence = rel.stuffed[rng.integers(len(rel.stuffed))].format(e=ent)
            docs.append(Document(f"{ent}-stuffed-{si:02d}", ent, f"{sentence} {filler(int(rng.integers(1, 3)))}"))
    for i in range(n_filler_docs):
        docs.append(Document(f"filler-{i:04d}", "notes", filler(3)))

    order = rng.permutation(len(docs))
    corpus = {docs[i].id: docs[i] for i in order}
    q_order = rng.permutation(len(questions))
    n_dev = int(round(dev_fraction * len(questions)))
    shuffled = [questions[i] for i in q_order]
    dev = sorted(shuffled[:n_dev], key=lambda q: q.id)
    train = sorted(shuffled[n_dev:], key=lambda q: q.id)
    return SyntheticDataset(corpus, train, dev)
