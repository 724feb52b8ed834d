"""P@N, PBT@N and PTB@N over ranked lists.

P@N    share of questions with an answer-bearing document in the top N.
PBT@N  share of questions where the reranker's top N holds an answer-bearing
       document that TF-IDF's top N lacks (higher is better).
PTB@N  the mirror image: an answer-bearing TF-IDF top-N document that the
       reranker dropped from its top N (lower is better).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .errors import CoverageError
from .text import AnswerMatcher


def _ids(entry) -> list[str]:
    return list(entry.doc_ids) if hasattr(entry, "doc_ids") else list(entry)


def _matcher(corpus) -> AnswerMatcher:
    if isinstance(corpus, AnswerMatcher):
        return corpus
    return AnswerMatcher({k: getattr(v, "text", v) for k, v in corpus.items()})


def _coverage(lists: Mapping, questions: Sequence) -> None:
    missing = [q.id for q in questions if q.id not in lists]
    if missing:
        raise CoverageError(missing)


def _answer_docs(top: list[str], question, matcher: AnswerMatcher) -> set[str]:
    return {d for d in top if matcher.contains(d, question.answers)}


def p_at_n(lists: Mapping, questions: Sequence, corpus, n: int) -> float:
    _coverage(lists, questions)
    if not questions:
        return 0.0
    m = _matcher(corpus)
    hits = sum(1 for q in questions if _answer_docs(_ids(lists[q.id])[:n], q, m))
    return hits / len(questions)


def pbt_at_n(reranked: Mapping, tfidf: Mapping, questions: Sequence, corpus, n: int) -> float:
    _coverage(reranked, questions)
    _coverage(tfidf, questions)
    if not questions:
        return 0.0
    m = _matcher(corpus)
    hits = 0
    for q in questions:
        ours = _answer_docs(_ids(reranked[q.id])[:n], q, m)
        if ours - set(_ids(tfidf[q.id])[:n]):
            hits += 1
    return hits / len(questions)


def ptb_at_n(reranked: Mapping, tfidf: Mapping, questions: Sequence, corpus, n: int) -> float:
    return pbt_at_n(tfidf, reranked, questions, corpus, n)


@dataclass
class MetricsReport:
    ns: list[int]
    question_count: int
    p: dict[int, float] = field(default_factory=dict)
    pbt: dict[int, float] = field(default_factory=dict)
    ptb: dict[int, float] = field(default_factory=dict)
    label: str = ""

    def to_json(self) -> dict:
        out = {"label": self.label, "question_count": self.question_count, "ns": list(self.ns)}
        for name, table in (("P", self.p), ("PBT", self.pbt), ("PTB", self.ptb)):
            out[name] = {str(k): v for k, v in table.items()}
        return out

    @classmethod
    def from_json(cls, data: dict) -> "MetricsReport":
        return cls(ns=[int(n) for n in data["ns"]], question_count=int(data["question_count"]),
                   p={int(k): float(v) for k, v in data["P"].items()},
                   pbt={int(k): float(v) for k, v in data["PBT"].items()},
                   ptb={int(k): float(v) for k, v in data["PTB"].items()},
                   label=data.get("label", ""))


def evaluate(reranked: Mapping, tfidf: Mapping, questions: Sequence, corpus, ns: Sequence[int],
             label: str = "") -> MetricsReport:
    m = _matcher(corpus)
    report = MetricsReport(ns=sorted(ns), question_count=len(questions), label=label)
    for n in report.ns:
        report.p[n] = p_at_n(reranked, questions, m, n)
        report.pbt[n] = pbt_at_n(reranked, tfidf, questions, m, n)
        report.ptb[n] = ptb_at_n(reranked, tfidf, questions, m, n)
    return report
