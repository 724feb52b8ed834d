"""Hashed unigram+bigram TF-IDF first-stage retriever."""

from __future__ import annotations

import csv
import math
import zlib
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp

from .errors import DuplicateKeyError, InvalidInputError
from .text import answer_tokens

N_BUCKETS = 2 ** 24


def ngrams(text: str) -> list[str]:
    toks = answer_tokens(text)
    return toks + [f"{a} {b}" for a, b in zip(toks, toks[1:])]


def bucket(term: str) -> int:
    return zlib.crc32(term.encode("utf-8")) % N_BUCKETS


def idf_weight(n_docs: int, df: np.ndarray) -> np.ndarray:
    return np.maximum(np.log1p((n_docs - df + 0.5) / (df + 0.5)), 0.0)


def _hashed_counts(text: str) -> Counter:
    return Counter(bucket(t) for t in ngrams(text))


@dataclass
class RankedList:
    question_id: str
    ranked: list[tuple[str, float]]
    source: str = "tfidf"

    @property
    def doc_ids(self) -> list[str]:
        return [d for d, _ in self.ranked]


class TfidfIndex:
    """Cosine similarity of log-tf x idf vectors, rows L2-normalised."""

    def __init__(self, doc_ids: list[str], matrix: sp.csr_matrix, idf: dict[int, float]):
        # ``idf`` is keyed by hash bucket, in matrix column order.
        self.doc_ids = doc_ids
        self.matrix = matrix
        self.idf = idf
        self._col = {b: j for j, b in enumerate(idf)}

    @property
    def n_docs(self) -> int:
        return len(self.doc_ids)

    @classmethod
    def build(cls, corpus: Mapping[str, str] | Iterable[tuple[str, str]]) -> "TfidfIndex":
        items = list(corpus.items()) if isinstance(corpus, Mapping) else list(corpus)
        if not items:
            raise InvalidInputError("cannot index an empty corpus")
        seen: set[str] = set()
        dupes = []
        for doc_id, _ in items:
            if doc_id in seen:
                dupes.append(doc_id)
            seen.add(doc_id)
        if dupes:
            raise DuplicateKeyError(sorted(set(dupes)))
        counts = [_hashed_counts(text) for _, text in items]
        vocab = sorted({b for c in counts for b in c})
        col = {b: j for j, b in enumerate(vocab)}
        df = np.zeros(len(vocab))
        for c in counts:
            for b in c:
                df[col[b]] += 1
        idf_arr = idf_weight(len(items), df)
        rows, cols, vals = [], [], []
        for i, c in enumerate(counts):
            for b in sorted(c):
                j = col[b]
                w = math.log1p(c[b]) * idf_arr[j]
                if w > 0:
                    rows.append(i)
                    cols.append(j)
                    vals.append(w)
        matrix = sp.csr_matrix((vals, (rows, cols)), shape=(len(items), len(vocab)), dtype=np.float64)
        norms = np.sqrt(np.asarray(matrix.multiply(matrix).sum(axis=1)).ravel())
        norms[norms == 0] = 1.0
        matrix = sp.csr_matrix(sp.diags(1.0 / norms) @ matrix)
        return cls([d for d, _ in items], matrix, {b: float(idf_arr[col[b]]) for b in vocab})

    def query_vector(self, text: str) -> np.ndarray:
        q = np.zeros(self.matrix.shape[1])
        for b, n in _hashed_counts(text).items():
            j = self._col.get(b)
            if j is not None:
                q[j] = math.log1p(n) * self.idf[b]
        norm = np.linalg.norm(q)
        return q / norm if norm > 0 else q

    def scores(self, text: str) -> np.ndarray:
        return self.matrix @ self.query_vector(text)

    def retrieve(self, text: str, n: int, question_id: str = "") -> RankedList:
        if n < 1:
            raise InvalidInputError("N must be >= 1")
        s = self.scores(text)
        hits = np.flatnonzero(s > 0)
        order = sorted(hits, key=lambda i: (-s[i], self.doc_ids[i]))[:n]
        return RankedList(question_id, [(self.doc_ids[i], float(s[i])) for i in order], "tfidf")

    def save(self, path: str | Path) -> None:
        buckets = np.array(list(self.idf), dtype=np.int64)
        np.savez(path, data=self.matrix.data, indices=self.matrix.indices, indptr=self.matrix.indptr,
                 shape=np.array(self.matrix.shape), buckets=buckets,
                 idf=np.array([self.idf[int(b)] for b in buckets]),
                 doc_ids=np.array(self.doc_ids, dtype=object))

    @classmethod
    def load(cls, path: str | Path) -> "TfidfIndex":
        z = np.load(path, allow_pickle=True)
        matrix = sp.csr_matrix((z["data"], z["indices"], z["indptr"]), shape=tuple(z["shape"]))
        buckets = [int(b) for b in z["buckets"]]
        return cls([str(d) for d in z["doc_ids"]], matrix, dict(zip(buckets, map(float, z["idf"]))))


def retrieve(index: TfidfIndex, question: str, n: int, question_id: str = "") -> RankedList:
    return index.retrieve(question, n, question_id)


def write_ranked_tsv(path: str | Path, lists: Iterable[RankedList]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["question_id", "rank", "doc_id", "score"])
        for rl in lists:
            for rank, (doc_id, score) in enumerate(rl.ranked, 1):
                w.writerow([rl.question_id, rank, doc_id, repr(float(score))])


def read_ranked_tsv(path: str | Path, source: str = "tfidf") -> dict[str, RankedList]:
    out: dict[str, RankedList] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh, delimiter="\t"))
    rows.sort(key=lambda r: (r["question_id"], int(r["rank"])))
    for r in rows:
        out.setdefault(r["question_id"], RankedList(r["question_id"], [], source)).ranked.append(
            (r["doc_id"], float(r["score"])))
    return out
