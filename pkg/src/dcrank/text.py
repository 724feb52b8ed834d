"""Text normalisation, the word-level vocabulary and answer-span matching."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

from .errors import InvalidInputError

PAD, UNK, CLS, SEP = 0, 1, 2, 3
RESERVED = ("[PAD]", "[UNK]", "[CLS]", "[SEP]")

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)
_WORD_RE = re.compile(r"\w+", re.UNICODE)


def split_tokens(text: str) -> list[str]:
    """Lowercase and split on whitespace and punctuation boundaries; punctuation is kept."""
    return _TOKEN_RE.findall(text.lower())


def answer_tokens(text: str) -> list[str]:
    """Lowercase word tokens with punctuation stripped (answer-matching normalisation)."""
    return _WORD_RE.findall(text.lower())


def contains_span(haystack: list[str], needle: list[str]) -> bool:
    """True iff ``needle`` occurs as a contiguous token subsequence of ``haystack``."""
    n = len(needle)
    if n == 0 or n > len(haystack):
        return False
    first = needle[0]
    for i in range(len(haystack) - n + 1):
        if haystack[i] == first and haystack[i:i + n] == needle:
            return True
    return False


def has_answer(text: str, answers: Iterable[str]) -> bool:
    toks = answer_tokens(text)
    return any(contains_span(toks, answer_tokens(a)) for a in answers)


class AnswerMatcher:
    """Memoises normalised document tokens for repeated answer lookups."""

    def __init__(self, doc_texts: dict[str, str]):
        self._texts = doc_texts
        self._tokens: dict[str, list[str]] = {}

    def tokens(self, doc_id: str) -> list[str]:
        toks = self._tokens.get(doc_id)
        if toks is None:
            if doc_id not in self._texts:
                raise InvalidInputError(f"unknown doc id: {doc_id}")
            toks = answer_tokens(self._texts[doc_id])
            self._tokens[doc_id] = toks
        return toks

    def contains(self, doc_id: str, answers: Iterable[str]) -> bool:
        toks = self.tokens(doc_id)
        return any(contains_span(toks, answer_tokens(a)) for a in answers)


@dataclass
class Vocab:
    """Dense token -> id map; ids 0..3 are PAD, UNK, CLS, SEP."""

    tokens: list[str] = field(default_factory=lambda: list(RESERVED))

    def __post_init__(self):
        if tuple(self.tokens[:4]) != RESERVED:
            raise InvalidInputError("vocabulary must start with the reserved tokens")
        self._index = {t: i for i, t in enumerate(self.tokens)}
        if len(self._index) != len(self.tokens):
            raise InvalidInputError("vocabulary contains duplicate tokens")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def id(self, token: str) -> int:
        return self._index.get(token, UNK)

    def ids(self, tokens: Iterable[str]) -> list[int]:
        return [self._index.get(t, UNK) for t in tokens]

    @classmethod
    def build(cls, texts: Iterable[str], min_freq: int = 2, max_size: int = 20000) -> "Vocab":
        counts = Counter()
        for text in texts:
            counts.update(split_tokens(text))
        for tok in RESERVED:
            counts.pop(tok, None)
        kept = sorted((t for t, c in counts.items() if c >= min_freq), key=lambda t: (-counts[t], t))
        return cls(list(RESERVED) + kept[: max(0, max_size - len(RESERVED))])
