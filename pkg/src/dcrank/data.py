"""Corpus/question records and their JSON-lines readers and writers."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable

from .errors import DuplicateKeyError, SchemaError


@dataclass(frozen=True)
class Document:
    id: str
    title: str
    text: str

    @property
    def content(self) -> str:
        """Title and paragraph, the text that gets indexed and encoded."""
        return f"{self.title} {self.text}".strip()


@dataclass(frozen=True)
class Question:
    id: str
    question: str
    answers: tuple[str, ...] = field(default_factory=tuple)


_DOC_FIELDS = {"id": str, "title": str, "text": str}
_QUESTION_FIELDS = {"id": str, "question": str, "answers": list}


def _read_records(path: str | Path, fields: dict[str, type]) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON: {exc.msg}", line=lineno) from None
            if not isinstance(obj, dict):
                raise SchemaError("record is not a JSON object", line=lineno)
            for name, kind in fields.items():
                if name not in obj:
                    raise SchemaError(f"missing field '{name}'", line=lineno, field=name)
                if not isinstance(obj[name], kind):
                    raise SchemaError(f"field '{name}' must be {kind.__name__}", line=lineno, field=name)
            obj["_line"] = lineno
            records.append(obj)
    if not records:
        raise SchemaError(f"no records in {path}")
    return records


def _check_unique(records: list[dict]) -> None:
    seen: dict[str, int] = {}
    for rec in records:
        if rec["id"] in seen:
            raise DuplicateKeyError([rec["id"]])
        seen[rec["id"]] = rec["_line"]


def read_corpus(path: str | Path) -> dict[str, Document]:
    records = _read_records(path, _DOC_FIELDS)
    _check_unique(records)
    return {r["id"]: Document(r["id"], r["title"], r["text"]) for r in records}


def read_questions(path: str | Path) -> list[Question]:
    records = _read_records(path, _QUESTION_FIELDS)
    _check_unique(records)
    out = []
    for r in records:
        if not all(isinstance(a, str) for a in r["answers"]):
            raise SchemaError("answers must be a list of strings", line=r["_line"], field="answers")
        out.append(Question(r["id"], r["question"], tuple(r["answers"])))
    return out


def write_jsonl(path: str | Path, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def write_corpus(path: str | Path, docs: Iterable[Document]) -> None:
    write_jsonl(path, (asdict(d) for d in docs))


def write_questions(path: str | Path, questions: Iterable[Question]) -> None:
    write_jsonl(path, ({"id": q.id, "question": q.question, "answers": list(q.answers)} for q in questions))
