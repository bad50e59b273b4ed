"""Shared domain types and JSONL serialization for all pipeline stages.

All span offsets are byte offsets into the UTF-8 encoding of the passage,
not character offsets. Loaders validate that offsets fall on character
boundaries and that the addressed bytes decode to the stored answer text.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional

_LANG_RE = re.compile(r"^[a-z]{2}$")


class RecordError(ValueError):
    """Raised for malformed records, invariant violations, or bad files."""


def validate_lang(code: str) -> str:
    if not _LANG_RE.match(code):
        raise RecordError(f"invalid language code {code!r}: expected two ASCII lowercase letters")
    return code


@dataclass(frozen=True)
class AnswerSpan:
    """Byte-offset [start, end) region of a passage plus the answer string."""

    start: int
    end: int
    text: str

    def validate(self, passage: str) -> None:
        pb = passage.encode("utf-8")
        if not (0 <= self.start < self.end <= len(pb)):
            raise RecordError(
                f"span ({self.start}, {self.end}) out of range for passage of {len(pb)} bytes"
            )
        chunk = pb[self.start : self.end]
        try:
            decoded = chunk.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise RecordError(
                f"span ({self.start}, {self.end}) does not fall on character boundaries"
            ) from exc
        if decoded != self.text:
            raise RecordError(
                f"span text mismatch: passage[{self.start}:{self.end}] is {decoded!r}, "
                f"record says {self.text!r}"
            )


@dataclass(frozen=True)
class QAInstance:
    """One (question, passage, answer span) record; the unit of all MRC datasets.

    ``q_lang`` is set only on mixed-language instances, where the question is in
    a different language than the passage (``lang`` always tags the passage).
    """

    id: str
    lang: str
    question: str
    passage: str
    answers: tuple[AnswerSpan, ...]
    answer_type: Optional[str] = None
    q_lang: Optional[str] = None

    def __post_init__(self):
        validate_lang(self.lang)
        if self.q_lang is not None:
            validate_lang(self.q_lang)
        if not self.answers:
            raise RecordError(f"instance {self.id!r} has no answers")
        for ans in self.answers:
            try:
                ans.validate(self.passage)
            except RecordError as exc:
                raise RecordError(f"instance {self.id!r}: {exc}") from exc

    def with_fields(self, **kwargs) -> "QAInstance":
        return replace(self, **kwargs)

    def to_json(self) -> dict:
        obj = {
            "id": self.id,
            "lang": self.lang,
            "question": self.question,
            "passage": self.passage,
            "answers": [{"start": a.start, "end": a.end, "text": a.text} for a in self.answers],
            "answer_type": self.answer_type,
        }
        if self.q_lang is not None:
            obj["q_lang"] = self.q_lang
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "QAInstance":
        return cls(
            id=obj["id"],
            lang=obj["lang"],
            question=obj["question"],
            passage=obj["passage"],
            answers=tuple(
                AnswerSpan(a["start"], a["end"], a["text"]) for a in obj["answers"]
            ),
            answer_type=obj.get("answer_type"),
            q_lang=obj.get("q_lang"),
        )


@dataclass(frozen=True)
class QueryLogRecord:
    """One search query with its retrieved document titles."""

    query: str
    lang: str
    titles: tuple[str, ...]

    def __post_init__(self):
        validate_lang(self.lang)


@dataclass(frozen=True)
class KnowledgePhraseEntry:
    """A mined phrase with its title-frequency score."""

    phrase: str
    lang: str
    score: float
    title_hits: int
    token_count: int

    def __post_init__(self):
        validate_lang(self.lang)
        if not 0.0 <= self.score <= 1.0:
            raise RecordError(f"phrase {self.phrase!r}: score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class PassageWithPhrases:
    """A passage annotated with non-overlapping byte ranges of mined phrases."""

    passage: str
    lang: str
    phrase_spans: tuple[tuple[int, int], ...]

    def __post_init__(self):
        validate_lang(self.lang)
        pb = self.passage.encode("utf-8")
        prev_end = -1
        for start, end in sorted(self.phrase_spans):
            if not (0 <= start < end <= len(pb)):
                raise RecordError(f"phrase span ({start}, {end}) out of range")
            if start < prev_end:
                raise RecordError(f"phrase spans overlap at byte {start}")
            prev_end = end


@dataclass(frozen=True)
class SliceScore:
    em: float
    f1: float
    n: int


@dataclass(frozen=True)
class EvalReport:
    """EM/F1 aggregates per language and answer type, with gaps to a pivot."""

    per_language: dict[str, SliceScore]
    per_answer_type: dict[str, SliceScore]
    gaps: dict[str, tuple[float, float]]  # lang -> (em gap, f1 gap) vs pivot
    pivot: str = "en"
    missing_predictions: int = 0

    def to_json(self) -> dict:
        return {
            "pivot": self.pivot,
            "missing_predictions": self.missing_predictions,
            "per_language": {
                k: {"em": v.em, "f1": v.f1, "n": v.n} for k, v in self.per_language.items()
            },
            "per_answer_type": {
                k: {"em": v.em, "f1": v.f1, "n": v.n} for k, v in self.per_answer_type.items()
            },
            "gaps": {k: {"em": em, "f1": f1} for k, (em, f1) in self.gaps.items()},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "EvalReport":
        return cls(
            per_language={
                k: SliceScore(v["em"], v["f1"], v["n"]) for k, v in obj["per_language"].items()
            },
            per_answer_type={
                k: SliceScore(v["em"], v["f1"], v["n"]) for k, v in obj["per_answer_type"].items()
            },
            gaps={k: (v["em"], v["f1"]) for k, v in obj["gaps"].items()},
            pivot=obj.get("pivot", "en"),
            missing_predictions=obj.get("missing_predictions", 0),
        )


# --------------------------------------------------------------------------
# JSONL I/O


def load_dataset(path: str | Path, expected_lang: Optional[str] = None) -> list[QAInstance]:
    """Load a JSONL dataset, verifying span invariants and id uniqueness."""
    instances: list[QAInstance] = []
    seen_ids: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            inst = QAInstance.from_json(obj)
            if inst.id in seen_ids:
                raise RecordError(f"{path}:{lineno}: duplicate id {inst.id!r}")
            seen_ids.add(inst.id)
            if expected_lang is not None and inst.lang != expected_lang:
                raise RecordError(
                    f"{path}:{lineno}: instance {inst.id!r} has lang {inst.lang!r}, "
                    f"expected {expected_lang!r}"
                )
            instances.append(inst)
    return instances


def save_dataset(instances: Iterable[QAInstance], path: str | Path) -> int:
    """Write instances as JSONL. Validates everything before touching the file."""
    instances = list(instances)
    seen: set[str] = set()
    for inst in instances:
        # construction already checks spans; re-check ids across the batch
        if inst.id in seen:
            raise RecordError(f"duplicate id {inst.id!r} in dataset to save")
        seen.add(inst.id)
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(inst.to_json(), ensure_ascii=False) + "\n")
    return len(instances)


def load_query_log(path: str | Path) -> tuple[list[QueryLogRecord], int]:
    """Load query-log JSONL. Returns (records, count skipped for empty titles)."""
    records: list[QueryLogRecord] = []
    skipped = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            titles = tuple(obj.get("titles", []))
            if not titles:
                skipped += 1
                continue
            records.append(QueryLogRecord(query=obj["query"], lang=obj["lang"], titles=titles))
    return records, skipped


def save_phrases(phrases: Iterable[KnowledgePhraseEntry], path: str | Path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for p in phrases:
            fh.write(
                json.dumps(
                    {
                        "phrase": p.phrase,
                        "lang": p.lang,
                        "score": p.score,
                        "title_hits": p.title_hits,
                        "token_count": p.token_count,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
            n += 1
    return n


def load_phrases(path: str | Path) -> list[KnowledgePhraseEntry]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            out.append(
                KnowledgePhraseEntry(
                    phrase=obj["phrase"],
                    lang=obj["lang"],
                    score=obj["score"],
                    title_hits=obj["title_hits"],
                    token_count=obj["token_count"],
                )
            )
    return out


def save_phrase_corpus(items: Iterable[PassageWithPhrases], path: str | Path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for item in items:
            fh.write(
                json.dumps(
                    {
                        "passage": item.passage,
                        "lang": item.lang,
                        "phrase_spans": [list(s) for s in item.phrase_spans],
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
            n += 1
    return n


def load_phrase_corpus(path: str | Path) -> list[PassageWithPhrases]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            out.append(
                PassageWithPhrases(
                    passage=obj["passage"],
                    lang=obj["lang"],
                    phrase_spans=tuple((s[0], s[1]) for s in obj["phrase_spans"]),
                )
            )
    return out


# --------------------------------------------------------------------------
# SQuAD import


def char_to_byte_offset(text: str, char_offset: int) -> int:
    return len(text[:char_offset].encode("utf-8"))


def import_squad(path: str | Path, lang: str) -> list[QAInstance]:
    """Convert a nested SQuAD-format JSON file to QAInstance records.

    SQuAD ``answer_start`` is a character offset; it is converted to a byte
    offset here. Only the answers whose text actually matches the context at
    the stated position are kept; a qa with no valid answers is dropped.
    """
    validate_lang(lang)
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    out: list[QAInstance] = []
    for article in data["data"]:
        for para in article["paragraphs"]:
            context = para["context"]
            for qa in para["qas"]:
                spans = []
                for ans in qa["answers"]:
                    text = ans["text"]
                    cstart = ans["answer_start"]
                    if context[cstart : cstart + len(text)] != text:
                        continue
                    bstart = char_to_byte_offset(context, cstart)
                    spans.append(AnswerSpan(bstart, bstart + len(text.encode("utf-8")), text))
                if not spans:
                    continue
                out.append(
                    QAInstance(
                        id=qa["id"],
                        lang=lang,
                        question=qa["question"],
                        passage=context,
                        answers=tuple(spans),
                    )
                )
    return out
