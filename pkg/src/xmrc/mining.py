"""Knowledge-phrase mining from query logs.

Candidates are the 2..4-gram windows of each query after case-folding and
punctuation-aware tokenization; a candidate survives if the fraction of the
query's retrieved document titles containing it (on token boundaries) reaches
the threshold. Passages are then annotated with spans of the mined phrases.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from .records import (
    KnowledgePhraseEntry,
    PassageWithPhrases,
    QueryLogRecord,
    RecordError,
)

_TOKEN_RE = re.compile(r"\w+", re.UNICODE)


@dataclass(frozen=True)
class StopWordList:
    lang: str
    words: frozenset[str]

    @classmethod
    def from_file(cls, path: str | Path, lang: str) -> "StopWordList":
        with open(path, "r", encoding="utf-8") as fh:
            words = frozenset(w.strip().casefold() for w in fh if w.strip())
        return cls(lang=lang, words=words)

    def __contains__(self, token: str) -> bool:
        return token.casefold() in self.words


@dataclass(frozen=True)
class MiningConfig:
    ngram_min: int = 2
    ngram_max: int = 4
    threshold: float = 0.7

    def __post_init__(self):
        if not 1 <= self.ngram_min <= self.ngram_max:
            raise ValueError(f"bad n-gram range {self.ngram_min}:{self.ngram_max}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold {self.threshold} outside [0, 1]")


@dataclass
class MiningStats:
    query_count: int = 0
    phrase_count: int = 0
    occurrence_count: int = 0  # kept (query, phrase) pairs, before dedup
    skipped_empty_titles: int = 0

    @property
    def phrases_per_query(self) -> float:
        if self.query_count == 0:
            return 0.0
        return self.phrase_count / self.query_count

    def to_json(self) -> dict:
        return {
            "query_count": self.query_count,
            "phrase_count": self.phrase_count,
            "occurrence_count": self.occurrence_count,
            "skipped_empty_titles": self.skipped_empty_titles,
            "phrases_per_query": self.phrases_per_query,
        }


def tokenize_folded(text: str) -> list[str]:
    return [m.group().casefold() for m in _TOKEN_RE.finditer(text)]


def tokenize_with_spans(text: str) -> list[tuple[str, int, int]]:
    """Case-folded tokens with byte offsets into the UTF-8 encoding of text."""
    out = []
    byte_at = [0]
    # prefix byte lengths per char, built lazily only when non-ascii present
    if text.isascii():
        for m in _TOKEN_RE.finditer(text):
            out.append((m.group().casefold(), m.start(), m.end()))
    else:
        for ch in text:
            byte_at.append(byte_at[-1] + len(ch.encode("utf-8")))
        for m in _TOKEN_RE.finditer(text):
            out.append((m.group().casefold(), byte_at[m.start()], byte_at[m.end()]))
    return out


def candidates(query: str, config: MiningConfig, stops: StopWordList) -> list[str]:
    """All n-gram candidates of a query, stop-filtered, deduped, in first-seen order."""
    tokens = tokenize_folded(query)
    seen: set[str] = set()
    out: list[str] = []
    for n in range(config.ngram_min, config.ngram_max + 1):
        for i in range(len(tokens) - n + 1):
            gram = tokens[i : i + n]
            if gram[0] in stops or gram[-1] in stops:
                continue
            if all(t in stops for t in gram):
                continue
            phrase = " ".join(gram)
            if phrase not in seen:
                seen.add(phrase)
                out.append(phrase)
    return out


def _contains_tokens(haystack: list[str], needle: list[str]) -> bool:
    n = len(needle)
    return any(haystack[i : i + n] == needle for i in range(len(haystack) - n + 1))


def score(phrase: str, titles: list[str]) -> float:
    """Fraction of titles containing the phrase on token boundaries, case-folded."""
    if not titles:
        raise RecordError("cannot score against an empty title list")
    needle = phrase.split()
    hits = sum(1 for t in titles if _contains_tokens(tokenize_folded(t), needle))
    return hits / len(titles)


def mine(
    log: list[QueryLogRecord],
    config: MiningConfig = MiningConfig(),
    stops: StopWordList | None = None,
) -> tuple[list[KnowledgePhraseEntry], MiningStats]:
    """Mine knowledge phrases from a query log; dedup across queries keeps max score."""
    langs = {r.lang for r in log}
    if len(langs) > 1:
        raise RecordError(f"mixed languages in query log: {sorted(langs)}")
    lang = next(iter(langs)) if langs else "xx"
    if stops is None:
        stops = StopWordList(lang=lang, words=frozenset())

    stats = MiningStats(query_count=len(log))
    best: dict[str, tuple[float, int]] = {}  # phrase -> (score, title_hits)
    order: list[str] = []
    for record in log:
        if not record.titles:
            stats.skipped_empty_titles += 1
            continue
        titles = list(record.titles)
        for phrase in candidates(record.query, config, stops):
            s = score(phrase, titles)
            if s >= config.threshold:
                stats.occurrence_count += 1
                hits = round(s * len(titles))
                if phrase not in best:
                    order.append(phrase)
                    best[phrase] = (s, hits)
                elif s > best[phrase][0]:
                    best[phrase] = (s, hits)
    entries = [
        KnowledgePhraseEntry(
            phrase=p,
            lang=lang,
            score=best[p][0],
            title_hits=best[p][1],
            token_count=len(p.split()),
        )
        for p in order
    ]
    stats.phrase_count = len(entries)
    return entries, stats


def attach_phrases(
    passages: list[tuple[str, str]],
    phrases: list[KnowledgePhraseEntry],
) -> list[PassageWithPhrases]:
    """Locate mined phrases in passages as non-overlapping byte spans.

    Matching is case-folded on token boundaries; overlaps are resolved
    longest-match-first, ties by leftmost. Passages without any match are
    dropped.
    """
    needles = [(p.phrase.split(), p.phrase) for p in phrases]
    out: list[PassageWithPhrases] = []
    for passage, lang in passages:
        toks = tokenize_with_spans(passage)
        words = [t[0] for t in toks]
        matches: list[tuple[int, int, int]] = []  # (token length, byte start, byte end)
        for needle, _ in needles:
            n = len(needle)
            for i in range(len(words) - n + 1):
                if words[i : i + n] == needle:
                    matches.append((n, toks[i][1], toks[i + n - 1][2]))
        # longest match (in tokens) first, ties leftmost; greedy non-overlap
        matches.sort(key=lambda m: (-m[0], m[1]))
        chosen: list[tuple[int, int]] = []
        for _, start, end in matches:
            if all(end <= s or start >= e for s, e in chosen):
                chosen.append((start, end))
        if chosen:
            chosen.sort()
            out.append(PassageWithPhrases(passage=passage, lang=lang, phrase_spans=tuple(chosen)))
    return out


@dataclass(frozen=True)
class PhraseCorpusStats:
    passage_count: int
    phrase_span_count: int
    avg_tokens_per_phrase: float
    avg_phrases_per_passage: float

    def to_json(self) -> dict:
        return {
            "passage_count": self.passage_count,
            "phrase_span_count": self.phrase_span_count,
            "avg_tokens_per_phrase": self.avg_tokens_per_phrase,
            "avg_phrases_per_passage": self.avg_phrases_per_passage,
        }


def phrase_stats(result: list[PassageWithPhrases]) -> PhraseCorpusStats:
    """Corpus summary: passage count, span count, average span length, density."""
    span_count = sum(len(p.phrase_spans) for p in result)
    token_total = 0
    for p in result:
        pb = p.passage.encode("utf-8")
        for start, end in p.phrase_spans:
            token_total += len(tokenize_folded(pb[start:end].decode("utf-8")))
    return PhraseCorpusStats(
        passage_count=len(result),
        phrase_span_count=span_count,
        avg_tokens_per_phrase=token_total / span_count if span_count else 0.0,
        avg_phrases_per_passage=span_count / len(result) if result else 0.0,
    )
