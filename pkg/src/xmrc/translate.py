"""Marker-based answer-span projection through a pluggable translator.

The answer of the source passage is enclosed in a marker token pair, the
marked text goes through the translator, and the answer span in the target
language is recovered as the region between the surviving markers. Instances
where the translator destroys the markers are discarded and counted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol

from .records import AnswerSpan, QAInstance, RecordError

SKIP_REASONS = (
    "marker-collision",
    "markers-missing",
    "markers-reordered",
    "markers-duplicated",
    "empty-answer",
)


@dataclass(frozen=True)
class MarkerScheme:
    open: str = "(["
    close: str = "])"

    def __post_init__(self):
        if not self.open or not self.close:
            raise ValueError("marker strings must be non-empty")
        if self.open == self.close:
            raise ValueError("open and close markers must differ")
        if self.open in self.close or self.close in self.open:
            raise ValueError("neither marker may be a substring of the other")


class Translator(Protocol):
    def translate(self, text: str, source: str, target: str) -> str: ...


class IdentityTranslator:
    """Returns the input unchanged; only the language tag moves."""

    def translate(self, text: str, source: str, target: str) -> str:
        return text


class DictionaryTranslator:
    """Word-by-word lookup from a lexicon; unknown words pass through.

    The lexicon maps source tokens to target tokens. Token order is preserved.
    Splitting is on whitespace, so marker strings glued to a word survive
    unless the lexicon maps them away.
    """

    def __init__(self, lexicon: dict[str, str]):
        self.lexicon = dict(lexicon)

    @classmethod
    def from_tsv(cls, path: str | Path) -> "DictionaryTranslator":
        lexicon = {}
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                src, _, tgt = line.partition("\t")
                lexicon[src] = tgt
        return cls(lexicon)

    def translate(self, text: str, source: str, target: str) -> str:
        return " ".join(self.lexicon.get(tok, tok) for tok in text.split())


@dataclass(frozen=True)
class Skip:
    reason: str

    def __post_init__(self):
        if self.reason not in SKIP_REASONS:
            raise ValueError(f"unknown skip reason {self.reason!r}")


@dataclass
class TranslationStats:
    source_count: int = 0
    kept_count: int = 0
    skips: dict[str, int] = field(default_factory=dict)

    @property
    def skip_ratio(self) -> float:
        if self.source_count == 0:
            return 0.0
        return (self.source_count - self.kept_count) / self.source_count

    def to_json(self) -> dict:
        return {
            "source_count": self.source_count,
            "kept_count": self.kept_count,
            "skip_ratio": self.skip_ratio,
            "skips": dict(self.skips),
        }


def skip_ratio(source_count: int, kept_count: int) -> float:
    """Fraction of instances discarded, as reported alongside translated data."""
    if source_count == 0:
        return 0.0
    return (source_count - kept_count) / source_count


def wrap_answer(instance: QAInstance, scheme: MarkerScheme) -> str | Skip:
    """Insert markers around the first answer span of the passage.

    Returns the marked passage, or a marker-collision Skip if either marker
    already occurs anywhere in the passage.
    """
    if scheme.open in instance.passage or scheme.close in instance.passage:
        return Skip("marker-collision")
    ans = instance.answers[0]
    pb = instance.passage.encode("utf-8")
    marked = (
        pb[: ans.start]
        + scheme.open.encode("utf-8")
        + pb[ans.start : ans.end]
        + scheme.close.encode("utf-8")
        + pb[ans.end :]
    )
    return marked.decode("utf-8")


def _recover_span(translated: str, scheme: MarkerScheme) -> tuple[str, AnswerSpan] | Skip:
    """Strip the marker pair from translated text and compute the byte span."""
    n_open = translated.count(scheme.open)
    n_close = translated.count(scheme.close)
    if n_open < 1 or n_close < 1:
        return Skip("markers-missing")
    if n_open > 1 or n_close > 1:
        return Skip("markers-duplicated")
    i_open = translated.index(scheme.open)
    i_close = translated.index(scheme.close)
    if i_close < i_open:
        return Skip("markers-reordered")

    before = translated[:i_open]
    inner = translated[i_open + len(scheme.open) : i_close]
    after = translated[i_close + len(scheme.close) :]

    # translators commonly inject spaces around bracket tokens; fold the
    # trimmed whitespace back into the surrounding passage
    stripped = inner.strip()
    if not stripped:
        return Skip("empty-answer")
    lead = len(inner) - len(inner.lstrip())
    trail = len(inner) - len(inner.rstrip())
    before = before + inner[:lead] if lead else before
    after = (inner[len(inner) - trail :] + after) if trail else after

    passage = before + stripped + after
    start = len(before.encode("utf-8"))
    end = start + len(stripped.encode("utf-8"))
    return passage, AnswerSpan(start, end, stripped)


def translate_instance(
    instance: QAInstance,
    target: str,
    translator: Translator,
    scheme: MarkerScheme = MarkerScheme(),
) -> QAInstance | Skip:
    """Translate one instance, projecting the answer span via markers."""
    marked = wrap_answer(instance, scheme)
    if isinstance(marked, Skip):
        return marked
    translated_q = translator.translate(instance.question, instance.lang, target)
    translated_p = translator.translate(marked, instance.lang, target)
    recovered = _recover_span(translated_p, scheme)
    if isinstance(recovered, Skip):
        return recovered
    passage, span = recovered
    return QAInstance(
        id=instance.id,
        lang=target,
        question=translated_q,
        passage=passage,
        answers=(span,),
        answer_type=instance.answer_type,
    )


def translate_dataset(
    instances: list[QAInstance],
    target: str,
    translator: Translator,
    scheme: MarkerScheme = MarkerScheme(),
) -> tuple[list[QAInstance], TranslationStats]:
    """Translate a monolingual dataset; failed projections become skip counts."""
    langs = {inst.lang for inst in instances}
    if len(langs) > 1:
        raise RecordError(f"mixed source languages {sorted(langs)}: expected one")
    stats = TranslationStats(source_count=len(instances))
    kept: list[QAInstance] = []
    for inst in instances:
        result = translate_instance(inst, target, translator, scheme)
        if isinstance(result, Skip):
            stats.skips[result.reason] = stats.skips.get(result.reason, 0) + 1
        else:
            kept.append(result)
    stats.kept_count = len(kept)
    return kept, stats
