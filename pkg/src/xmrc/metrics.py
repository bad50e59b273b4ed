"""SQuAD-style EM/F1 scoring with per-answer-type slices and pivot-language gaps.

Normalization follows the usual SQuAD recipe: lowercase, strip punctuation,
drop articles, collapse whitespace. Punctuation is the Unicode property, not
an ASCII list, and article stripping is per-language (English-only default).
F1 uses multiset token overlap, max over golds.
"""

from __future__ import annotations

import unicodedata
from collections import Counter
from dataclasses import dataclass, field

from .records import EvalReport, QAInstance, SliceScore

DEFAULT_ARTICLES = {"en": frozenset({"a", "an", "the"})}


@dataclass(frozen=True)
class NormalizationPolicy:
    lowercase: bool = True
    strip_punctuation: bool = True
    collapse_whitespace: bool = True
    articles: dict[str, frozenset[str]] = field(
        default_factory=lambda: dict(DEFAULT_ARTICLES)
    )
    lang: str = "en"

    def for_lang(self, lang: str) -> "NormalizationPolicy":
        return NormalizationPolicy(
            lowercase=self.lowercase,
            strip_punctuation=self.strip_punctuation,
            collapse_whitespace=self.collapse_whitespace,
            articles=self.articles,
            lang=lang,
        )


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def normalize(text: str, policy: NormalizationPolicy = NormalizationPolicy()) -> str:
    if policy.lowercase:
        text = text.lower()
    if policy.strip_punctuation:
        text = "".join(ch for ch in text if not _is_punct(ch))
    tokens = text.split()
    articles = policy.articles.get(policy.lang, frozenset())
    if articles:
        tokens = [t for t in tokens if t not in articles]
    if policy.collapse_whitespace:
        return " ".join(tokens)
    return " ".join(tokens)


def exact_match(
    prediction: str, golds: list[str], policy: NormalizationPolicy = NormalizationPolicy()
) -> int:
    """1 iff the normalized prediction equals any normalized gold."""
    if not golds:
        raise ValueError("golds must be non-empty")
    pred = normalize(prediction, policy)
    return int(any(pred == normalize(g, policy) for g in golds))


def _f1_single(pred_tokens: list[str], gold_tokens: list[str]) -> float:
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    overlap = sum((Counter(pred_tokens) & Counter(gold_tokens)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def f1(
    prediction: str, golds: list[str], policy: NormalizationPolicy = NormalizationPolicy()
) -> float:
    """Bag-of-words F1, maximum over the gold answers."""
    if not golds:
        raise ValueError("golds must be non-empty")
    pred_tokens = normalize(prediction, policy).split()
    return max(_f1_single(pred_tokens, normalize(g, policy).split()) for g in golds)


def evaluate(
    predictions: dict[str, str],
    dataset: list[QAInstance],
    policy: NormalizationPolicy = NormalizationPolicy(),
    pivot: str = "en",
) -> EvalReport:
    """Per-language and per-answer-type EM/F1 means, with gaps to the pivot.

    Instances without a prediction score 0/0 and are counted, not fatal.
    """
    lang_acc: dict[str, list[tuple[float, float]]] = {}
    type_acc: dict[str, list[tuple[float, float]]] = {}
    missing = 0
    for inst in dataset:
        golds = [a.text for a in inst.answers]
        if inst.id in predictions:
            p = policy.for_lang(inst.lang)
            em = float(exact_match(predictions[inst.id], golds, p))
            f1v = f1(predictions[inst.id], golds, p)
        else:
            missing += 1
            em, f1v = 0.0, 0.0
        lang_acc.setdefault(inst.lang, []).append((em, f1v))
        if inst.answer_type is not None:
            type_acc.setdefault(inst.answer_type, []).append((em, f1v))

    def summarize(acc: dict[str, list[tuple[float, float]]]) -> dict[str, SliceScore]:
        return {
            key: SliceScore(
                em=sum(e for e, _ in vals) / len(vals),
                f1=sum(f for _, f in vals) / len(vals),
                n=len(vals),
            )
            for key, vals in acc.items()
        }

    per_language = summarize(lang_acc)
    per_type = summarize(type_acc)
    gaps: dict[str, tuple[float, float]] = {}
    if pivot in per_language:
        base = per_language[pivot]
        gaps = {
            lang: (s.em - base.em, s.f1 - base.f1) for lang, s in per_language.items()
        }
    return EvalReport(
        per_language=per_language,
        per_answer_type=per_type,
        gaps=gaps,
        pivot=pivot,
        missing_predictions=missing,
    )


def compare_runs(reports: list[tuple[str, EvalReport]]) -> str:
    """Markdown table of per-language and per-type EM/F1 with deltas vs run 1."""
    if not reports:
        return ""
    base_label, base = reports[0]

    def rows(selector) -> list[str]:
        keys = []
        for _, rep in reports:
            for k in selector(rep):
                if k not in keys:
                    keys.append(k)
        lines = []
        for k in keys:
            cells = [k]
            base_slice = selector(base).get(k)
            for idx, (_, rep) in enumerate(reports):
                s = selector(rep).get(k)
                if s is None:
                    cells.append("")
                    continue
                cell = f"{s.em * 100:.1f} / {s.f1 * 100:.1f}"
                if idx > 0 and base_slice is not None:
                    cell += f" ({(s.em - base_slice.em) * 100:+.1f} / {(s.f1 - base_slice.f1) * 100:+.1f})"
                cells.append(cell)
            lines.append("| " + " | ".join(cells) + " |")
        return lines

    header = ["slice"] + [label for label, _ in reports]
    out = [
        "| " + " | ".join(header) + " |",
        "|" + "|".join(["---"] * len(header)) + "|",
    ]
    out += rows(lambda r: r.per_language)
    out += rows(lambda r: r.per_answer_type)
    return "\n".join(out) + "\n"
