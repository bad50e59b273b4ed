"""Mixed-language dataset construction.

Given a source dataset and its per-language translations, emits instances
whose question and passage are in different languages. The answer span always
travels with the passage, so its validated byte offsets carry over untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

from .records import QAInstance, RecordError


@dataclass(frozen=True)
class AlignedInstanceGroup:
    """A source instance together with its surviving translations, keyed by language."""

    source: QAInstance
    translations: dict[str, QAInstance]

    def __post_init__(self):
        for lang, inst in self.translations.items():
            if inst.id != self.source.id:
                raise RecordError(
                    f"group id mismatch: {inst.id!r} vs source {self.source.id!r}"
                )
            if inst.lang != lang:
                raise RecordError(f"translation keyed {lang!r} but tagged {inst.lang!r}")
        if self.source.lang in self.translations:
            raise RecordError(f"source language {self.source.lang!r} also among translations")


def _index_by_id(instances: list[QAInstance], label: str) -> dict[str, QAInstance]:
    index: dict[str, QAInstance] = {}
    for inst in instances:
        if inst.id in index:
            raise RecordError(f"duplicate id {inst.id!r} in {label} dataset")
        index[inst.id] = inst
    return index


def align(
    source_ds: list[QAInstance],
    translated_dss: list[tuple[str, list[QAInstance]]],
) -> tuple[list[AlignedInstanceGroup], int]:
    """Match translations back to their source instances by id.

    Returns the groups (one per source id with at least one surviving
    translation) and the number of source ids dropped for having none.
    """
    _index_by_id(source_ds, "source")
    translated_indexes = [
        (lang, _index_by_id(instances, lang)) for lang, instances in translated_dss
    ]
    groups: list[AlignedInstanceGroup] = []
    dropped = 0
    for src in source_ds:
        translations = {
            lang: index[src.id] for lang, index in translated_indexes if src.id in index
        }
        if translations:
            groups.append(AlignedInstanceGroup(source=src, translations=translations))
        else:
            dropped += 1
    return groups, dropped


def _mixed(q_inst: QAInstance, p_inst: QAInstance) -> QAInstance:
    return QAInstance(
        id=f"{p_inst.id}::{q_inst.lang}-{p_inst.lang}",
        lang=p_inst.lang,
        question=q_inst.question,
        passage=p_inst.passage,
        answers=p_inst.answers,
        answer_type=p_inst.answer_type,
        q_lang=q_inst.lang,
    )


def build_mixed(groups: list[AlignedInstanceGroup], mode: str = "pivot") -> list[QAInstance]:
    """Emit cross-language (question, passage) pairs.

    pivot mode: per translation t, (t question, source passage) and
    (source question, t passage) — the two depicted forms, 2 per (group, t).
    all_pairs mode: every ordered pair over {source} + translations with
    question language != passage language.
    """
    if mode not in ("pivot", "all_pairs"):
        raise ValueError(f"unknown mode {mode!r}")
    out: list[QAInstance] = []
    for group in groups:
        members = [group.source] + [group.translations[k] for k in sorted(group.translations)]
        if mode == "pivot":
            for trans in members[1:]:
                out.append(_mixed(trans, group.source))
                out.append(_mixed(group.source, trans))
        else:
            for q_inst in members:
                for p_inst in members:
                    if q_inst.lang != p_inst.lang:
                        out.append(_mixed(q_inst, p_inst))
    return out
