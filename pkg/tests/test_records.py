import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_instance
from xmrc.records import (
    AnswerSpan,
    QAInstance,
    RecordError,
    import_squad,
    load_dataset,
    save_dataset,
    validate_lang,
)

RUGBY = (
    "A rugby league team consists of thirteen players on the field, "
    "with four substitutes on the bench."
)


def test_language_codes():
    assert validate_lang("en") == "en"
    for bad in ("EN", "eng", "e", "", "z1"):
        with pytest.raises(RecordError):
            validate_lang(bad)


def test_rugby_span_loads():
    start = RUGBY.index("thirteen")
    inst = QAInstance(
        id="mtqa-1",
        lang="en",
        question="how many players in rugby-league team on field",
        passage=RUGBY,
        answers=(AnswerSpan(start, start + 8, "thirteen"),),
        answer_type="numeric",
    )
    assert inst.passage[start : start + 8] == "thirteen"


def test_span_text_mismatch_rejected():
    with pytest.raises(RecordError, match="mismatch"):
        QAInstance(
            id="x",
            lang="en",
            question="q",
            passage=RUGBY,
            answers=(AnswerSpan(0, 7, "thirteen"),),
        )


def test_empty_span_rejected():
    with pytest.raises(RecordError):
        QAInstance(id="x", lang="en", question="q", passage="abc", answers=(AnswerSpan(0, 0, ""),))


def test_span_out_of_range_rejected():
    with pytest.raises(RecordError):
        AnswerSpan(0, 100, "abc").validate("abc")


def test_byte_offsets_multibyte():
    passage = "König Ödipus regiert"  # 'ö' is 2 bytes
    start = passage.encode("utf-8").index("Ödipus".encode("utf-8"))
    inst = QAInstance(
        id="de1",
        lang="de",
        question="wer",
        passage=passage,
        answers=(AnswerSpan(start, start + len("Ödipus".encode("utf-8")), "Ödipus"),),
    )
    assert inst.answers[0].start == 7  # 'König ' is 6 chars but 7 bytes


def test_mid_character_offset_rejected():
    passage = "Ödipus"
    with pytest.raises(RecordError):
        AnswerSpan(1, 3, "?").validate(passage)  # byte 1 is inside the 2-byte 'Ö'


def test_empty_file_loads_empty(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    assert load_dataset(path) == []


def test_malformed_line_reports_lineno(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"id": "a"\n')
    with pytest.raises(RecordError, match=":1"):
        load_dataset(path)


def test_duplicate_id_rejected(tmp_path):
    path = tmp_path / "dup.jsonl"
    inst = make_instance()
    line = json.dumps(inst.to_json())
    path.write_text(line + "\n" + line + "\n")
    with pytest.raises(RecordError, match="duplicate id"):
        load_dataset(path)


def test_language_mismatch_rejected(tmp_path):
    path = tmp_path / "ds.jsonl"
    save_dataset([make_instance()], path)
    with pytest.raises(RecordError, match="expected 'de'"):
        load_dataset(path, expected_lang="de")


def test_round_trip(tmp_path):
    instances = [
        make_instance(id="a"),
        make_instance(id="b", answer="players"),
        make_instance(id="c", lang="de", answer_type="numeric"),
    ]
    path = tmp_path / "ds.jsonl"
    assert save_dataset(instances, path) == 3
    assert load_dataset(path) == instances


def test_save_empty(tmp_path):
    path = tmp_path / "ds.jsonl"
    assert save_dataset([], path) == 0
    assert path.read_text() == ""


@settings(max_examples=60, deadline=None)
@given(
    prefix=st.text(min_size=0, max_size=20),
    answer=st.text(
        alphabet=st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=10
    ),
    suffix=st.text(min_size=0, max_size=20),
)
def test_round_trip_property(tmp_path_factory, prefix, answer, suffix):
    passage = prefix + answer + suffix
    start = len(prefix.encode("utf-8"))
    end = start + len(answer.encode("utf-8"))
    inst = QAInstance(
        id="p", lang="en", question="q?", passage=passage,
        answers=(AnswerSpan(start, end, answer),),
    )
    path = tmp_path_factory.mktemp("rt") / "ds.jsonl"
    save_dataset([inst], path)
    assert load_dataset(path) == [inst]


def test_import_squad(tmp_path):
    context = "König Ödipus regiert die Stadt Theben."
    squad = {
        "data": [
            {
                "paragraphs": [
                    {
                        "context": context,
                        "qas": [
                            {
                                "id": "s1",
                                "question": "Wer regiert?",
                                "answers": [
                                    {"text": "Ödipus", "answer_start": context.index("Ödipus")}
                                ],
                            },
                            {
                                "id": "s2",
                                "question": "bad offset",
                                "answers": [{"text": "Ödipus", "answer_start": 0}],
                            },
                        ],
                    }
                ]
            }
        ]
    }
    path = tmp_path / "squad.json"
    path.write_text(json.dumps(squad, ensure_ascii=False), encoding="utf-8")
    out = import_squad(path, "de")
    # char offset converted to byte offset; the mismatching qa is dropped
    assert [inst.id for inst in out] == ["s1"]
    span = out[0].answers[0]
    assert out[0].passage.encode("utf-8")[span.start : span.end].decode("utf-8") == "Ödipus"
