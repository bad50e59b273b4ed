import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "scripts"))

from xmrc.masking import build_vocab
from xmrc.records import AnswerSpan, QAInstance


def make_instance(
    id="q1",
    lang="en",
    question="how many players",
    passage="a team consists of thirteen players on the field",
    answer="thirteen",
    answer_type=None,
):
    start = passage.encode("utf-8").index(answer.encode("utf-8"))
    end = start + len(answer.encode("utf-8"))
    return QAInstance(
        id=id,
        lang=lang,
        question=question,
        passage=passage,
        answers=(AnswerSpan(start, end, answer),),
        answer_type=answer_type,
    )


@pytest.fixture
def instance():
    return make_instance()


@pytest.fixture
def tiny_vocab():
    corpus = [
        "a team consists of thirteen players on the field",
        "how many players george washington cherry tree",
        "the quick brown fox jumps over the lazy dog",
    ]
    return build_vocab(corpus, max_size=200)
