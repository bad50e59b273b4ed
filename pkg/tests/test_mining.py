import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xmrc.mining import (
    MiningConfig,
    StopWordList,
    attach_phrases,
    candidates,
    mine,
    phrase_stats,
    score,
    tokenize_with_spans,
)
from xmrc.records import QueryLogRecord, RecordError

EN_STOPS = StopWordList(
    lang="en",
    words=frozenset(
        "a an the of in on is was when down made to for and or".split()
    ),
)
CFG = MiningConfig()

WASHINGTON_QUERY = "when is the myth of George Washington cutting down cherry tree made"


def test_candidates_washington_example():
    cands = candidates(WASHINGTON_QUERY, CFG, EN_STOPS)
    assert "george washington" in cands
    assert "cherry tree" in cands
    # stop-boundary rule removes stop-initial/final n-grams
    assert "when is" not in cands
    assert "is the myth" not in cands
    assert "the myth" not in cands


def test_candidates_stop_interior_kept():
    cands = candidates("george washington of america said", CFG, EN_STOPS)
    assert "washington of america" in cands


def test_candidates_single_token_query():
    assert candidates("washington", CFG, EN_STOPS) == []


def test_candidates_exact_bigram():
    assert candidates("cherry tree", CFG, EN_STOPS) == ["cherry tree"]


def test_candidates_dedup_first_seen_order():
    cands = candidates("cherry tree cherry tree", CFG, EN_STOPS)
    assert len(cands) == len(set(cands))
    assert cands[0] == "cherry tree"


def test_score_all_titles():
    titles = [
        "George Washington and the Cherry Tree",
        "The Cherry Tree myth - George Washington's Mount Vernon",
        "Did George Washington chop down a cherry tree?",
    ]
    assert score("george washington", titles) == 1.0
    assert score("cherry tree", titles) == 1.0


def test_score_absent():
    assert score("cherry tree", ["no match here"]) == 0.0


def test_score_partial():
    titles = ["cherry tree one", "cherry tree two", "no match"]
    assert score("cherry tree", titles) == pytest.approx(2 / 3)


def test_score_token_boundary():
    # no mid-word substring hits
    assert score("cherry tree", ["mycherry treeline"]) == 0.0
    assert score("cherry", ["cherrywood"]) == 0.0


def test_score_empty_titles_rejected():
    with pytest.raises(RecordError):
        score("x y", [])


def _washington_log():
    titles = (
        "George Washington and the Cherry Tree legend",
        "The cherry tree myth - George Washington library",
        "George Washington chopping the cherry tree story",
    )
    return [QueryLogRecord(query=WASHINGTON_QUERY, lang="en", titles=titles)]


def test_mine_worked_example():
    entries, stats = mine(_washington_log(), CFG, EN_STOPS)
    phrases = {e.phrase: e for e in entries}
    assert "george washington" in phrases
    assert "cherry tree" in phrases
    assert phrases["george washington"].score == 1.0
    assert phrases["cherry tree"].title_hits == 3
    assert stats.query_count == 1
    assert stats.phrases_per_query == stats.phrase_count / 1


def test_mine_excludes_below_threshold():
    log = [
        QueryLogRecord(
            query="george washington cherry tree",
            lang="en",
            titles=(
                "george washington cherry tree",
                "george washington biography",
                "george washington president",
            ),
        )
    ]
    entries, _ = mine(log, MiningConfig(threshold=0.7), EN_STOPS)
    phrases = {e.phrase for e in entries}
    assert "george washington" in phrases
    assert "cherry tree" not in phrases  # 1/3 < 0.7


def test_mine_dedup_keeps_max_score():
    log = [
        QueryLogRecord(
            query="cherry tree story", lang="en",
            titles=("cherry tree a", "cherry tree b", "cherry tree c", "other", "other two"),
        ),
        QueryLogRecord(
            query="cherry tree myth", lang="en",
            titles=("cherry tree x", "other",),
        ),
    ]
    entries, _ = mine(log, MiningConfig(threshold=0.5), EN_STOPS)
    entry = next(e for e in entries if e.phrase == "cherry tree")
    assert entry.score == pytest.approx(0.6)


def test_mine_threshold_monotone():
    log = _washington_log() + [
        QueryLogRecord(
            query="abraham lincoln log cabin",
            lang="en",
            titles=("abraham lincoln history", "log cabin pictures", "abraham lincoln life"),
        )
    ]
    counts = []
    prev_set = None
    for threshold in (0.0, 0.1, 0.3, 0.5, 0.7, 0.9):
        entries, _ = mine(log, MiningConfig(threshold=threshold), EN_STOPS)
        phrases = {e.phrase for e in entries}
        counts.append(len(phrases))
        if prev_set is not None:
            assert phrases <= prev_set
        prev_set = phrases
    assert counts == sorted(counts, reverse=True)


def test_mine_threshold_zero_keeps_everything():
    log = _washington_log()
    entries, _ = mine(log, MiningConfig(threshold=0.0), EN_STOPS)
    assert {e.phrase for e in entries} == set(candidates(WASHINGTON_QUERY, CFG, EN_STOPS))


def test_mine_mixed_languages_rejected():
    log = [
        QueryLogRecord(query="a b", lang="en", titles=("t",)),
        QueryLogRecord(query="c d", lang="de", titles=("t",)),
    ]
    with pytest.raises(RecordError, match="mixed languages"):
        mine(log, CFG, EN_STOPS)


def test_mine_kept_phrases_are_query_ngrams():
    log = _washington_log()
    entries, _ = mine(log, MiningConfig(threshold=0.0), EN_STOPS)
    query_tokens = WASHINGTON_QUERY.lower().split()
    joined = " ".join(query_tokens)
    for e in entries:
        assert e.phrase in joined
        assert 2 <= e.token_count <= 4


def test_tokenize_with_spans_bytes():
    text = "König Ödipus"
    spans = tokenize_with_spans(text)
    assert [t for t, _, _ in spans] == ["könig", "ödipus"]
    raw = text.encode("utf-8")
    assert raw[spans[1][1] : spans[1][2]].decode("utf-8") == "Ödipus"


def test_attach_phrases_basic():
    from xmrc.records import KnowledgePhraseEntry

    phrases = [KnowledgePhraseEntry("george washington", "en", 1.0, 3, 2)]
    result = attach_phrases(
        [("A story about George Washington in history.", "en"), ("no match", "en")],
        phrases,
    )
    assert len(result) == 1
    (span,) = result[0].phrase_spans
    pb = result[0].passage.encode("utf-8")
    assert pb[span[0] : span[1]].decode() == "George Washington"


def test_attach_phrases_longest_first():
    from xmrc.records import KnowledgePhraseEntry

    phrases = [
        KnowledgePhraseEntry("washington cutting", "en", 1.0, 3, 2),
        KnowledgePhraseEntry("george washington cutting", "en", 1.0, 3, 3),
    ]
    result = attach_phrases([("george washington cutting down a tree", "en")], phrases)
    (span,) = result[0].phrase_spans
    pb = result[0].passage.encode("utf-8")
    assert pb[span[0] : span[1]].decode() == "george washington cutting"


def test_attach_phrases_overlap_resolution():
    from xmrc.records import KnowledgePhraseEntry

    # equal-length overlap: leftmost wins, the overlapping one is discarded
    phrases = [
        KnowledgePhraseEntry("george washington", "en", 1.0, 3, 2),
        KnowledgePhraseEntry("washington cutting", "en", 1.0, 3, 2),
    ]
    result = attach_phrases([("george washington cutting the tree", "en")], phrases)
    spans = result[0].phrase_spans
    assert len(spans) == 1
    pb = result[0].passage.encode("utf-8")
    assert pb[spans[0][0] : spans[0][1]].decode() == "george washington"


def test_phrase_stats_single():
    from xmrc.records import KnowledgePhraseEntry

    phrases = [KnowledgePhraseEntry("cherry tree", "en", 1.0, 3, 2)]
    result = attach_phrases([("the cherry tree story", "en")], phrases)
    stats = phrase_stats(result)
    assert (stats.passage_count, stats.phrase_span_count) == (1, 1)
    assert stats.avg_tokens_per_phrase == 2.0
    assert stats.avg_phrases_per_passage == 1.0


def test_phrase_stats_arithmetic():
    from xmrc.records import KnowledgePhraseEntry

    phrases = [
        KnowledgePhraseEntry("cherry tree", "en", 1.0, 3, 2),
        KnowledgePhraseEntry("log cabin", "en", 1.0, 3, 2),
        KnowledgePhraseEntry("big red apple", "en", 1.0, 3, 3),
        KnowledgePhraseEntry("tall green tree", "en", 1.0, 3, 3),
    ]
    result = attach_phrases(
        [
            ("cherry tree", "en"),
            ("log cabin and big red apple and tall green tree", "en"),
        ],
        phrases,
    )
    stats = phrase_stats(result)
    # spans of 2,2,3,3 tokens over two passages with 1 and 3 spans
    assert stats.phrase_span_count == 4
    assert stats.avg_tokens_per_phrase == pytest.approx(2.5)
    assert stats.avg_phrases_per_passage == pytest.approx(2.0)


@settings(max_examples=100, deadline=None)
@given(
    queries=st.lists(
        st.text(alphabet="abcdefg ", min_size=1, max_size=30), min_size=1, max_size=5
    ),
    threshold=st.floats(min_value=0.0, max_value=1.0),
)
def test_mine_stats_arithmetic_property(queries, threshold):
    log = [
        QueryLogRecord(query=q, lang="en", titles=(q, "abc defg"))
        for q in queries
    ]
    entries, stats = mine(log, MiningConfig(threshold=threshold), EN_STOPS)
    assert stats.query_count == len(log)
    assert stats.phrase_count == len(entries)
    if stats.query_count:
        assert stats.phrases_per_query == stats.phrase_count / stats.query_count
    for e in entries:
        assert e.score >= threshold
