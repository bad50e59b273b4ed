import random
import re
import string
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_instance
from xmrc.metrics import (
    NormalizationPolicy,
    compare_runs,
    evaluate,
    exact_match,
    f1,
    normalize,
)

POLICY = NormalizationPolicy()


def test_exact_match_identity():
    assert exact_match("king David", ["king David"], POLICY) == 1


def test_exact_match_superset_is_zero():
    assert exact_match("David, except usurper Athaliah", ["king David"], POLICY) == 0


def test_exact_match_normalization():
    assert exact_match("The Answer", ["answer"], POLICY) == 1


def test_exact_match_any_gold():
    assert exact_match("b", ["a", "b"], POLICY) == 1


def test_exact_match_empty_golds_rejected():
    with pytest.raises(ValueError):
        exact_match("x", [], POLICY)


def test_f1_dosage_case():
    # precision 1.0 (both pred tokens in gold), recall 2/4
    assert f1("100 mg", ["50 to 100 mg"], POLICY) == pytest.approx(2 / 3, abs=1e-6)


def test_f1_identity():
    assert f1("king David", ["king David"], POLICY) == 1.0


def test_f1_max_over_golds():
    golds = ["a b c d e", "x y"]
    pred = "x y"
    assert f1(pred, golds, POLICY) == 1.0


def test_f1_no_overlap():
    assert f1("alpha", ["beta"], POLICY) == 0.0


def test_f1_multiset_semantics():
    # repeated token counts once per occurrence in the gold
    assert f1("x x", ["x y"], POLICY) == pytest.approx(0.5)


def test_f1_symmetry_single_gold():
    for a, b in [("one two three", "two three four"), ("x", "x y")]:
        assert f1(a, [b], POLICY) == pytest.approx(f1(b, [a], POLICY))


def test_normalize_idempotent_fuzz():
    rng = random.Random(0)
    alphabet = string.ascii_letters + string.digits + string.punctuation + " \tÄöü“”¡"
    for _ in range(1000):
        s = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 30)))
        once = normalize(s, POLICY)
        assert normalize(once, POLICY) == once


def test_normalize_unicode_punctuation():
    assert normalize("«答案»", POLICY.for_lang("zh")) == "答案"


def test_article_stripping_is_english_only():
    assert normalize("the tree", POLICY.for_lang("en")) == "tree"
    assert normalize("the tree", POLICY.for_lang("de")) == "the tree"


def _brute_force_em_f1(pred, golds, policy):
    def norm_tokens(s):
        return normalize(s, policy).split()

    em = 0
    for g in golds:
        if normalize(pred, policy) == normalize(g, policy):
            em = 1
    best = 0.0
    for g in golds:
        p_toks, g_toks = norm_tokens(pred), norm_tokens(g)
        if not p_toks and not g_toks:
            best = max(best, 1.0)
            continue
        common = Counter(p_toks) & Counter(g_toks)
        overlap = sum(common.values())
        if overlap == 0:
            continue
        pr = overlap / len(p_toks)
        rc = overlap / len(g_toks)
        best = max(best, 2 * pr * rc / (pr + rc))
    return em, best


def test_against_brute_force_oracle():
    rng = random.Random(7)
    words = ["king", "david", "the", "100", "mg", "tree", "answer", "of", "a"]
    for _ in range(500):
        pred = " ".join(rng.choices(words, k=rng.randint(0, 5)))
        golds = [
            " ".join(rng.choices(words, k=rng.randint(1, 6)))
            for _ in range(rng.randint(1, 3))
        ]
        em_ref, f1_ref = _brute_force_em_f1(pred, golds, POLICY)
        assert exact_match(pred, golds, POLICY) == em_ref
        assert f1(pred, golds, POLICY) == pytest.approx(f1_ref, abs=1e-12)


def test_em_implies_f1():
    golds = ["the cherry tree"]
    pred = "cherry tree"
    if exact_match(pred, golds, POLICY):
        assert f1(pred, golds, POLICY) == 1.0


def _dataset():
    return [
        make_instance(id="e1", lang="en", answer="thirteen", answer_type="numeric"),
        make_instance(id="e2", lang="en", answer="players", answer_type="entity"),
        make_instance(id="d1", lang="de", answer="thirteen", answer_type="numeric"),
    ]


def test_evaluate_perfect_single():
    ds = [_dataset()[0]]
    report = evaluate({"e1": "thirteen"}, ds, POLICY, pivot="en")
    s = report.per_language["en"]
    assert (s.em, s.f1, s.n) == (1.0, 1.0, 1)
    assert report.gaps["en"] == (0.0, 0.0)


def test_evaluate_means():
    ds = _dataset()[:2]
    report = evaluate({"e1": "thirteen", "e2": "thirteen players extra x"}, ds, POLICY)
    s = report.per_language["en"]
    assert s.em == pytest.approx(0.5)
    f1_2 = f1("thirteen players extra x", ["players"], POLICY)
    assert s.f1 == pytest.approx((1.0 + f1_2) / 2)


def test_evaluate_gap_arithmetic():
    # en EM 62.4, es EM 49.8 -> gap exactly -12.6 points
    from xmrc.records import EvalReport, SliceScore

    en = SliceScore(em=0.624, f1=0.8, n=100)
    es = SliceScore(em=0.498, f1=0.7, n=100)
    gap_em = es.em - en.em
    assert gap_em * 100 == pytest.approx(-12.6)


def test_evaluate_missing_predictions_scored_zero():
    ds = _dataset()
    report = evaluate({"e1": "thirteen"}, ds, POLICY)
    assert report.missing_predictions == 2
    assert report.per_language["de"].em == 0.0


def test_evaluate_per_answer_type():
    ds = _dataset()
    preds = {"e1": "thirteen", "e2": "wrong", "d1": "thirteen"}
    report = evaluate(preds, ds, POLICY)
    assert report.per_answer_type["numeric"].em == 1.0
    assert report.per_answer_type["entity"].em == 0.0


def test_evaluate_pivot_gaps():
    ds = _dataset()
    preds = {"e1": "thirteen", "e2": "players", "d1": "wrong"}
    report = evaluate(preds, ds, POLICY, pivot="en")
    em_gap, f1_gap = report.gaps["de"]
    assert em_gap == pytest.approx(0.0 - 1.0)


def test_evaluate_matches_per_instance_loop():
    rng = random.Random(3)
    ds = []
    preds = {}
    words = ["one", "two", "three", "tree", "king"]
    for k in range(50):
        ans = rng.choice(words)
        filler = " ".join(rng.choices(["aa", "bb", "cc"], k=4))
        inst = make_instance(
            id=f"i{k}", lang=rng.choice(["en", "de"]),
            passage=f"{filler} {ans} {filler}", answer=ans,
            answer_type=rng.choice(["numeric", "entity", None]),
        )
        ds.append(inst)
        preds[inst.id] = rng.choice(words + [""])
    report = evaluate(preds, ds, POLICY, pivot="en")
    for lang in {i.lang for i in ds}:
        subset = [i for i in ds if i.lang == lang]
        policy = POLICY.for_lang(lang)
        ems = [exact_match(preds[i.id], [a.text for a in i.answers], policy) for i in subset]
        f1s = [f1(preds[i.id], [a.text for a in i.answers], policy) for i in subset]
        assert report.per_language[lang].em == pytest.approx(sum(ems) / len(ems), abs=1e-12)
        assert report.per_language[lang].f1 == pytest.approx(sum(f1s) / len(f1s), abs=1e-12)


def test_compare_runs_identical_zero_deltas():
    ds = _dataset()
    preds = {"e1": "thirteen", "e2": "players", "d1": "thirteen"}
    report = evaluate(preds, ds, POLICY)
    table = compare_runs([("base", report), ("same", report)])
    assert "+0.0" in table or "-0.0" in table
    assert table.startswith("| slice | base | same |")


def test_compare_runs_delta():
    from xmrc.records import EvalReport, SliceScore

    base = EvalReport(
        per_language={"fr": SliceScore(0.529, 0.782, 10)}, per_answer_type={}, gaps={}
    )
    improved = EvalReport(
        per_language={"fr": SliceScore(0.568, 0.788, 10)}, per_answer_type={}, gaps={}
    )
    table = compare_runs([("baseline", base), ("masked", improved)])
    assert "+3.9" in table


def test_compare_three_runs_two_delta_columns():
    ds = [_dataset()[0]]
    r = evaluate({"e1": "thirteen"}, ds, POLICY)
    table = compare_runs([("a", r), ("b", r), ("c", r)])
    header = table.splitlines()[0]
    assert header == "| slice | a | b | c |"


@settings(max_examples=200, deadline=None)
@given(st.text(max_size=50))
def test_normalize_idempotent_property(s):
    once = normalize(s, POLICY)
    assert normalize(once, POLICY) == once


@settings(max_examples=100, deadline=None)
@given(
    pred=st.text(alphabet="ab c", max_size=20),
    gold=st.text(alphabet="ab c", min_size=1, max_size=20),
)
def test_f1_bounds_property(pred, gold):
    v = f1(pred, [gold], POLICY)
    assert 0.0 <= v <= 1.0
    if exact_match(pred, [gold], POLICY):
        assert v == 1.0
