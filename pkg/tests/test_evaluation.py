from __future__ import annotations

import random

import pytest

from factgen.evaluation import EvalError, resolve_raw_triple, score_predictions
from factgen.kb import Triple
from factgen.linearize import RawTriple


def raw(head, rel, tail):
    return RawTriple(head, rel, tail)


T_UK_CAP = Triple("Q145", "P36", "Q84")
T_LON_CTRY = Triple("Q84", "P17", "Q145")
T_IT_CAP = Triple("Q38", "P36", "Q220")
T_SF_INC = Triple("Q62", "P571", "1776")

R_UK_CAP = raw("United Kingdom", "capital", "London")
R_LON_CTRY = raw("London", "country", "United Kingdom")
R_IT_CAP = raw("Italy", "capital", "Rome")
R_SF_INC = raw("San Francisco", "inception", "1776")


def test_resolve_raw_triple_happy_path(small_kb):
    assert resolve_raw_triple(R_UK_CAP, small_kb) == T_UK_CAP


def test_resolve_year_tail_as_literal(small_kb):
    assert resolve_raw_triple(R_SF_INC, small_kb) == T_SF_INC


def test_resolve_unknown_label_is_none(small_kb):
    assert resolve_raw_triple(raw("Atlantis", "capital", "London"), small_kb) is None
    assert resolve_raw_triple(raw("Italy", "borders", "London"), small_kb) is None
    assert resolve_raw_triple(raw("Italy", "capital", "Mu"), small_kb) is None


def test_resolve_prefers_entity_title_over_year_reading():
    from factgen.kb import KbStore

    kb = KbStore.from_records(
        entities=[("Q2018", "2018"), ("Q1", "A")],
        relations=[("P1", "r", "")],
        triples=[("Q1", "P1", "Q2018")],
    )
    resolved = resolve_raw_triple(raw("A", "r", "2018"), kb)
    assert resolved == Triple("Q1", "P1", "Q2018")


def test_perfect_predictions(small_kb):
    gold = {"a": [T_UK_CAP, T_LON_CTRY], "b": [T_IT_CAP], "neg": []}
    pred = {"a": [R_UK_CAP, R_LON_CTRY], "b": [R_IT_CAP], "neg": []}
    report = score_predictions(pred, gold, small_kb)
    assert report.precision == report.recall == report.f1 == 1.0
    assert report.accuracy_negative == 1.0
    assert report.empty_positive_rate == 0.0
    assert report.counts == (3, 0, 0, 2, 1)


def test_all_empty_predictions(small_kb):
    gold = {"a": [T_UK_CAP], "b": [T_IT_CAP], "n1": [], "n2": []}
    pred = {"a": [], "b": [], "n1": [], "n2": []}
    report = score_predictions(pred, gold, small_kb)
    assert report.precision == 0.0
    assert report.recall == 0.0
    assert report.f1 == 0.0
    assert report.accuracy_negative == 1.0
    assert report.empty_positive_rate == 1.0


def test_hand_counted_fixture(small_kb):
    # 4 instances, 3 tp, 2 fp, 1 fn -> P=0.6, R=0.75, F1=2/3.
    gold = {
        "i1": [T_UK_CAP, T_LON_CTRY],
        "i2": [T_IT_CAP, T_SF_INC],
        "i3": [],
        "i4": [],
    }
    pred = {
        "i1": [R_UK_CAP, R_LON_CTRY, raw("Italy", "country", "Rome")],  # 2 tp, 1 fp
        "i2": [R_IT_CAP, raw("Ghidorah", "capital", "Tokyo")],  # 1 tp, 1 fp (unresolvable), 1 fn
        "i3": [],
        "i4": [],
    }
    report = score_predictions(pred, gold, small_kb)
    assert report.precision == pytest.approx(0.6)
    assert report.recall == pytest.approx(0.75)
    assert report.f1 == pytest.approx(2 / 3, abs=1e-9)
    assert report.counts == (3, 2, 1, 2, 2)
    assert report.accuracy_negative == 1.0
    assert report.empty_positive_rate == 0.0


def test_duplicate_predictions_are_collapsed(small_kb):
    gold = {"a": [T_UK_CAP]}
    pred = {"a": [R_UK_CAP, R_UK_CAP, R_UK_CAP]}
    report = score_predictions(pred, gold, small_kb)
    assert report.counts.tp == 1
    assert report.counts.fp == 0
    assert report.precision == 1.0


def test_unresolvable_duplicates_count_once(small_kb):
    gold = {"a": []}
    pred = {"a": [raw("Nowhere", "capital", "Utopia")] * 4}
    report = score_predictions(pred, gold, small_kb)
    assert report.counts.fp == 1
    # A hallucinated prediction on a negative instance is not "empty".
    assert report.accuracy_negative == 0.0


def test_permutation_invariance(small_kb):
    gold = {
        "i1": [T_UK_CAP, T_LON_CTRY],
        "i2": [T_IT_CAP],
        "i3": [],
    }
    pred = {
        "i1": [R_LON_CTRY, R_UK_CAP],
        "i2": [R_SF_INC, R_IT_CAP],
        "i3": [],
    }
    base = score_predictions(pred, gold, small_kb)
    rng = random.Random(5)
    for _ in range(10):
        ids = list(gold)
        rng.shuffle(ids)
        gold_shuffled = {i: list(reversed(gold[i])) for i in ids}
        pred_shuffled = {i: list(reversed(pred[i])) for i in ids}
        again = score_predictions(pred_shuffled, gold_shuffled, small_kb)
        assert again == base


def test_adding_correct_prediction_never_lowers_recall(small_kb):
    gold = {"a": [T_UK_CAP, T_LON_CTRY]}
    before = score_predictions({"a": [R_UK_CAP]}, gold, small_kb)
    after = score_predictions({"a": [R_UK_CAP, R_LON_CTRY]}, gold, small_kb)
    assert after.recall >= before.recall
    # Adding a wrong prediction never raises precision.
    worse = score_predictions(
        {"a": [R_UK_CAP, raw("Italy", "country", "Rome")]}, gold, small_kb
    )
    assert worse.precision <= before.precision


def test_f1_consistent_with_p_and_r(small_kb):
    gold = {"a": [T_UK_CAP, T_LON_CTRY], "b": [T_IT_CAP]}
    pred = {"a": [R_UK_CAP], "b": [R_IT_CAP, R_SF_INC]}
    report = score_predictions(pred, gold, small_kb)
    p, r = report.precision, report.recall
    assert abs(report.f1 - (2 * p * r / (p + r))) < 1e-9


def test_id_mismatch_is_an_error(small_kb):
    with pytest.raises(EvalError):
        score_predictions({"a": []}, {"b": []}, small_kb)


def test_gold_duplicates_use_set_semantics(small_kb):
    gold = {"a": [T_UK_CAP, T_UK_CAP]}
    pred = {"a": [R_UK_CAP]}
    report = score_predictions(pred, gold, small_kb)
    assert report.recall == 1.0
    assert report.counts.fn == 0


def test_report_serialization_roundtrip(small_kb):
    gold = {"a": [T_UK_CAP], "n": []}
    pred = {"a": [R_UK_CAP], "n": []}
    report = score_predictions(pred, gold, small_kb)
    data = report.to_dict()
    assert data["precision"] == 1.0
    assert data["counts"]["tp"] == 1
    table = report.format_table()
    assert "precision" in table and "1.0000" in table
