import json

import pytest
from hypothesis import given, strategies as st

from qaforge.evalkit import (
    SERBIAN,
    SQUAD_V1,
    MissingPrediction,
    NormalizationOptions,
    QuestionCategory,
    classify_question,
    dataset_stats,
    evaluate,
    exact_match,
    f1,
    normalize,
)


def test_normalize():
    assert normalize("U Smiljanu.") == "u smiljanu"
    assert normalize("the cat", NormalizationOptions(article_removal=True)) == "cat"
    assert normalize("the cat") == "the cat"
    assert normalize("Džon  Smit") == "džon smit"
    # unicode punctuation is stripped in the default mode only
    assert normalize("„Тесла“") == "тесла"
    assert normalize("„Tesla“", SQUAD_V1) == "„tesla“"


def test_exact_match():
    assert exact_match("Никола Тесла", ["Никола Тесла"]) == 1
    assert exact_match("u Smiljanu", ["Smiljanu"]) == 0
    assert exact_match("smiljanu.", ["Smiljanu"]) == 1
    assert exact_match("x", ["y", "X!"]) == 1


def test_f1():
    assert f1("u Smiljanu", ["Smiljanu"]) == pytest.approx(2 / 3)
    assert f1("Nikola Tesla", ["Nikola Tesla"]) == 1.0
    assert f1("a b", ["c d"]) == 0.0
    assert f1("...", ["!"]) == 1.0
    assert f1("...", ["x"]) == 0.0
    assert f1("a b", ["c", "b"]) == pytest.approx(2 / 3)


def test_gold_required():
    with pytest.raises(ValueError):
        f1("x", [])
    with pytest.raises(ValueError):
        exact_match("x", [])


@pytest.mark.parametrize("question,cat", [
    ("Koliko godina ima Tesla?", QuestionCategory.HOW_MANY),
    ("Gde se nalazi Smiljan?", QuestionCategory.WHERE),
    ("Zašto je otišao?", QuestionCategory.OTHER),
    ("Ko je Tesla?", QuestionCategory.WHO),
    ("Koja reka?", QuestionCategory.WHO),
    ("Šta je to?", QuestionCategory.WHAT),
    ("ŠTA je to?", QuestionCategory.WHAT),
    ("Kako?", QuestionCategory.HOW),
    ("Kada je rođen?", QuestionCategory.WHEN),
    ("Кад је рођен?", QuestionCategory.WHEN),
    ("Колико има?", QuestionCategory.HOW_MANY),
    ("Где?", QuestionCategory.WHERE),
    ("Ко?", QuestionCategory.WHO),
    ("Шта?", QuestionCategory.WHAT),
    ("A gde?", QuestionCategory.OTHER),
    ("", QuestionCategory.OTHER),
])
def test_classify(question, cat):
    assert classify_question(question) == cat


def _dataset(items):
    return {"version": "1.1", "data": [{"title": "t", "paragraphs": [
        {"context": ctx, "qas": [{"id": qid, "question": q, "answers": [{"text": a, "answer_start": 0}]}]}
        for qid, ctx, q, a in items]}]}


def test_evaluate_perfect():
    ds = _dataset([("1", "Tesla je", "Ko je?", "Tesla"), ("2", "1856 god", "Kada?", "1856")])
    rep = evaluate({"1": "Tesla", "2": "1856"}, ds)
    assert (rep.exact_match, rep.f1, rep.total) == (100.0, 100.0, 2)
    for row in rep.categories:
        if row.count:
            assert row.pal == row.ral


def test_evaluate_half():
    ds = _dataset([("1", "Tesla je", "Ko je?", "Tesla"), ("2", "1856 god", "Kada?", "1856")])
    rep = evaluate({"1": "Tesla", "2": "Edison"}, ds)
    assert f"{rep.exact_match:.2f}/{rep.f1:.2f}" == "50.00/50.00"


def test_missing_prediction():
    ds = _dataset([("1", "c", "Ko?", "c")])
    with pytest.raises(MissingPrediction):
        evaluate({}, ds)


@given(st.lists(st.tuples(st.sampled_from(["Ko", "Šta", "Kako", "Kad", "Gde", "Koliko", "Zašto", "Kome"]),
                          st.text(alphabet="ab ", max_size=6), st.text(alphabet="ab ", min_size=1, max_size=6)),
                min_size=1, max_size=25))
def test_overall_is_weighted_mean_of_categories(rows):
    items = [(str(k), "ctx", f"{w} pitanje?", gold) for k, (w, _, gold) in enumerate(rows)]
    preds = {str(k): pred for k, (_, pred, _) in enumerate(rows)}
    rep = evaluate(preds, _dataset(items))
    assert sum(r.count for r in rep.categories) == rep.total == len(rows)
    em = sum(r.em * r.count for r in rep.categories) / rep.total
    f = sum(r.f1 * r.count for r in rep.categories) / rep.total
    assert abs(em - rep.exact_match) < 1e-9 and abs(f - rep.f1) < 1e-9


def test_report_table_and_json():
    ds = _dataset([("1", "Tesla je", "Ko je?", "Tesla")])
    rep = evaluate({"1": "Tesla"}, ds)
    table = rep.format_table()
    assert table.splitlines()[0].split()[:3] == ["Question", "Type", "N"]
    assert "Overall" in table and "100.00" in table
    json.dumps(rep.to_json())


def test_dataset_stats():
    ds = {"data": [{"title": "t", "paragraphs": [
        {"context": "x" * 10, "qas": [{"id": "1", "question": "abc", "answers": [{"text": "ab", "answer_start": 0}]}]},
        {"context": "y" * 20, "qas": [{"id": "2", "question": "abcde", "answers": [{"text": "abcde", "answer_start": 0}]}]},
    ]}]}
    s = dataset_stats(ds)
    assert (s.samples, s.context_length, s.question_length, s.answer_length) == (2, 15, 4, 4)
    assert s.mean_answer_length == 3.5
