from __future__ import annotations

import json
import random
from collections import Counter
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from genie.corpus import (
    EmptyInput,
    LabeledArticle,
    NewsArticle,
    cohens_kappa,
    load_labels,
    multilabel_kappa,
    read_corpus,
    stratified_split,
    write_corpus,
)

from _fixtures import SPLIT_EXPECTED, split_dataset


def test_read_corpus(tmp_path):
    p = tmp_path / "c.jsonl"
    lines = [
        {"id": "x1", "headline": "H", "articleBody": "B", "datePublished": "2023-05-10T08:00:00Z", "url": "u1"},
        {"headline": "H2", "articleBody": "B2", "url": "https://e.org/2"},
        {"id": "x1", "articleBody": "dup"},
        {"id": "x3", "headline": "no body"},
    ]
    p.write_text("\n".join(json.dumps(x) for x in lines) + "\nnot json\n", encoding="utf-8")
    arts, errors = read_corpus(p)
    assert [a.id for a in arts][0] == "x1" and arts[2].id == "x1-2"
    assert len(arts[1].id) == 12
    assert arts[0].publication_date.isoformat() == "2023-05-10"
    assert arts[0].text == "H\n\nB"
    assert [e.line for e in errors] == [4, 5]


def test_corpus_round_trip(tmp_path):
    arts = [NewsArticle("a", "Título", "Cuerpo ñ", None, "u")]
    write_corpus(arts, tmp_path / "o.jsonl")
    assert read_corpus(tmp_path / "o.jsonl")[0] == arts


def test_load_labels_kinds(tmp_path):
    p = tmp_path / "l.csv"
    p.write_text("article_id,agriculture,provinces\na,1,Madrid;Sevilla\nb,0,\n", encoding="utf-8")
    labels = load_labels(p)
    assert labels["a"] == {"agriculture": True, "provinces": frozenset({"Madrid", "Sevilla"})}
    assert labels["b"]["provinces"] == frozenset()


def test_split_replays_published_totals():
    val, test, excluded = stratified_split(split_dataset(), 0.7, seed=0)
    assert (len(val), len(test), len(excluded)) == (269, 117, 0)
    for label, (v, t) in SPLIT_EXPECTED.items():
        assert sum(a.labels[label] for a in val) == v
        assert sum(a.labels[label] for a in test) == t


def test_largest_remainder_option():
    val, test, _ = stratified_split(split_dataset(), 0.7, rounding="largest_remainder")
    assert len(val) + len(test) == 386
    assert len(val) == 270  # global target round(0.7 * 386)


def test_split_errors():
    with pytest.raises(EmptyInput):
        stratified_split([])
    with pytest.raises(ValueError):
        stratified_split(split_dataset(), 1.0)


@st.composite
def labeled(draw):
    n = draw(st.integers(1, 60))
    out = []
    for i in range(n):
        bits = draw(st.tuples(st.booleans(), st.booleans(), st.booleans()))
        out.append(LabeledArticle(f"id{i}", dict(zip("xyz", bits))))
    return out


@settings(max_examples=150, deadline=None)
@given(labeled(), st.integers(0, 10**6), st.sampled_from([0.5, 0.7, 0.8]))
def test_split_properties(data, seed, ratio):
    val, test, excl = stratified_split(data, ratio, seed)
    ids = [a.article_id for a in val + test + excl]
    assert sorted(ids) == sorted(a.article_id for a in data)
    assert len(set(ids)) == len(ids)
    assert (val, test, excl) == stratified_split(list(reversed(data)), ratio, seed)
    sizes = Counter(a.stratum() for a in data)
    vs = Counter(a.stratum() for a in val)
    for k, n in sizes.items():
        if n < 2:
            assert all(a.stratum() != k for a in val + test)
        else:
            assert abs(vs[k] - Fraction(str(ratio)) * n) <= 1


def test_split_seed_changes_members():
    data = [LabeledArticle(f"i{i}", {"x": i % 2 == 0}) for i in range(40)]
    a = stratified_split(data, seed=1)[0]
    b = stratified_split(data, seed=2)[0]
    assert len(a) == len(b) and a != b


def test_kappa_fixture():
    # 20 both-yes, 20 both-no, 5 yes/no, 5 no/yes
    a = [1] * 20 + [0] * 20 + [1] * 5 + [0] * 5
    b = [1] * 20 + [0] * 20 + [0] * 5 + [1] * 5
    assert cohens_kappa(a, b) == 0.6
    assert cohens_kappa(a, a) == 1.0
    assert cohens_kappa([1, 0, 1, 0], [0, 1, 0, 1]) == -1.0


def test_kappa_degenerate_marginals():
    # chance agreement 1 can only arise from identical constant vectors
    assert cohens_kappa([1, 1], [1, 1]) == 1.0
    assert cohens_kappa([0, 0, 0], [0, 0, 0]) == 1.0


def test_multilabel_kappa():
    rng = random.Random(3)
    a = [{"p": rng.random() < .5, "q": rng.random() < .5} for _ in range(30)]
    mean, std, per = multilabel_kappa(a, a, ["p", "q"])
    assert (mean, std) == (1.0, 0.0) and set(per) == {"p", "q"}
