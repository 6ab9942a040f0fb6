from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from genie.jsonx import MalformedJson, ParseOutcome, decode_strict, extract_json, find_candidates
from genie.schema import validate

from _fixtures import FULL, IMPACTS, PARSE_CASES, RELEVANCE


@pytest.mark.parametrize("label,text,schema,expected", PARSE_CASES, ids=[c[0] for c in PARSE_CASES])
def test_corpus(label, text, schema, expected):
    out = extract_json(text, schema)
    assert out.status == expected, out.detail
    if out.ok:
        s, e = out.raw_span
        assert validate(schema, decode_strict(text[s:e])) == out.value


def test_first_valid_wins():
    out = extract_json('{"drought": true} and also {"drought": false}', RELEVANCE)
    assert out.value.values == {"drought": True}


def test_missing_field_detail():
    out = extract_json('{"agriculture": true, "livestock": false, "hydrological_resources": false}', IMPACTS)
    assert "energy" in out.detail


def test_whole_text_object_span():
    out = extract_json(FULL, IMPACTS)
    assert out.raw_span == (0, len(FULL))


@pytest.mark.parametrize("span", ["{'a': 1}", '{"a": 1 // note}', '{"a": 1,}', '{"a": Infinity}'])
def test_decode_strict_rejects(span):
    with pytest.raises(MalformedJson):
        decode_strict(span)


def test_decode_strict_accepts():
    assert decode_strict('{"a": [1, 2]}') == {"a": [1, 2]}


def test_outcome_invariant():
    with pytest.raises(ValueError):
        ParseOutcome("ok")
    with pytest.raises(ValueError):
        ParseOutcome("weird")


def test_candidates_document_order():
    text = 'a {"x": 1} b ```json\n{"y": 2}\n``` c {"z": 3}'
    spans = find_candidates(text)
    assert [text[s:e] for s, e in spans] == ['{"x": 1}', '{"y": 2}', '{"z": 3}']


noise = st.text(alphabet=st.characters(blacklist_categories=("Cs",)), max_size=40)


@given(noise, noise)
def test_appending_after_ok_is_stable(prefix, suffix):
    base = prefix + ' {"drought": true} '
    first = extract_json(base, RELEVANCE)
    if first.ok:
        again = extract_json(base + suffix, RELEVANCE)
        assert again.ok and again.raw_span == first.raw_span and again.value == first.value


@given(noise)
def test_deterministic(text):
    assert extract_json(text, RELEVANCE) == extract_json(text, RELEVANCE)


@given(st.booleans(), noise)
def test_never_fabricates(flag, prose):
    text = prose + (' {"drought": %s}' % ("true" if flag else "false"))
    out = extract_json(text, RELEVANCE)
    if out.ok:
        s, e = out.raw_span
        assert validate(RELEVANCE, decode_strict(text[s:e])) == out.value
