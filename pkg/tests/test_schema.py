from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from genie.schema import (
    BOOLEAN,
    STRING_LIST,
    ExtractionSchema,
    FieldSpec,
    MissingField,
    NotAnObject,
    SchemaError,
    TypeMismatch,
    render_format_instructions,
    validate,
)
from genie.prompts import impacts_task, locations_task, relevance_task

IMPACT_BLOCK = """Format instructions:
{
    "agriculture": <true or false>,
    "livestock": <true or false>,
    "hydrological_resources": <true or false>,
    "energy": <true or false>
}
Make sure to include a single JSON in your response instead of multiple JSONs."""


def test_impact_block_golden():
    assert render_format_instructions(impacts_task().schema) == IMPACT_BLOCK


def test_relevance_block():
    block = render_format_instructions(relevance_task().schema)
    assert '{\n    "drought": <true or false>\n}' in block


def test_list_block_uses_item_placeholder():
    block = render_format_instructions(locations_task().schema)
    assert '"response": [\n        <province>,\n        ...\n    ]' in block
    assert '"provinces": [' in render_format_instructions(locations_task(field_name="provinces").schema)


def test_validate_examples():
    s = impacts_task().schema
    rec = validate(s, {"agriculture": True, "livestock": False, "hydrological_resources": True, "energy": False})
    assert rec.values["hydrological_resources"] is True
    with pytest.raises(MissingField) as ei:
        validate(s, {"agriculture": True, "livestock": False, "hydrological_resources": True})
    assert ei.value.name == "energy"
    with pytest.raises(TypeMismatch) as ei:
        validate(relevance_task().schema, {"drought": "yes"})
    assert (ei.value.name, ei.value.expected, ei.value.found) == ("drought", BOOLEAN, "string")
    with pytest.raises(NotAnObject):
        validate(s, [1, 2])


def test_extra_keys_warn_not_fail():
    rec = validate(relevance_task().schema, {"drought": False, "why": "none"})
    assert set(rec.values) == {"drought"}
    assert rec.warnings


def test_string_list_items_must_be_strings():
    s = locations_task().schema
    assert validate(s, {"response": ["Madrid"]}).values["response"] == ("Madrid",)
    with pytest.raises(TypeMismatch):
        validate(s, {"response": ["Madrid", 3]})


@pytest.mark.parametrize("bad", ["", "Agri", "1x", "a-b"])
def test_bad_field_names(bad):
    with pytest.raises(SchemaError):
        FieldSpec(bad, BOOLEAN)


def test_schema_rejects_duplicates_and_empty():
    with pytest.raises(SchemaError):
        ExtractionSchema("x", (FieldSpec("a", BOOLEAN), FieldSpec("a", BOOLEAN)))
    with pytest.raises(SchemaError):
        ExtractionSchema("x", ())


def test_dict_round_trip():
    s = impacts_task().schema
    assert ExtractionSchema.from_dict(s.to_dict()) == s


names = st.from_regex(r"[a-z_][a-z0-9_]{0,6}", fullmatch=True)
json_leaf = st.one_of(st.booleans(), st.integers(), st.text(max_size=3), st.none(),
                      st.lists(st.text(max_size=3), max_size=3), st.lists(st.integers(), min_size=1, max_size=2))


@st.composite
def schema_and_value(draw):
    fnames = draw(st.lists(names, min_size=1, max_size=5, unique=True))
    kinds = [draw(st.sampled_from([BOOLEAN, STRING_LIST])) for _ in fnames]
    schema = ExtractionSchema("s", tuple(FieldSpec(n, k) for n, k in zip(fnames, kinds)))
    value = draw(st.dictionaries(st.sampled_from(fnames + ["extra_key"]), json_leaf, max_size=7))
    return schema, value


def _conforms(schema, value):
    for f in schema.fields:
        if f.name not in value:
            return False
        v = value[f.name]
        if f.kind == BOOLEAN and not isinstance(v, bool):
            return False
        if f.kind == STRING_LIST and not (isinstance(v, list) and all(isinstance(x, str) for x in v)):
            return False
    return True


@given(schema_and_value())
def test_validate_iff_conforms(sv):
    schema, value = sv
    try:
        rec = validate(schema, value)
    except (MissingField, TypeMismatch):
        assert not _conforms(schema, value)
    else:
        assert _conforms(schema, value)
        assert set(rec.values) == set(schema.field_names)


@given(schema_and_value())
def test_render_is_deterministic(sv):
    schema, _ = sv
    twin = ExtractionSchema.from_dict(schema.to_dict())
    assert render_format_instructions(schema) == render_format_instructions(twin)
