from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from genie.prompts import (
    MissingDescription,
    MissingPlaceholder,
    PromptError,
    StrategyFlags,
    TaskSpec,
    assemble_extraction_prompt,
    assemble_parsing_prompt,
    assemble_self_criticism_prompt,
    assemble_summary_prompt,
    format_impact_descriptions,
    impacts_task,
    locations_task,
    relevance_task,
    substitute,
    task_from_config,
)
from genie.schema import render_format_instructions

COT = "Reason step by step and explain your reasoning before giving the final answer."

BASE_FILLED = (
    "You are an expert in environmental analysis. Your task is to analyze the following news article and "
    "determine whether it reports or mentions any impact caused by drought on specific aspects.\n\n"
    "The aspects to consider are: agriculture, livestock, hydrological resources, energy\n\n"
    "Please carefully read the article and determine for each aspect whether there is a reported impact "
    "caused specifically by drought. Do not infer impacts unless they are clearly stated or strongly "
    "implied in the text.\n\n"
    "Article to analyze:\nLorem ipsum"
)


@pytest.fixture(scope="module")
def task():
    return impacts_task()


def test_extraction_flags_off_golden(task):
    fmt = render_format_instructions(task.schema)
    got = assemble_extraction_prompt(task, "Lorem ipsum", StrategyFlags(), fmt)
    assert got == BASE_FILLED + "\n\n" + fmt


def test_cot_appends_one_sentence(task):
    fmt = render_format_instructions(task.schema)
    plain = assemble_extraction_prompt(task, "Lorem ipsum", StrategyFlags(), fmt)
    cot = assemble_extraction_prompt(task, "Lorem ipsum", StrategyFlags(cot=True), fmt)
    assert cot == plain + "\n\n" + COT


def test_rparse_and_tool_drop_format_block(task):
    fmt = render_format_instructions(task.schema)
    assert assemble_extraction_prompt(task, "Lorem ipsum", StrategyFlags(rparse=True), fmt) == BASE_FILLED
    assert assemble_extraction_prompt(task, "Lorem ipsum", StrategyFlags(jgen="tool"), fmt) == BASE_FILLED


def test_desc_embeds_all_descriptions(task):
    got = assemble_extraction_prompt(task, "Lorem ipsum", StrategyFlags(desc=True, rparse=True))
    for name, text in task.impact_descriptions.items():
        assert f"{name[0].upper()}{name[1:]}: {text.strip()}" in got
    assert got.endswith("Lorem ipsum")


def test_desc_missing_description():
    t = impacts_task(descriptions={"agriculture": "crops"})
    with pytest.raises(MissingDescription) as ei:
        assemble_extraction_prompt(t, "x", StrategyFlags(desc=True, rparse=True))
    assert ei.value.category == "livestock"


def test_desc_on_task_without_variant():
    with pytest.raises(PromptError):
        assemble_extraction_prompt(relevance_task(), "x", StrategyFlags(desc=True, rparse=True))


def test_summary_prompt():
    assert assemble_summary_prompt("Lorem ipsum") == "Summarize the following article.\n\nText:\nLorem ipsum"
    body = "para one\n\n  para two\n"
    assert assemble_summary_prompt(body).endswith(body)
    with pytest.raises(PromptError):
        assemble_summary_prompt("")


def test_self_criticism_single_pass():
    got = assemble_self_criticism_prompt("P {response}", '{"a": true}')
    assert got.startswith("Given the following prompt:\nP {response}\n\nAnd the following response:\n{\"a\": true}")
    assert "Analyze the response and determine whether it is correct" in got


def test_parsing_prompts():
    imp = impacts_task()
    fmt = render_format_instructions(imp.schema)
    got = assemble_parsing_prompt(imp, "the crops died", fmt)
    assert got.startswith("Extract whether the following LLM response says the article mentions an impact of drought")
    assert "Agriculture: " in got and got.endswith(fmt)
    rel = relevance_task()
    assert assemble_parsing_prompt(rel, "yes", render_format_instructions(rel.schema)).startswith(
        "Extract whether the following LLM response says the article mentions an event related to drought."
    )
    loc = locations_task()
    assert "infer the provinces" in assemble_parsing_prompt(loc, "Madrid", render_format_instructions(loc.schema))


def test_date_placeholder_optional():
    t = TaskSpec(name="t", event="drought", schema=relevance_task().schema,
                 base_template="On {date}: {text}", parsing_template="{text}")
    assert assemble_extraction_prompt(t, "x", StrategyFlags(rparse=True), date="2023-01-01") == "On 2023-01-01: x"
    with pytest.raises(MissingPlaceholder):
        assemble_extraction_prompt(t, "x", StrategyFlags(rparse=True))


def test_description_format():
    assert format_impact_descriptions(["a b", "c"], {"a b": " one ", "c": "two"}) == "A b: one\n\nC: two"


def test_task_from_config_overrides(tmp_path):
    tpl = tmp_path / "base.txt"
    tpl.write_text("Event {event}. {text}", encoding="utf-8")
    t = task_from_config({"preset": "relevance", "event": "flood", "templates": {"base": str(tpl)}})
    assert t.schema.field_names == ("flood",)
    assert assemble_extraction_prompt(t, "body", StrategyFlags(rparse=True)) == "Event flood. body"
    loc = task_from_config({"preset": "locations", "field_name": "provinces"})
    assert loc.schema.field_names == ("provinces",)


placeholder_text = st.text(alphabet=st.sampled_from(list("{}abtexrponsd _\n")), max_size=40)


@given(placeholder_text, placeholder_text)
def test_substitution_is_single_pass(a, b):
    out = substitute("[{prompt}|{response}]", {"prompt": a, "response": b})
    assert out == f"[{a}|{b}]"


@given(st.text(min_size=1, max_size=60).filter(str.strip), st.booleans(), st.booleans(), st.booleans())
def test_flags_never_touch_article(text, cot, desc, rparse):
    t = impacts_task()
    fmt = render_format_instructions(t.schema)
    p = assemble_extraction_prompt(t, text, StrategyFlags(cot=cot, desc=desc, rparse=rparse), fmt)
    assert text in p
    assert p == assemble_extraction_prompt(t, text, StrategyFlags(cot=cot, desc=desc, rparse=rparse), fmt)
