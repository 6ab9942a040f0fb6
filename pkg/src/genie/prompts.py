"""Prompt assembly from template files, task variables and strategy flags."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping

import yaml

from .schema import BOOLEAN, STRING_LIST, ExtractionSchema, FieldSpec

JGEN_PROMPT = "prompt"
JGEN_TOOL = "tool"

_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")


class PromptError(ValueError):
    pass


class MissingDescription(PromptError):
    def __init__(self, category: str):
        self.category = category
        super().__init__(f"no description for impact category {category!r}")


class MissingPlaceholder(PromptError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"template placeholder {{{name}}} has no value")


def load_template(name: str) -> str:
    """Read a template shipped with the package, e.g. ``"impacts/base.txt"``."""
    return resources.files("genie").joinpath("templates", name).read_text(encoding="utf-8")


def _read(ref: str) -> str:
    if ref.startswith("builtin:"):
        return load_template(ref[len("builtin:"):])
    return Path(ref).read_text(encoding="utf-8")


def substitute(template: str, values: Mapping[str, str]) -> str:
    """Single-pass placeholder substitution.

    Placeholder-shaped text inside substituted values is left alone. Braces that
    do not name a lowercase identifier (JSON examples, say) are not placeholders.
    """

    def repl(m: re.Match) -> str:
        key = m.group(1)
        if key not in values:
            raise MissingPlaceholder(key)
        return values[key]

    return _PLACEHOLDER_RE.sub(repl, template)


def placeholders(template: str) -> set[str]:
    return set(_PLACEHOLDER_RE.findall(template))


@dataclass(frozen=True)
class StrategyFlags:
    sum: bool = False
    cot: bool = False
    sc: bool = False
    desc: bool = False
    rparse: bool = False
    jgen: str = JGEN_PROMPT

    def __post_init__(self):
        if self.jgen not in (JGEN_PROMPT, JGEN_TOOL):
            raise ValueError(f"jgen must be 'prompt' or 'tool', got {self.jgen!r}")

    def as_dict(self) -> dict:
        return {
            "sum": self.sum, "cot": self.cot, "sc": self.sc,
            "desc": self.desc, "rparse": self.rparse, "jgen": self.jgen,
        }


FLAG_NAMES = ("sum", "cot", "sc", "desc", "rparse")


@dataclass(frozen=True)
class TaskSpec:
    name: str
    event: str
    schema: ExtractionSchema
    base_template: str
    parsing_template: str
    impacts: tuple[str, ...] = ()
    impact_descriptions: Mapping[str, str] = field(default_factory=dict)
    base_template_with_descriptions: str | None = None
    cot_instruction: str = field(default_factory=lambda: load_template("cot.txt"))
    summary_template: str = field(default_factory=lambda: load_template("summary.txt"))
    self_criticism_template: str = field(
        default_factory=lambda: load_template("self_criticism.txt")
    )

    def __post_init__(self):
        object.__setattr__(self, "impacts", tuple(self.impacts))
        object.__setattr__(self, "impact_descriptions", dict(self.impact_descriptions))

    @property
    def supports_desc(self) -> bool:
        return self.base_template_with_descriptions is not None


def format_impacts(impacts) -> str:
    return ", ".join(impacts)


def format_impact_descriptions(impacts, descriptions: Mapping[str, str]) -> str:
    blocks = []
    for name in impacts:
        if not descriptions.get(name):
            raise MissingDescription(name)
        label = name[:1].upper() + name[1:]
        blocks.append(f"{label}: {descriptions[name].strip()}")
    return "\n\n".join(blocks)


def _task_values(task: TaskSpec, text: str, date: str | None, with_descriptions: bool) -> dict:
    values = {"event": task.event, "impacts": format_impacts(task.impacts), "text": text}
    if with_descriptions:
        values["impact_descriptions"] = format_impact_descriptions(
            task.impacts, task.impact_descriptions
        )
    if date is not None:
        values["date"] = date
    return values


def _append(prompt: str, block: str) -> str:
    return prompt.rstrip("\n") + "\n\n" + block


def assemble_extraction_prompt(
    task: TaskSpec,
    article_text: str,
    flags: StrategyFlags,
    format_block: str | None = None,
    date: str | None = None,
) -> str:
    if not article_text:
        raise PromptError("article text is empty")
    if flags.desc:
        if not task.supports_desc:
            raise PromptError(f"task {task.name!r} has no description template")
        template = task.base_template_with_descriptions
    else:
        template = task.base_template
    needs_desc = "impact_descriptions" in placeholders(template)
    prompt = substitute(template, _task_values(task, article_text, date, needs_desc))
    if not flags.rparse and flags.jgen == JGEN_PROMPT:
        if format_block is None:
            raise PromptError("single-step prompting needs a format block")
        prompt = _append(prompt, format_block)
    if flags.cot:
        prompt = _append(prompt, task.cot_instruction)
    return prompt


def assemble_summary_prompt(article_text: str, template: str | None = None) -> str:
    if not article_text:
        raise PromptError("article text is empty")
    return substitute(template or load_template("summary.txt"), {"text": article_text})


def assemble_self_criticism_prompt(prompt: str, response: str, template: str | None = None) -> str:
    if not prompt or not response:
        raise PromptError("self-criticism needs both a prompt and a response")
    return substitute(
        template or load_template("self_criticism.txt"), {"prompt": prompt, "response": response}
    )


def assemble_parsing_prompt(
    task: TaskSpec,
    free_text_response: str,
    format_block: str | None,
    flags: StrategyFlags | None = None,
) -> str:
    """Reformatting prompt for two-step parsing.

    The format block is omitted only when the schema travels as a tool signature.
    """
    if not free_text_response:
        raise PromptError("response to reformat is empty")
    needs_desc = "impact_descriptions" in placeholders(task.parsing_template)
    prompt = substitute(
        task.parsing_template, _task_values(task, free_text_response, None, needs_desc)
    )
    if format_block:
        prompt = _append(prompt, format_block)
    return prompt


# Built-in tasks


def category_field_name(category: str) -> str:
    return re.sub(r"[^a-z0-9_]", "_", category.strip().lower().replace(" ", "_"))


IMPACT_CATEGORIES = ("agriculture", "livestock", "hydrological resources", "energy")


def impacts_task(event: str = "drought", impacts=IMPACT_CATEGORIES, descriptions=None) -> TaskSpec:
    if descriptions is None:
        descriptions = yaml.safe_load(load_template("impacts/descriptions.yaml"))
    schema = ExtractionSchema(
        name="impacts",
        fields=tuple(FieldSpec(category_field_name(c), BOOLEAN) for c in impacts),
    )
    return TaskSpec(
        name="impacts",
        event=event,
        schema=schema,
        impacts=tuple(impacts),
        impact_descriptions=descriptions,
        base_template=load_template("impacts/base.txt"),
        base_template_with_descriptions=load_template("impacts/base_descriptions.txt"),
        parsing_template=load_template("impacts/parsing.txt"),
    )


def relevance_task(event: str = "drought") -> TaskSpec:
    schema = ExtractionSchema(name="relevance", fields=(FieldSpec(category_field_name(event), BOOLEAN),))
    return TaskSpec(
        name="relevance",
        event=event,
        schema=schema,
        base_template=load_template("relevance/base.txt"),
        parsing_template=load_template("relevance/parsing.txt"),
    )


def locations_task(event: str = "drought", field_name: str = "response") -> TaskSpec:
    """Province extraction task.

    The output figure names the list field ``response`` while the task prose
    calls it ``provinces``; both are accepted via ``field_name``.
    """
    if field_name not in ("response", "provinces"):
        raise ValueError("field_name must be 'response' or 'provinces'")
    schema = ExtractionSchema(
        name="locations", fields=(FieldSpec(field_name, STRING_LIST, item="province"),)
    )
    return TaskSpec(
        name="locations",
        event=event,
        schema=schema,
        base_template=load_template("locations/base.txt"),
        parsing_template=load_template("locations/parsing.txt"),
    )


PRESETS = {"impacts": impacts_task, "relevance": relevance_task, "locations": locations_task}


def task_from_config(cfg: Mapping) -> TaskSpec:
    """Build a TaskSpec from the ``task`` section of a run configuration.

    ``preset`` selects a built-in task; ``templates``, ``descriptions_file``,
    ``impacts`` and ``schema`` override its parts.
    """
    cfg = dict(cfg or {})
    preset = cfg.get("preset", "impacts")
    if preset not in PRESETS:
        raise ValueError(f"unknown task preset {preset!r}")
    event = cfg.get("event", "drought")
    if preset == "impacts":
        descriptions = None
        if cfg.get("descriptions_file"):
            descriptions = yaml.safe_load(_read(cfg["descriptions_file"]))
        task = impacts_task(event, tuple(cfg.get("impacts", IMPACT_CATEGORIES)), descriptions)
    elif preset == "locations":
        task = locations_task(event, cfg.get("field_name", "response"))
    else:
        task = relevance_task(event)

    overrides: dict = {}
    templates = cfg.get("templates") or {}
    for key in ("base", "base_with_descriptions", "parsing", "summary", "self_criticism", "cot"):
        if key in templates:
            attr = {
                "base": "base_template",
                "base_with_descriptions": "base_template_with_descriptions",
                "parsing": "parsing_template",
                "summary": "summary_template",
                "self_criticism": "self_criticism_template",
                "cot": "cot_instruction",
            }[key]
            overrides[attr] = _read(templates[key])
    if cfg.get("schema"):
        overrides["schema"] = ExtractionSchema.from_dict(cfg["schema"])
    if overrides:
        task = TaskSpec(**{**task.__dict__, **overrides})
    return task
