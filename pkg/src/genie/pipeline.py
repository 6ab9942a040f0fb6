"""Per-article extraction flow: summarize, extract, self-criticize, reformat, validate."""

from __future__ import annotations

import csv
import datetime as dt
import json
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .backend import (
    Backend,
    BackendError,
    BackendUnreachable,
    Completion,
    GenerationParams,
    ModelRef,
    NoToolCallReturned,
    ToolUnsupported,
)
from .corpus import NewsArticle
from .evalkit import BACKEND_FAILURE
from .jsonx import NO_JSON_FOUND, OK, SCHEMA_VIOLATION, ParseOutcome, extract_json
from .prompts import (
    FLAG_NAMES,
    JGEN_TOOL,
    PromptError,
    StrategyFlags,
    TaskSpec,
    assemble_extraction_prompt,
    assemble_parsing_prompt,
    assemble_self_criticism_prompt,
    assemble_summary_prompt,
)
from .schema import ExtractionSchema, ValidatedRecord, ValidationError, render_format_instructions, validate

SUMMARIZE = "summarize"
EXTRACT = "extract"
SELF_CRITICIZE = "self_criticize"
REFORMAT = "reformat"
STEPS = (SUMMARIZE, EXTRACT, SELF_CRITICIZE, REFORMAT)

_CONFIG_ID_RE = re.compile(r"(?P<model>.+)__S(?P<sum>[01])C(?P<cot>[01])R(?P<sc>[01])D(?P<desc>[01])__P(?P<rparse>[01])__(?P<jgen>prompt|tool)\Z")


def make_config_id(model_id: str, flags: StrategyFlags) -> str:
    b = lambda v: "1" if v else "0"  # noqa: E731
    return (
        f"{model_id}__S{b(flags.sum)}C{b(flags.cot)}R{b(flags.sc)}D{b(flags.desc)}"
        f"__P{b(flags.rparse)}__{flags.jgen}"
    )


def parse_config_id(config_id: str) -> tuple[str, StrategyFlags]:
    m = _CONFIG_ID_RE.match(config_id)
    if not m:
        raise ValueError(f"not a config id: {config_id!r}")
    flags = StrategyFlags(**{k: m.group(k) == "1" for k in FLAG_NAMES}, jgen=m.group("jgen"))
    return m.group("model"), flags


@dataclass(frozen=True)
class PipelineConfig:
    task: TaskSpec
    model: ModelRef
    flags: StrategyFlags = StrategyFlags()
    params: GenerationParams = GenerationParams()

    def __post_init__(self):
        if self.flags.jgen == JGEN_TOOL and not self.model.supports_tool_calls:
            raise ToolUnsupported(f"model {self.model.id!r} cannot run with jgen=tool")
        if self.flags.desc and not self.task.supports_desc:
            raise PromptError(f"task {self.task.name!r} has no description variant")

    @property
    def config_id(self) -> str:
        return make_config_id(self.model.id, self.flags)


@dataclass(frozen=True)
class StepEntry:
    step: str
    prompt: str
    response: str
    elapsed_seconds: float


def _outcome_to_dict(o: ParseOutcome) -> dict:
    return {
        "status": o.status,
        "values": None if o.value is None else _plain(o.value.values),
        "raw_span": list(o.raw_span) if o.raw_span else None,
        "detail": o.detail,
    }


def _plain(values: Mapping[str, Any]) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in values.items()}


@dataclass(frozen=True)
class RunRecord:
    config_id: str
    article_id: str
    step_log: tuple[StepEntry, ...]
    parse_outcome: ParseOutcome
    total_seconds: float
    truncated: bool = False
    timestamp: str = ""
    backend_error: str | None = None
    schema_name: str = ""

    @property
    def status(self) -> str:
        return BACKEND_FAILURE if self.backend_error else self.parse_outcome.status

    @property
    def values(self) -> dict | None:
        v = self.parse_outcome.value
        return None if v is None else _plain(v.values)

    def step_seconds(self, step: str) -> float | None:
        hits = [e.elapsed_seconds for e in self.step_log if e.step == step]
        return sum(hits) if hits else None

    def to_dict(self) -> dict:
        return {
            "config_id": self.config_id,
            "article_id": self.article_id,
            "status": self.status,
            "values": self.values,
            "parse_outcome": _outcome_to_dict(self.parse_outcome),
            "step_log": [
                {"step": e.step, "prompt": e.prompt, "response": e.response, "elapsed_seconds": e.elapsed_seconds}
                for e in self.step_log
            ],
            "total_seconds": self.total_seconds,
            "truncated": self.truncated,
            "timestamp": self.timestamp,
            "backend_error": self.backend_error,
            "schema_name": self.schema_name,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RunRecord":
        po = d["parse_outcome"]
        value = None
        if po["status"] == OK:
            vals = {k: tuple(v) if isinstance(v, list) else v for k, v in po["values"].items()}
            value = ValidatedRecord(d.get("schema_name", ""), vals)
        outcome = ParseOutcome(
            po["status"], value, tuple(po["raw_span"]) if po.get("raw_span") else None, po.get("detail", "")
        )
        steps = tuple(
            StepEntry(s["step"], s["prompt"], s["response"], float(s["elapsed_seconds"])) for s in d["step_log"]
        )
        return cls(
            config_id=d["config_id"],
            article_id=d["article_id"],
            step_log=steps,
            parse_outcome=outcome,
            total_seconds=float(d["total_seconds"]),
            truncated=bool(d.get("truncated", False)),
            timestamp=d.get("timestamp", ""),
            backend_error=d.get("backend_error"),
            schema_name=d.get("schema_name", ""),
        )


class _Steps:
    """Collects step entries and keeps timing bookkeeping for one article."""

    def __init__(self, backend: Backend, config: PipelineConfig):
        self.backend = backend
        self.config = config
        self.log: list[StepEntry] = []
        self.measured = 0.0
        self.reported = 0.0
        self.truncated = False

    def _record(self, step: str, prompt: str, out: Completion, wall: float, response: str | None = None):
        self.measured += wall
        self.reported += out.elapsed_seconds
        self.truncated = self.truncated or out.truncated
        self.log.append(StepEntry(step, prompt, out.text if response is None else response, out.elapsed_seconds))

    def text(self, step: str, prompt: str) -> str:
        c = self.config
        t0 = time.perf_counter()
        out = self.backend.generate(c.model, prompt, c.params)
        self._record(step, prompt, out, time.perf_counter() - t0)
        return out.text

    def tool(self, step: str, prompt: str) -> tuple[str, Any]:
        """Tool-call step; returns (logged text, decoded arguments or None)."""
        c = self.config
        t0 = time.perf_counter()
        try:
            out = self.backend.generate_with_tool(c.model, prompt, c.task.schema, c.params)
        except NoToolCallReturned as exc:
            wall = time.perf_counter() - t0
            self._record(step, prompt, Completion(exc.text, wall), wall)
            return exc.text, None
        text = json.dumps(out.tool_arguments, ensure_ascii=False)
        self._record(step, prompt, out, time.perf_counter() - t0, response=text)
        return text, out.tool_arguments


def _validate_object(schema: ExtractionSchema, text: str, obj: Any) -> ParseOutcome:
    if obj is None:
        return ParseOutcome(NO_JSON_FOUND, detail="no tool call returned")
    try:
        return ParseOutcome(OK, value=validate(schema, obj), raw_span=(0, len(text)))
    except ValidationError as exc:
        return ParseOutcome(SCHEMA_VIOLATION, raw_span=(0, len(text)), detail=f"{type(exc).__name__}: {exc}")


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def run_article(config: PipelineConfig, article: NewsArticle, backend: Backend) -> RunRecord:
    """Run every enabled step for one article and return its record.

    Backend failures become records with status ``backend_failure``.
    """
    text = article.text
    if not article.body or not article.body.strip():
        raise ValueError(f"article {article.id!r} has an empty body")
    flags, task = config.flags, config.task
    use_tool = flags.jgen == JGEN_TOOL
    fmt = render_format_instructions(task.schema)
    date = article.publication_date.isoformat() if article.publication_date else None
    steps = _Steps(backend, config)
    tool_obj: Any = None
    tool_final = False
    t_start = time.perf_counter()
    try:
        if flags.sum:
            text = steps.text(SUMMARIZE, assemble_summary_prompt(text, task.summary_template))
        prompt = assemble_extraction_prompt(task, text, flags, None if flags.rparse else fmt, date)
        if use_tool and not flags.rparse:
            response, tool_obj = steps.tool(EXTRACT, prompt)
            tool_final = True
        else:
            response = steps.text(EXTRACT, prompt)
        if flags.sc:
            sc_prompt = assemble_self_criticism_prompt(prompt, response, task.self_criticism_template)
            if tool_final:
                response, tool_obj = steps.tool(SELF_CRITICIZE, sc_prompt)
            else:
                response = steps.text(SELF_CRITICIZE, sc_prompt)
        if flags.rparse:
            parse_prompt = assemble_parsing_prompt(task, response, None if use_tool else fmt, flags)
            if use_tool:
                response, tool_obj = steps.tool(REFORMAT, parse_prompt)
                tool_final = True
            else:
                response = steps.text(REFORMAT, parse_prompt)
    except (BackendUnreachable, BackendError) as exc:
        total = time.perf_counter() - t_start - steps.measured + steps.reported
        return RunRecord(
            config_id=config.config_id,
            article_id=article.id,
            step_log=tuple(steps.log),
            parse_outcome=ParseOutcome(NO_JSON_FOUND, detail="not parsed: backend failure"),
            total_seconds=max(total, 0.0),
            truncated=steps.truncated,
            timestamp=_now(),
            backend_error=f"{type(exc).__name__}: {exc}",
            schema_name=task.schema.name,
        )
    if tool_final:
        outcome = _validate_object(task.schema, response, tool_obj)
    else:
        outcome = extract_json(response, task.schema)
    total = time.perf_counter() - t_start - steps.measured + steps.reported
    longest = max((e.elapsed_seconds for e in steps.log), default=0.0)
    return RunRecord(
        config_id=config.config_id,
        article_id=article.id,
        step_log=tuple(steps.log),
        parse_outcome=outcome,
        total_seconds=max(total, longest),
        truncated=steps.truncated,
        timestamp=_now(),
        schema_name=task.schema.name,
    )


# Persistence


class JsonlSink:
    """Append-only JSON-lines file; each record is written whole under a lock."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, record: RunRecord) -> None:
        line = json.dumps(record.to_dict(), ensure_ascii=False, sort_keys=True) + "\n"
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line)
                fh.flush()


def read_records(path) -> list[RunRecord]:
    """Load a record file, ignoring a torn final line left by an interrupted write."""
    out = []
    p = Path(path)
    if not p.exists():
        return out
    lines = p.read_text(encoding="utf-8").splitlines()
    for i, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            out.append(RunRecord.from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError):
            if i == len(lines) - 1:
                break
            raise
    return out


def csv_columns(schema: ExtractionSchema) -> list[str]:
    return [
        "config_id", "model", *FLAG_NAMES, "jgen", "article_id", "parse_status",
        *schema.field_names,
        *(f"{s}_s" for s in STEPS), "total_s", "truncated",
    ]


def _cell(v: Any) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (list, tuple)):
        return ";".join(v)
    return str(v)


def export_records_csv(records: Sequence[RunRecord], path, schema: ExtractionSchema) -> int:
    cols = csv_columns(schema)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in records:
            model, flags = parse_config_id(r.config_id)
            values = r.values or {}
            row = [r.config_id, model, *(_cell(getattr(flags, f)) for f in FLAG_NAMES), flags.jgen,
                   r.article_id, r.status]
            row += [_cell(values[n]) if n in values else "" for n in schema.field_names]
            for s in STEPS:
                t = r.step_seconds(s)
                row.append("" if t is None else repr(t))
            row += [repr(r.total_seconds), _cell(r.truncated)]
            w.writerow(row)
    return len(records)


def run_articles(config: PipelineConfig, articles: Iterable[NewsArticle], backend: Backend) -> list[RunRecord]:
    return [run_article(config, a, backend) for a in articles]
