"""Locate and strictly decode a JSON object inside free-form model text.

No repair is attempted: a trailing comma, a single-quoted string or a comment
makes a candidate malformed. Failures are returned as outcome statuses because
the failure rate is itself a measured quantity.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Any

from .schema import ExtractionSchema, ValidatedRecord, ValidationError, validate

OK = "ok"
NO_JSON_FOUND = "no_json_found"
MALFORMED_JSON = "malformed_json"
SCHEMA_VIOLATION = "schema_violation"
PARSE_STATUSES = (OK, NO_JSON_FOUND, MALFORMED_JSON, SCHEMA_VIOLATION)

_FENCE_RE = re.compile(r"```[ \t]*([A-Za-z0-9_+-]*)[ \t]*\r?\n(.*?)```", re.DOTALL)


class MalformedJson(ValueError):
    def __init__(self, position: int, reason: str):
        self.position = position
        self.reason = reason
        super().__init__(f"{reason} at position {position}")


@dataclass(frozen=True)
class ParseOutcome:
    status: str
    value: ValidatedRecord | None = None
    raw_span: tuple[int, int] | None = None
    detail: str = ""

    def __post_init__(self):
        if self.status not in PARSE_STATUSES:
            raise ValueError(f"unknown parse status {self.status!r}")
        if (self.status == OK) != (self.value is not None):
            raise ValueError("value must be present exactly when status is ok")

    @property
    def ok(self) -> bool:
        return self.status == OK


def _reject_constant(name: str):
    raise ValueError(f"non-standard constant {name}")


def decode_strict(span: str) -> Any:
    try:
        return json.loads(span, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise MalformedJson(exc.pos, exc.msg) from None
    except ValueError as exc:
        raise MalformedJson(0, str(exc)) from None


def _brace_spans(text: str) -> list[tuple[int, int]]:
    """Top-level brace-balanced spans; an unclosed brace runs to end of text."""
    spans = []
    i, n = 0, len(text)
    while i < n:
        if text[i] != "{":
            i += 1
            continue
        depth = 0
        in_str = False
        j = i
        while j < n:
            c = text[j]
            if in_str:
                if c == "\\":
                    j += 1
                elif c == '"':
                    in_str = False
            elif c == '"':
                in_str = True
            elif c == "{":
                depth += 1
            elif c == "}":
                depth -= 1
                if depth == 0:
                    break
            j += 1
        end = min(j + 1, n)
        spans.append((i, end))
        i = end
    return spans


def _fence_spans(text: str) -> list[tuple[int, int]]:
    spans = []
    for m in _FENCE_RE.finditer(text):
        start, end = m.span(2)
        body = text[start:end]
        lead = len(body) - len(body.lstrip())
        trail = len(body) - len(body.rstrip())
        if end - trail > start + lead:
            spans.append((start + lead, end - trail))
    return spans


def find_candidates(text: str) -> list[tuple[int, int]]:
    """Candidate spans in document order.

    A fenced block contributes its whole (stripped) body, which also covers
    non-object payloads; where a body and a brace span start together the
    longer one is tried first.
    """
    spans = set(_fence_spans(text)) | set(_brace_spans(text))
    return sorted(spans, key=lambda se: (se[0], -se[1]))


def extract_json(text: str, schema: ExtractionSchema) -> ParseOutcome:
    candidates = find_candidates(text or "")
    if not candidates:
        return ParseOutcome(NO_JSON_FOUND, detail="no JSON candidate in text")
    first_violation: tuple[tuple[int, int], ValidationError] | None = None
    first_malformed: tuple[tuple[int, int], MalformedJson] | None = None
    for span in candidates:
        try:
            decoded = decode_strict(text[span[0]:span[1]])
        except MalformedJson as exc:
            if first_malformed is None:
                first_malformed = (span, exc)
            continue
        try:
            record = validate(schema, decoded)
        except ValidationError as exc:
            if first_violation is None:
                first_violation = (span, exc)
            continue
        return ParseOutcome(OK, value=record, raw_span=span)
    if first_violation is not None:
        span, exc = first_violation
        return ParseOutcome(SCHEMA_VIOLATION, raw_span=span, detail=f"{type(exc).__name__}: {exc}")
    span, exc = first_malformed
    return ParseOutcome(MALFORMED_JSON, raw_span=span, detail=str(exc))
