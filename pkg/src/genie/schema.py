"""Extraction schemas: declaration, format-instruction rendering and strict validation."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Any, Mapping

log = logging.getLogger(__name__)

BOOLEAN = "boolean"
STRING_LIST = "string_list"
KINDS = (BOOLEAN, STRING_LIST)

_NAME_RE = re.compile(r"[a-z_][a-z0-9_]*\Z")

SINGLE_JSON_SENTENCE = (
    "Make sure to include a single JSON in your response instead of multiple JSONs."
)


class SchemaError(ValueError):
    """Raised for an ill-formed schema declaration."""


class ValidationError(ValueError):
    """Base class for a decoded value that does not conform to its schema."""


class NotAnObject(ValidationError):
    def __init__(self, found: str):
        self.found = found
        super().__init__(f"expected a JSON object at top level, found {found}")


class MissingField(ValidationError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"missing required field {name!r}")


class TypeMismatch(ValidationError):
    def __init__(self, name: str, expected: str, found: str):
        self.name = name
        self.expected = expected
        self.found = found
        super().__init__(f"field {name!r}: expected {expected}, found {found}")


@dataclass(frozen=True)
class FieldSpec:
    name: str
    kind: str
    description: str = ""
    # Placeholder word used inside list-valued format instructions, e.g. "province".
    item: str = "item"

    def __post_init__(self):
        if not _NAME_RE.match(self.name or ""):
            raise SchemaError(f"invalid field name {self.name!r}")
        if self.kind not in KINDS:
            raise SchemaError(f"field {self.name!r}: unknown kind {self.kind!r}")


@dataclass(frozen=True)
class ExtractionSchema:
    name: str
    fields: tuple[FieldSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple(self.fields))
        if not _NAME_RE.match(self.name or ""):
            raise SchemaError(f"invalid schema name {self.name!r}")
        if not self.fields:
            raise SchemaError(f"schema {self.name!r} declares no fields")
        names = [f.name for f in self.fields]
        if len(set(names)) != len(names):
            raise SchemaError(f"schema {self.name!r} has duplicate field names")

    @property
    def field_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.fields)

    def get(self, name: str) -> FieldSpec:
        for f in self.fields:
            if f.name == name:
                return f
        raise KeyError(name)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExtractionSchema":
        try:
            fields = tuple(
                FieldSpec(
                    name=f["name"],
                    kind=f["kind"],
                    description=f.get("description", "") or "",
                    item=f.get("item", "item") or "item",
                )
                for f in data["fields"]
            )
            return cls(name=data["name"], fields=fields)
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema declaration: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "fields": [
                {"name": f.name, "kind": f.kind, "description": f.description, "item": f.item}
                for f in self.fields
            ],
        }

    def to_json_schema(self) -> dict:
        """JSON-schema object used as a tool signature."""
        props = {}
        for f in self.fields:
            if f.kind == BOOLEAN:
                prop: dict = {"type": "boolean"}
            else:
                prop = {"type": "array", "items": {"type": "string"}}
            if f.description:
                prop["description"] = f.description
            props[f.name] = prop
        return {"type": "object", "properties": props, "required": list(self.field_names)}


@dataclass(frozen=True)
class ValidatedRecord:
    schema_name: str
    values: Mapping[str, Any]
    warnings: tuple[str, ...] = field(default=(), compare=False)


def json_type_name(value: Any) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, (int, float)):
        return "number"
    if isinstance(value, str):
        return "string"
    if isinstance(value, list):
        return "array"
    if isinstance(value, dict):
        return "object"
    return type(value).__name__


def render_format_instructions(schema: ExtractionSchema) -> str:
    lines = ["Format instructions:", "{"]
    for i, f in enumerate(schema.fields):
        sep = "," if i < len(schema.fields) - 1 else ""
        if f.kind == BOOLEAN:
            lines.append(f'    "{f.name}": <true or false>{sep}')
        else:
            lines.append(f'    "{f.name}": [')
            lines.append(f"        <{f.item}>,")
            lines.append("        ...")
            lines.append(f"    ]{sep}")
    lines.append("}")
    lines.append(SINGLE_JSON_SENTENCE)
    return "\n".join(lines)


def validate(schema: ExtractionSchema, value: Any) -> ValidatedRecord:
    """Check a decoded JSON value against ``schema``.

    Fields are checked in declaration order and the first problem is raised.
    Keys not declared by the schema are dropped and reported as warnings.
    """
    if not isinstance(value, dict):
        raise NotAnObject(json_type_name(value))
    out: dict[str, Any] = {}
    for f in schema.fields:
        if f.name not in value:
            raise MissingField(f.name)
        v = value[f.name]
        if f.kind == BOOLEAN:
            if not isinstance(v, bool):
                raise TypeMismatch(f.name, BOOLEAN, json_type_name(v))
            out[f.name] = v
        else:
            if not isinstance(v, list):
                raise TypeMismatch(f.name, STRING_LIST, json_type_name(v))
            for item in v:
                if not isinstance(item, str):
                    raise TypeMismatch(f.name, STRING_LIST, f"array of {json_type_name(item)}")
            out[f.name] = tuple(v)
    extra = [k for k in value if k not in out]
    warnings = ()
    if extra:
        warnings = tuple(f"ignored extra key {k!r}" for k in extra)
        log.warning("schema %s: ignoring extra keys %s", schema.name, extra)
    return ValidatedRecord(schema_name=schema.name, values=out, warnings=warnings)
