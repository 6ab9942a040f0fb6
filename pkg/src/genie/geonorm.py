"""Normalization of free-text Spanish province mentions to a canonical gazetteer."""

from __future__ import annotations

import csv
import io
import re
import unicodedata
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Iterable, Mapping

UNMATCHED_PREFIX = "unmatched:"
N_PROVINCES = 50

_NON_WORD = re.compile(r"[^0-9a-z/]+")


class GazetteerError(ValueError):
    pass


@dataclass(frozen=True)
class Unmatched:
    name: str

    def __bool__(self):
        return False


def fold(name: str) -> str:
    """Case-, diacritic- and punctuation-insensitive lookup key."""
    s = unicodedata.normalize("NFKD", name)
    s = "".join(c for c in s if not unicodedata.combining(c)).casefold()
    s = _NON_WORD.sub(" ", s)
    return " ".join(s.split())


@dataclass(frozen=True)
class ProvinceGazetteer:
    canonical: frozenset[str]
    aliases: Mapping[str, str]
    _index: Mapping[str, str] = field(repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        index: dict[str, str] = {}
        for name in sorted(self.canonical):
            index[fold(name)] = name
        for alias, canon in self.aliases.items():
            if canon not in self.canonical:
                raise GazetteerError(f"alias {alias!r} points to unknown province {canon!r}")
            key = fold(alias)
            if index.get(key, canon) != canon:
                raise GazetteerError(f"alias {alias!r} collides with {index[key]!r}")
            index[key] = canon
        object.__setattr__(self, "_index", index)

    @classmethod
    def from_csv(cls, text: str, expected_size: int | None = N_PROVINCES) -> "ProvinceGazetteer":
        rows = list(csv.DictReader(io.StringIO(text)))
        canonical = frozenset(r["canonical"] for r in rows if r["alias"] == r["canonical"])
        targets = {r["canonical"] for r in rows}
        if targets - canonical:
            raise GazetteerError(f"canonical names without a self-mapping row: {sorted(targets - canonical)}")
        if expected_size is not None and len(canonical) != expected_size:
            raise GazetteerError(f"expected {expected_size} canonical names, found {len(canonical)}")
        aliases = {r["alias"]: r["canonical"] for r in rows if r["alias"] != r["canonical"]}
        return cls(canonical=canonical, aliases=aliases)

    def lookup(self, name: str) -> str | None:
        return self._index.get(fold(name))


@lru_cache(maxsize=1)
def default_gazetteer() -> ProvinceGazetteer:
    text = resources.files("genie").joinpath("data", "provinces.csv").read_text(encoding="utf-8")
    return ProvinceGazetteer.from_csv(text)


def load_gazetteer(path) -> ProvinceGazetteer:
    with open(path, encoding="utf-8") as fh:
        return ProvinceGazetteer.from_csv(fh.read(), expected_size=None)


def normalize(name: str, g: ProvinceGazetteer | None = None) -> str | Unmatched:
    g = g or default_gazetteer()
    hit = g.lookup(name)
    return hit if hit is not None else Unmatched(name)


def normalize_set(names: Iterable[str], g: ProvinceGazetteer | None = None) -> tuple[set[str], list[str]]:
    g = g or default_gazetteer()
    found: set[str] = set()
    unmatched: list[str] = []
    seen_bad: set[str] = set()
    for name in names:
        if not name or not name.strip():
            continue
        hit = normalize(name, g)
        if isinstance(hit, Unmatched):
            key = fold(name)
            if key not in seen_bad:
                seen_bad.add(key)
                unmatched.append(name)
        else:
            found.add(hit)
    return found, unmatched


def prediction_set(names: Iterable[str], g: ProvinceGazetteer | None = None) -> frozenset[str]:
    """Normalized predictions with one placeholder member per unmatched name.

    The placeholders never match a gold province, so each one costs a false
    positive when scored.
    """
    found, unmatched = normalize_set(names, g)
    return frozenset(found | {UNMATCHED_PREFIX + fold(u) for u in unmatched})
