"""News corpus ingestion, label files, stratified splitting and annotator agreement."""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import json
import logging
import math
import random
import statistics
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .schema import BOOLEAN, ExtractionSchema

log = logging.getLogger(__name__)


class CorpusError(ValueError):
    pass


class RecordError(CorpusError):
    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class EmptyInput(CorpusError):
    pass


class DegenerateMarginals(ArithmeticError):
    pass


@dataclass(frozen=True)
class NewsArticle:
    id: str
    headline: str
    body: str
    publication_date: dt.date | None = None
    url: str = ""

    @property
    def text(self) -> str:
        """Headline and body as fed to the prompts."""
        if self.headline:
            return f"{self.headline}\n\n{self.body}"
        return self.body

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "headline": self.headline,
            "articleBody": self.body,
            "datePublished": self.publication_date.isoformat() if self.publication_date else None,
            "url": self.url,
        }


@dataclass(frozen=True)
class LabeledArticle:
    article_id: str
    labels: Mapping[str, Any]

    def stratum(self) -> frozenset:
        """Exact label combination used for stratification."""
        items = set()
        for k, v in self.labels.items():
            if isinstance(v, bool):
                if v:
                    items.add(k)
            else:
                items.update(f"{k}:{x}" for x in v)
        return frozenset(items)


def _url_id(url: str) -> str:
    return hashlib.sha1(url.encode("utf-8")).hexdigest()[:12]


def _parse_date(value: Any) -> dt.date | None:
    if not value:
        return None
    s = str(value)
    try:
        return dt.datetime.fromisoformat(s.replace("Z", "+00:00")).date()
    except ValueError:
        return dt.date.fromisoformat(s[:10])


def read_corpus(path) -> tuple[list[NewsArticle], list[RecordError]]:
    """Parse a JSON-lines file of schema.org NewsArticle objects.

    Bad lines are skipped and returned as errors. Missing ids are derived from
    the URL hash; a repeated id gets a ``-2``, ``-3``... suffix.
    """
    articles: list[NewsArticle] = []
    errors: list[RecordError] = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise ValueError("not a JSON object")
                body = obj.get("articleBody")
                if not isinstance(body, str) or not body.strip():
                    raise ValueError("missing articleBody")
                url = obj.get("url") or ""
                art_id = obj.get("id") or obj.get("identifier")
                if not art_id:
                    if not url:
                        raise ValueError("neither id nor url present")
                    art_id = _url_id(url)
                date = _parse_date(obj.get("datePublished"))
            except ValueError as exc:
                err = RecordError(lineno, str(exc))
                log.warning("%s: skipping %s", path, err)
                errors.append(err)
                continue
            art_id = str(art_id)
            if art_id in seen:
                seen[art_id] += 1
                new_id = f"{art_id}-{seen[art_id]}"
                log.warning("%s: duplicate id %s renamed to %s", path, art_id, new_id)
                art_id = new_id
            else:
                seen[art_id] = 1
            articles.append(NewsArticle(art_id, obj.get("headline") or "", body, date, url))
    return articles, errors


def load_corpus(path) -> list[NewsArticle]:
    articles, errors = read_corpus(path)
    if errors:
        log.warning("%s: %d bad lines skipped", path, len(errors))
    return articles


def write_corpus(articles: Iterable[NewsArticle], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for a in articles:
            fh.write(json.dumps(a.to_json(), ensure_ascii=False) + "\n")


def _truthy(cell: str) -> bool:
    s = cell.strip().lower()
    if s in ("1", "true", "yes"):
        return True
    if s in ("0", "false", "no", ""):
        return False
    raise ValueError(f"not a 0/1 value: {cell!r}")


def load_labels(path, schema: ExtractionSchema | None = None) -> dict[str, dict[str, Any]]:
    """Read a label CSV into ``article_id -> {field: bool | frozenset}``.

    Boolean fields are 0/1 columns; list fields hold ``;``-joined names. Without
    a schema, a column is boolean when every cell is a 0/1 value.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
        fieldnames = [c for c in (rows[0].keys() if rows else []) if c != "article_id"]
    if schema is not None:
        kinds = {f.name: f.kind for f in schema.fields}
        missing = [n for n in kinds if n not in fieldnames]
        if rows and missing:
            raise CorpusError(f"{path}: label columns missing: {missing}")
    else:
        kinds = {}
        for c in fieldnames:
            try:
                for r in rows:
                    _truthy(r[c])
                kinds[c] = BOOLEAN
            except ValueError:
                kinds[c] = "string_list"
    labels: dict[str, dict[str, Any]] = {}
    for i, r in enumerate(rows, 2):
        aid = r.get("article_id")
        if not aid:
            raise RecordError(i, "missing article_id")
        entry: dict[str, Any] = {}
        for name, kind in kinds.items():
            cell = r.get(name) or ""
            try:
                if kind == BOOLEAN:
                    entry[name] = _truthy(cell)
                else:
                    entry[name] = frozenset(x.strip() for x in cell.split(";") if x.strip())
            except ValueError as exc:
                raise RecordError(i, str(exc)) from None
        labels[aid] = entry
    return labels


def stratified_split(
    data: Sequence[LabeledArticle],
    ratio: float = 0.7,
    seed: int = 0,
    rounding: str = "nearest",
) -> tuple[list[LabeledArticle], list[LabeledArticle], list[LabeledArticle]]:
    """Split into (validation, test, excluded) by exact label combination.

    Combinations with fewer than two members are excluded. Each stratum is
    shuffled with ``seed`` and its validation share is ``ratio * n`` rounded
    half-up (``rounding="nearest"``) or floored and then topped up by largest
    remainder toward the global target (``rounding="largest_remainder"``).
    """
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie strictly between 0 and 1")
    if not data:
        raise EmptyInput("nothing to split")
    r = Fraction(str(ratio))
    strata: dict[frozenset, list[LabeledArticle]] = defaultdict(list)
    for item in data:
        strata[item.stratum()].append(item)
    keys = sorted(strata, key=lambda k: (len(k), sorted(k)))

    kept = [k for k in keys if len(strata[k]) >= 2]
    excluded = [a for k in keys if len(strata[k]) < 2 for a in strata[k]]
    quotas: dict[frozenset, int] = {}
    if rounding == "nearest":
        for k in kept:
            quotas[k] = math.floor(r * len(strata[k]) + Fraction(1, 2))
    elif rounding == "largest_remainder":
        exact = {k: r * len(strata[k]) for k in kept}
        quotas = {k: math.floor(v) for k, v in exact.items()}
        target = math.floor(r * sum(len(strata[k]) for k in kept) + Fraction(1, 2))
        by_remainder = sorted(kept, key=lambda k: (-(exact[k] - quotas[k]), keys.index(k)))
        for k in by_remainder[: max(0, target - sum(quotas.values()))]:
            quotas[k] += 1
    else:
        raise ValueError(f"unknown rounding {rounding!r}")

    rng = random.Random(seed)
    validation: list[LabeledArticle] = []
    test: list[LabeledArticle] = []
    for k in kept:
        members = sorted(strata[k], key=lambda a: a.article_id)
        rng.shuffle(members)
        validation.extend(members[: quotas[k]])
        test.extend(members[quotas[k]:])
    return validation, test, excluded


def cohens_kappa(a: Sequence[bool], b: Sequence[bool]) -> float:
    """Cohen's kappa for two binary annotations, from integer counts.

    Working in exact fractions keeps hand-checkable cases exact (20/20/5/5 gives 0.6).
    """
    if len(a) != len(b) or not a:
        raise ValueError("annotations must be non-empty and of equal length")
    n = len(a)
    agree = sum(1 for x, y in zip(a, b) if bool(x) == bool(y))
    na = sum(1 for x in a if x)
    nb = sum(1 for y in b if y)
    chance = na * nb + (n - na) * (n - nb)  # p_e scaled by n**2
    if chance == n * n:
        if agree == n:
            return 1.0
        raise DegenerateMarginals("chance agreement is 1 but observed agreement is not")
    return float(Fraction(agree * n - chance, n * n - chance))


def multilabel_kappa(
    a: Sequence[Mapping[str, bool]], b: Sequence[Mapping[str, bool]], labels: Sequence[str]
) -> tuple[float, float, dict[str, float]]:
    """Label-wise kappa as (mean, sample std, per-label values)."""
    per = {lab: cohens_kappa([x[lab] for x in a], [y[lab] for y in b]) for lab in labels}
    values = list(per.values())
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return statistics.fmean(values), std, per
