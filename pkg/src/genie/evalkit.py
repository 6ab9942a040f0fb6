"""Evaluation metrics over parsed model outputs.

Accuracy-type metrics use successfully parsed outputs only; unparsed outputs
feed the parsing error rate. Backend failures are in neither.
"""

from __future__ import annotations

import statistics
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from .geonorm import ProvinceGazetteer, normalize_set, prediction_set
from .jsonx import MALFORMED_JSON, NO_JSON_FOUND, OK, SCHEMA_VIOLATION
from .schema import BOOLEAN, ExtractionSchema

BACKEND_FAILURE = "backend_failure"
_PARSE_FAILURES = (NO_JSON_FOUND, MALFORMED_JSON, SCHEMA_VIOLATION)


class NoParsedRecords(ValueError):
    pass


@dataclass
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: "Counts") -> "Counts":
        return Counts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    @property
    def precision(self) -> float | None:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else None

    @property
    def recall(self) -> float | None:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else None

    @property
    def f1(self) -> float | None:
        p, r = self.precision, self.recall
        if p is None or r is None:
            return None
        return 2 * self.tp / (2 * self.tp + self.fp + self.fn)


@dataclass
class MetricsReport:
    accuracy: float | None = None
    precision: float | None = None
    recall: float | None = None
    f1: float | None = None
    parsing_error_rate: float | None = None
    mean_exec_seconds: float | None = None
    n_articles: int = 0
    n_parsed: int = 0
    per_category_f1: dict[str, float | None] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _rate(num: int, den: int) -> float | None:
    return num / den if den else None


def _fill(report: MetricsReport, c: Counts, exact: int) -> MetricsReport:
    report.precision, report.recall, report.f1 = c.precision, c.recall, c.f1
    report.accuracy = _rate(exact, report.n_parsed)
    report.counts = {"tp": c.tp, "fp": c.fp, "fn": c.fn, "tn": c.tn, "exact": exact}
    return report


def micro_multilabel(records: Sequence[tuple[Mapping[str, bool], Mapping[str, bool] | None]]) -> MetricsReport:
    """Micro-averaged P/R/F1 pooled over (article, category) slots.

    A record whose prediction is ``None`` is an unparsed output. Accuracy is
    exact-match subset accuracy.
    """
    categories: list[str] | None = None
    total = Counts()
    per: dict[str, Counts] = {}
    exact = 0
    n_parsed = 0
    for gold, pred in records:
        if categories is None:
            categories = list(gold)
            per = {c: Counts() for c in categories}
        elif set(gold) != set(categories):
            raise ValueError("gold label maps disagree on the category set")
        if pred is None:
            continue
        n_parsed += 1
        match = True
        for c in categories:
            g, p = bool(gold[c]), bool(pred.get(c, False))
            slot = Counts(tp=int(g and p), fp=int(p and not g), fn=int(g and not p), tn=int(not g and not p))
            per[c] = per[c] + slot
            total = total + slot
            match = match and g == p
        exact += match
    report = MetricsReport(n_articles=len(records), n_parsed=n_parsed)
    report.parsing_error_rate = _rate(len(records) - n_parsed, len(records))
    if n_parsed == 0:
        return report
    report.per_category_f1 = {c: per[c].f1 for c in categories}
    return _fill(report, total, exact)


def binary_metrics(records: Sequence[tuple[bool, bool | None]]) -> MetricsReport:
    c = Counts()
    n_parsed = 0
    for gold, pred in records:
        if pred is None:
            continue
        n_parsed += 1
        g, p = bool(gold), bool(pred)
        c = c + Counts(tp=int(g and p), fp=int(p and not g), fn=int(g and not p), tn=int(not g and not p))
    report = MetricsReport(n_articles=len(records), n_parsed=n_parsed)
    report.parsing_error_rate = _rate(len(records) - n_parsed, len(records))
    if n_parsed == 0:
        return report
    return _fill(report, c, c.tp + c.tn)


def set_metrics(records: Sequence[tuple[Iterable[str], Iterable[str] | None]]) -> MetricsReport:
    """Micro P/R/F1 over pooled (article, member) pairs; accuracy is exact set equality."""
    c = Counts()
    exact = 0
    n_parsed = 0
    for gold, pred in records:
        if pred is None:
            continue
        n_parsed += 1
        g, p = set(gold), set(pred)
        c = c + Counts(tp=len(g & p), fp=len(p - g), fn=len(g - p))
        exact += g == p
    report = MetricsReport(n_articles=len(records), n_parsed=n_parsed)
    report.parsing_error_rate = _rate(len(records) - n_parsed, len(records))
    if n_parsed == 0:
        return report
    return _fill(report, c, exact)


def parsing_error_rate(statuses: Iterable[str]) -> float | None:
    """Share of outputs that could not be turned into a schema-valid record."""
    failed = total = 0
    for s in statuses:
        if s == BACKEND_FAILURE:
            continue
        if s not in (OK, *_PARSE_FAILURES):
            raise ValueError(f"unknown status {s!r}")
        total += 1
        failed += s in _PARSE_FAILURES
    return _rate(failed, total)


def mean_exec_time(seconds: Sequence[float]) -> float:
    if not seconds:
        raise ValueError("no records to average")
    return statistics.fmean(seconds)


def require_parsed(report: MetricsReport) -> MetricsReport:
    if report.n_parsed == 0:
        raise NoParsedRecords("no successfully parsed outputs")
    return report


def evaluate_records(
    records: Sequence[Any],
    labels: Mapping[str, Mapping[str, Any]],
    schema: ExtractionSchema,
    gazetteer: ProvinceGazetteer | None = None,
    normalize_places: bool = True,
) -> MetricsReport:
    """Score pipeline RunRecords (or their dict form) against gold labels.

    Records whose article has no label are skipped. Backend failures are left
    out of every metric.
    """
    items = []
    statuses = []
    seconds = []
    for rec in records:
        d = rec if isinstance(rec, Mapping) else rec.to_dict()
        aid = d["article_id"]
        if aid not in labels:
            continue
        status = d["status"]
        if status == BACKEND_FAILURE:
            continue
        statuses.append(status)
        seconds.append(float(d["total_seconds"]))
        values = d.get("values") if status == OK else None
        items.append((labels[aid], values))

    kinds = [f.kind for f in schema.fields]
    if all(k == BOOLEAN for k in kinds) and len(kinds) == 1:
        name = schema.fields[0].name
        report = binary_metrics([(g[name], None if v is None else v[name]) for g, v in items])
    elif all(k == BOOLEAN for k in kinds):
        names = schema.field_names
        report = micro_multilabel([
            ({n: g[n] for n in names}, None if v is None else {n: v[n] for n in names})
            for g, v in items
        ])
    elif len(kinds) == 1:
        name = schema.fields[0].name
        pairs = []
        for g, v in items:
            gold_names = g.get(name, g.get("provinces", g.get("response", ())))
            if normalize_places:
                gold = normalize_set(gold_names, gazetteer)[0]
                pred = None if v is None else prediction_set(v[name], gazetteer)
            else:
                gold = set(gold_names)
                pred = None if v is None else set(v[name])
            pairs.append((gold, pred))
        report = set_metrics(pairs)
    else:
        raise ValueError(f"schema {schema.name!r} mixes field kinds; no metric defined")
    report.parsing_error_rate = parsing_error_rate(statuses)
    report.mean_exec_seconds = mean_exec_time(seconds) if seconds else None
    return report
