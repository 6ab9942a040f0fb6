"""Tabular rendering of factor tests and trade-off fronts (CSV and aligned text)."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Any, Mapping, Sequence

from .analysis import (
    NoCompletePairs,
    ParetoPoint,
    bonferroni,
    build_pairs,
    format_p,
    pareto_front,
    select_representatives,
    stars,
    wilcoxon_signed_rank,
)
from .prompts import FLAG_NAMES

FACTOR_COLUMNS = ("factor", "metric", "pairs", "dropped", "n_eff", "delta", "W", "p", "adjusted_p", "sig")
PARETO_COLUMNS = ("role", "config_id", "f1", "seconds_per_article", "knee_score")


def metric_table(rows: Sequence[Mapping[str, Any]], metric: str) -> dict[str, float]:
    return {r["config_id"]: r[metric] for r in rows if r.get(metric) is not None}


def factor_tests(
    rows: Sequence[Mapping[str, Any]],
    metric: str,
    factors: Sequence[str] = FLAG_NAMES,
    m: int | None = None,
    alpha: float = 0.05,
) -> list[dict[str, Any]]:
    """One Wilcoxon test per factor on ``metric``, Bonferroni-adjusted as one family."""
    values = metric_table(rows, metric)
    samples, results = [], []
    for f in factors:
        try:
            s = build_pairs(values, f, metric)
        except NoCompletePairs:
            continue
        samples.append(s)
        results.append(wilcoxon_signed_rank(s))
    adjusted = bonferroni(results, m, alpha)
    out = []
    for s, r in zip(samples, adjusted):
        out.append({
            "factor": s.factor,
            "metric": metric,
            "pairs": len(s.pairs),
            "dropped": s.dropped,
            "n_eff": r.n_effective,
            "delta": r.delta_mean,
            "W": r.statistic if r.p_value is not None else None,
            "p": r.p_value,
            "adjusted_p": r.adjusted_p,
            "sig": stars(r.adjusted_p),
        })
    return out


def _show(col: str, v: Any) -> str:
    if col in ("p", "adjusted_p"):
        return format_p(v)
    if v is None:
        return "---"
    if col == "delta":
        return f"{v:+.3f}"
    if isinstance(v, float):
        return f"{v:.3f}" if col != "W" else f"{v:g}"
    return str(v)


def render_text(rows: Sequence[Mapping[str, Any]], columns: Sequence[str]) -> str:
    cells = [[_show(c, r.get(c)) for c in columns] for r in rows]
    widths = [max([len(c)] + [len(row[i]) for row in cells]) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for row in cells:
        lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"


def write_csv(rows: Sequence[Mapping[str, Any]], columns: Sequence[str], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow(["" if r.get(c) is None else r.get(c) for c in columns])


def pareto_rows(rows: Sequence[Mapping[str, Any]], f1: str = "f1", seconds: str = "mean_exec_seconds") -> list[dict]:
    points = [
        ParetoPoint(r["config_id"], r[f1], r[seconds])
        for r in rows
        if r.get(f1) is not None and r.get(seconds) is not None
    ]
    if not points:
        raise ValueError("no configuration has both an F1 score and a mean execution time")
    front = pareto_front(points)
    reps = select_representatives(front)
    roles: dict[str, list[str]] = {}
    for role, p in reps.as_dict().items():
        roles.setdefault(p.config_id, []).append("efficient (knee rule)" if role == "efficient" else role)
    out = []
    for p in sorted(front, key=lambda p: (-p.f1, p.seconds_per_article)):
        out.append({
            "role": ", ".join(roles.get(p.config_id, [])),
            "config_id": p.config_id,
            "f1": p.f1,
            "seconds_per_article": p.seconds_per_article,
            "knee_score": reps.knee_scores[p.config_id],
        })
    return out


def write_reports(rows: Sequence[Mapping[str, Any]], out_dir, metrics: Sequence[str] = ("f1", "parsing_error_rate"),
                  m: int | None = None) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for metric in metrics:
        table = factor_tests(rows, metric, m=m)
        if not table:
            continue
        write_csv(table, FACTOR_COLUMNS, out / f"factors_{metric}.csv")
        (out / f"factors_{metric}.txt").write_text(render_text(table, FACTOR_COLUMNS), encoding="utf-8")
        written += [out / f"factors_{metric}.csv", out / f"factors_{metric}.txt"]
    try:
        front = pareto_rows(rows)
    except ValueError:
        return written
    write_csv(front, PARETO_COLUMNS, out / "pareto.csv")
    (out / "pareto.txt").write_text(render_text(front, PARETO_COLUMNS), encoding="utf-8")
    return written + [out / "pareto.csv", out / "pareto.txt"]
