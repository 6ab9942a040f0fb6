"""Paired significance testing and accuracy/latency trade-off analysis."""

from __future__ import annotations

import math
import statistics
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from . import kernels
from .pipeline import parse_config_id
from .prompts import FLAG_NAMES

EXACT_MAX_N = 25


class NoCompletePairs(ValueError):
    pass


@dataclass(frozen=True)
class PairedSample:
    factor: str
    metric: str
    pairs: tuple[tuple[float, float], ...]
    keys: tuple[str, ...] = ()
    dropped: int = 0

    @property
    def diffs(self) -> list[float]:
        return [on - off for off, on in self.pairs]


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # not a pytest class

    statistic: float
    p_value: float | None
    n_effective: int
    delta_mean: float
    w_plus: float = 0.0
    w_minus: float = 0.0
    method: str = "exact"
    adjusted_p: float | None = None
    significant: bool | None = None
    factor: str = ""
    metric: str = ""
    label: str = ""


def _group_key(config_id: str, factor: str) -> tuple:
    model, flags = parse_config_id(config_id)
    rest = tuple((k, v) for k, v in flags.as_dict().items() if k != factor)
    return (model,) + rest, getattr(flags, factor)


def build_pairs(results: Mapping[str, float], factor: str, metric: str = "") -> PairedSample:
    """Pair configurations that differ only in ``factor``.

    Groups missing either level are dropped and counted.
    """
    if factor not in FLAG_NAMES:
        raise ValueError(f"factor {factor!r} is not part of the configuration identity")
    groups: dict[tuple, dict[bool, float]] = defaultdict(dict)
    for cid, value in results.items():
        if value is None or (isinstance(value, float) and math.isnan(value)):
            continue
        key, level = _group_key(cid, factor)
        groups[key][bool(level)] = float(value)
    pairs, keys, dropped = [], [], 0
    for key in sorted(groups, key=repr):
        g = groups[key]
        if False in g and True in g:
            pairs.append((g[False], g[True]))
            keys.append("|".join(str(x) for x in key))
        else:
            dropped += 1
    if not pairs:
        raise NoCompletePairs(f"no complete pairs for factor {factor!r}")
    return PairedSample(factor, metric, tuple(pairs), tuple(keys), dropped)


def doubled_ranks(values: Sequence[float]) -> list[int]:
    """Twice the average ranks of ``values`` (ascending, ties averaged)."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    out = [0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        # positions i..j hold 1-based ranks i+1..j+1; doubled average = i + j + 2
        for k in range(i, j + 1):
            out[order[k]] = i + j + 2
        i = j + 1
    return out


def wilcoxon_diffs(diffs: Sequence[float], exact_max_n: int = EXACT_MAX_N) -> TestResult:
    """Two-sided Wilcoxon signed-rank test on paired differences.

    Zero differences are discarded. Exact null distribution up to
    ``exact_max_n`` nonzero differences, normal approximation with tie
    correction and continuity correction beyond.
    """
    delta = statistics.fmean(diffs) if diffs else 0.0
    nz = [d for d in diffs if d != 0]
    n = len(nz)
    if n == 0:
        return TestResult(statistic=0.0, p_value=None, n_effective=0, delta_mean=delta, method="none")
    ranks2 = doubled_ranks([abs(d) for d in nz])
    wp2 = sum(r for r, d in zip(ranks2, nz) if d > 0)
    wm2 = sum(ranks2) - wp2
    w2 = min(wp2, wm2)
    if n <= exact_max_n:
        counts = kernels.signed_rank_counts(ranks2)
        tail = sum(counts[: w2 + 1])
        p = min(1.0, 2 * tail / 2**n)
        method = "exact"
    else:
        mean = n * (n + 1) / 4
        ties: dict[int, int] = defaultdict(int)
        for r in ranks2:
            ties[r] += 1
        var = n * (n + 1) * (2 * n + 1) / 24 - sum(t**3 - t for t in ties.values()) / 48
        dev = max(abs(w2 / 2 - mean) - 0.5, 0.0)
        p = min(1.0, math.erfc(dev / math.sqrt(var) / math.sqrt(2))) if var > 0 else 1.0
        method = "normal"
    return TestResult(
        statistic=w2 / 2, p_value=p, n_effective=n, delta_mean=delta,
        w_plus=wp2 / 2, w_minus=wm2 / 2, method=method,
    )


def wilcoxon_signed_rank(sample: PairedSample, exact_max_n: int = EXACT_MAX_N) -> TestResult:
    if not sample.pairs:
        raise NoCompletePairs("empty paired sample")
    res = wilcoxon_diffs(sample.diffs, exact_max_n)
    return replace(res, factor=sample.factor, metric=sample.metric)


def bonferroni(results: Sequence[TestResult], m: int | None = None, alpha: float = 0.05) -> list[TestResult]:
    defined = sum(1 for r in results if r.p_value is not None)
    if m is None:
        m = defined
    if m < defined:
        raise ValueError(f"family size {m} is smaller than the {defined} defined p-values")
    out = []
    for r in results:
        if r.p_value is None:
            out.append(replace(r, adjusted_p=None, significant=None))
        else:
            adj = min(1.0, m * r.p_value)
            out.append(replace(r, adjusted_p=adj, significant=adj < alpha))
    return out


def stars(p: float | None) -> str:
    if p is None:
        return ""
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


def format_p(p: float | None) -> str:
    if p is None:
        return "---"
    if p >= 1.0:
        return "1.0"
    if p >= 0.001:
        return f"{p:.3f}"
    return f"{p:.1e}"


# Pareto analysis


@dataclass(frozen=True)
class ParetoPoint:
    config_id: str
    f1: float
    seconds_per_article: float

    def __post_init__(self):
        if not (math.isfinite(self.f1) and math.isfinite(self.seconds_per_article)):
            raise ValueError(f"{self.config_id}: non-finite coordinates")
        if not 0.0 <= self.f1 <= 1.0:
            raise ValueError(f"{self.config_id}: f1 outside [0, 1]")


def dominates(p: ParetoPoint, q: ParetoPoint) -> bool:
    return (
        p.f1 >= q.f1
        and p.seconds_per_article <= q.seconds_per_article
        and (p.f1 > q.f1 or p.seconds_per_article < q.seconds_per_article)
    )


def pareto_front(points: Sequence[ParetoPoint]) -> list[ParetoPoint]:
    """Non-dominated points (max f1, min seconds) in input order; exact duplicates all kept."""
    if not points:
        raise ValueError("no points")
    mask = kernels.pareto_mask([p.f1 for p in points], [p.seconds_per_article for p in points])
    return [p for p, keep in zip(points, mask) if keep]


@dataclass(frozen=True)
class Representatives:
    best_f1: ParetoPoint
    fastest: ParetoPoint
    efficient: ParetoPoint
    knee_scores: dict = field(default_factory=dict, compare=False)

    def as_dict(self) -> dict[str, ParetoPoint]:
        return {"best_f1": self.best_f1, "fastest": self.fastest, "efficient": self.efficient}


def _scale(v: float, lo: float, hi: float) -> float:
    return (v - lo) / (hi - lo) if hi > lo else 0.0


def select_representatives(front: Sequence[ParetoPoint]) -> Representatives:
    """Best-F1, fastest, and a knee point chosen by a fixed rule.

    The knee maximizes normalized F1 minus normalized seconds over the front.
    """
    if not front:
        raise ValueError("empty front")
    best = min(front, key=lambda p: (-p.f1, p.seconds_per_article))
    fastest = min(front, key=lambda p: (p.seconds_per_article, -p.f1))
    f_lo = min(p.f1 for p in front)
    f_hi = max(p.f1 for p in front)
    s_lo = min(p.seconds_per_article for p in front)
    s_hi = max(p.seconds_per_article for p in front)
    scores = {
        p.config_id: _scale(p.f1, f_lo, f_hi) - _scale(p.seconds_per_article, s_lo, s_hi) for p in front
    }
    efficient = max(front, key=lambda p: (scores[p.config_id], p.f1, -p.seconds_per_article))
    return Representatives(best, fastest, efficient, scores)
