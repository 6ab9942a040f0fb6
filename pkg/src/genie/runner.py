"""Factorial sweeps over models and strategy flags, resumable from disk."""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import itertools
import json
import logging
import os
import threading
import urllib.parse
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import yaml

from .backend import (
    BACKEND_URL_ENV,
    Backend,
    BackendUnreachable,
    GenerationParams,
    HttpBackend,
    MockBackend,
    ModelRef,
)
from .corpus import NewsArticle, load_corpus, load_labels
from .evalkit import BACKEND_FAILURE, evaluate_records
from .mock import KeywordResponder
from .pipeline import JsonlSink, PipelineConfig, RunRecord, export_records_csv, read_records, run_article
from .prompts import FLAG_NAMES, JGEN_PROMPT, StrategyFlags, TaskSpec, task_from_config

log = logging.getLogger(__name__)

PENDING, RUNNING, DONE, FAILED = "pending", "running", "done", "failed"
SUMMARY_METRICS = ("accuracy", "precision", "recall", "f1", "parsing_error_rate", "mean_exec_seconds")


class ManifestMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentGrid:
    models: tuple[ModelRef, ...]
    task: TaskSpec
    vary: tuple[str, ...] = FLAG_NAMES
    jgen: str = JGEN_PROMPT
    params: GenerationParams = GenerationParams()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        object.__setattr__(self, "vary", tuple(self.vary))
        bad = [v for v in self.vary if v not in FLAG_NAMES]
        if bad:
            raise ValueError(f"unknown flags to vary: {bad}")
        ids = [m.id for m in self.models]
        if len(set(ids)) != len(ids):
            raise ValueError("model ids must be unique")
        if not ids:
            raise ValueError("grid has no models")


def enumerate_grid(grid: ExperimentGrid) -> list[PipelineConfig]:
    """All cells: models in declared order, flags in binary order (``sum`` most significant)."""
    varied = [f for f in FLAG_NAMES if f in grid.vary]
    out = []
    for model in grid.models:
        for bits in itertools.product((False, True), repeat=len(varied)):
            flags = StrategyFlags(**dict(zip(varied, bits)), jgen=grid.jgen)
            out.append(PipelineConfig(grid.task, model, flags, grid.params))
    return out


def record_filename(config_id: str) -> str:
    return urllib.parse.quote(config_id, safe="._-") + ".jsonl"


def grid_hash(grid: ExperimentGrid, article_ids: Sequence[str]) -> str:
    payload = {
        "models": [m.id for m in grid.models],
        "vary": list(grid.vary),
        "jgen": grid.jgen,
        "task": grid.task.name,
        "schema": grid.task.schema.to_dict(),
        "params": grid.params.options(),
        "articles": list(article_ids),
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    grid_hash: str
    cells: dict[str, dict[str, Any]] = field(default_factory=dict)
    created: str = field(default_factory=_now)
    path: Path | None = field(default=None, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {"grid_hash": self.grid_hash, "created": self.created, "cells": self.cells}

    @classmethod
    def load(cls, path) -> "RunManifest":
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(d["grid_hash"], d["cells"], d.get("created", ""), Path(path))

    def save(self) -> None:
        if self.path is None:
            return
        tmp = self.path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True), encoding="utf-8")
        os.replace(tmp, self.path)

    def update(self, config_id: str, **changes) -> None:
        with self._lock:
            self.cells[config_id].update(changes, updated=_now())
            self.save()

    def counts(self) -> dict[str, int]:
        out = {PENDING: 0, RUNNING: 0, DONE: 0, FAILED: 0}
        for c in self.cells.values():
            out[c["status"]] += 1
        return out


def latest_records(path) -> dict[str, RunRecord]:
    """Last persisted record per article in one cell file."""
    return {r.article_id: r for r in read_records(path)}


@dataclass
class SweepResult:
    manifest: RunManifest
    calls_made: int = 0
    records_written: int = 0


def _run_cell(config: PipelineConfig, articles: Sequence[NewsArticle], backend: Backend, out_dir: Path,
              manifest: RunManifest, failure_budget: int) -> int:
    cid = config.config_id
    path = out_dir / "records" / record_filename(cid)
    have = latest_records(path)
    pending = [a for a in articles if a.id not in have or have[a.id].status == BACKEND_FAILURE]
    if not pending:
        manifest.update(cid, status=DONE, done_articles=len(articles))
        return 0
    manifest.update(cid, status=RUNNING)
    sink = JsonlSink(path)
    streak = written = 0
    complete = len(articles) - len(pending)
    for article in pending:
        rec = run_article(config, article, backend)
        sink.append(rec)
        written += 1
        if rec.status == BACKEND_FAILURE:
            streak += 1
            if streak > failure_budget:
                log.error("%s: %d consecutive backend failures, abandoning cell", cid, streak)
                manifest.update(cid, status=FAILED, done_articles=complete)
                return written
        else:
            streak = 0
            complete += 1
    status = DONE if complete == len(articles) else FAILED
    manifest.update(cid, status=status, done_articles=complete)
    return written


def run_sweep(
    grid: ExperimentGrid,
    articles: Sequence[NewsArticle],
    backend: Backend,
    out_dir,
    workers: int = 1,
    failure_budget: int = 3,
) -> RunManifest:
    """Run every pending (cell, article) pair and persist records as they complete.

    Re-invoking over the same directory skips every persisted record; articles
    whose last record is a backend failure are retried.
    """
    backend.check_reachable()
    out = Path(out_dir)
    (out / "records").mkdir(parents=True, exist_ok=True)
    (out / "reports").mkdir(exist_ok=True)
    configs = enumerate_grid(grid)
    h = grid_hash(grid, [a.id for a in articles])
    mpath = out / "manifest.json"
    if mpath.exists():
        manifest = RunManifest.load(mpath)
        if manifest.grid_hash != h:
            raise ManifestMismatch(f"{mpath} belongs to a different grid ({manifest.grid_hash} != {h})")
    else:
        manifest = RunManifest(h, path=mpath)
    for c in configs:
        cell = manifest.cells.setdefault(
            c.config_id, {"status": PENDING, "records": f"records/{record_filename(c.config_id)}", "done_articles": 0}
        )
        if cell["status"] == RUNNING:
            cell["status"] = PENDING
    manifest.save()

    todo = [c for c in configs if manifest.cells[c.config_id]["status"] != DONE]
    warmed = set()
    for c in todo:
        if c.model.id not in warmed:
            backend.warm_up(c.model, c.params)
            warmed.add(c.model.id)

    if workers <= 1:
        for c in todo:
            _run_cell(c, articles, backend, out, manifest, failure_budget)
    else:
        local = threading.local()

        def work(c):
            if not hasattr(local, "backend"):
                local.backend = backend.clone()
            return _run_cell(c, articles, local.backend, out, manifest, failure_budget)

        with ThreadPoolExecutor(max_workers=workers) as pool:
            for fut in [pool.submit(work, c) for c in todo]:
                fut.result()
    return manifest


# Summaries


def collect_records(out_dir, configs: Sequence[PipelineConfig] | None = None) -> dict[str, list[RunRecord]]:
    out = Path(out_dir)
    result = {}
    if configs is not None:
        paths = [(c.config_id, out / "records" / record_filename(c.config_id)) for c in configs]
    else:
        paths = []
        for p in sorted((out / "records").glob("*.jsonl")):
            recs = read_records(p)
            if recs:
                paths.append((recs[0].config_id, p))
    for cid, p in paths:
        result[cid] = list(latest_records(p).values())
    return result


def summary_columns() -> list[str]:
    return ["config_id", "model", *FLAG_NAMES, "jgen", "n_articles", "n_parsed", "n_backend_failures",
            *SUMMARY_METRICS]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    return repr(v) if isinstance(v, float) else str(v)


def write_summary(records: Mapping[str, Sequence[RunRecord]], labels, task: TaskSpec, path, gazetteer=None) -> int:
    """One row of evaluation metrics per configuration."""
    from .pipeline import parse_config_id

    rows = 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(summary_columns())
        for cid in sorted(records):
            recs = records[cid]
            model, flags = parse_config_id(cid)
            report = evaluate_records(recs, labels, task.schema, gazetteer) if labels else None
            metrics = report.to_dict() if report else {}
            row = [cid, model, *(_fmt(getattr(flags, f)) for f in FLAG_NAMES), flags.jgen,
                   _fmt(metrics.get("n_articles", len(recs))), _fmt(metrics.get("n_parsed")),
                   str(sum(r.status == BACKEND_FAILURE for r in recs))]
            row += [_fmt(metrics.get(m)) for m in SUMMARY_METRICS]
            w.writerow(row)
            rows += 1
    return rows


def read_summary(path) -> list[dict[str, Any]]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k in SUMMARY_METRICS:
            r[k] = float(r[k]) if r.get(k) not in (None, "") else None
    return rows


# Configuration files


def _resolve(ref: str, base: Path) -> Path | Any:
    if ref.startswith("builtin:"):
        return resources.files("genie").joinpath("data", ref[len("builtin:"):])
    p = Path(ref)
    return p if p.is_absolute() else base / p


@dataclass
class RunSettings:
    grid: ExperimentGrid
    corpus: Any
    labels: Any | None
    out_dir: Path
    backend: dict
    workers: int = 1
    failure_budget: int = 3


def load_settings(path) -> RunSettings:
    path = Path(path)
    cfg = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    if not isinstance(cfg, dict):
        raise ValueError(f"{path}: top level must be a mapping")
    base = path.parent
    task_cfg = dict(cfg.get("task") or {})
    if task_cfg.get("descriptions_file") and not str(task_cfg["descriptions_file"]).startswith("builtin:"):
        task_cfg["descriptions_file"] = str(_resolve(task_cfg["descriptions_file"], base))
    templates = dict(task_cfg.get("templates") or {})
    for k, v in templates.items():
        if not str(v).startswith("builtin:"):
            templates[k] = str(_resolve(v, base))
    if templates:
        task_cfg["templates"] = templates
    task = task_from_config(task_cfg)
    g = cfg.get("grid") or {}
    models = [ModelRef.from_dict(m) if isinstance(m, Mapping) else ModelRef(id=str(m)) for m in g.get("models", [])]
    gen = cfg.get("generation") or {}
    params = GenerationParams(**{k: gen[k] for k in ("temperature", "seed", "max_output_tokens",
                                                      "context_window_tokens") if k in gen})
    grid = ExperimentGrid(
        models=tuple(models), task=task, vary=tuple(g.get("vary", FLAG_NAMES)),
        jgen=g.get("jgen", JGEN_PROMPT), params=params, seed=int(cfg.get("seed", 0)),
    )
    ds = cfg.get("dataset") or {}
    if "corpus" not in ds:
        raise ValueError(f"{path}: dataset.corpus is required")
    outc = cfg.get("output") or {}
    run = cfg.get("run") or {}
    return RunSettings(
        grid=grid,
        corpus=_resolve(ds["corpus"], base),
        labels=_resolve(ds["labels"], base) if ds.get("labels") else None,
        out_dir=_resolve(outc.get("dir", "genie-out"), base),
        backend=dict(cfg.get("backend") or {}),
        workers=int(run.get("workers", 1)),
        failure_budget=int(run.get("failure_budget", 3)),
    )


def build_backend(bcfg: Mapping[str, Any], location_field: str = "response") -> Backend:
    kind = bcfg.get("kind", "http")
    if kind == "mock":
        m = bcfg.get("mock") or {}
        responder = KeywordResponder(noise=m.get("noise", {}), sloppy=m.get("sloppy", {}),
                                     location_field=location_field)
        return MockBackend(
            responder=responder,
            latency_base_s=float(m.get("latency_base_s", 0.0)),
            latency_per_char_s=float(m.get("latency_per_char_s", 0.0)),
            speed=m.get("speed", {}),
        )
    if kind == "http":
        url = os.environ.get(BACKEND_URL_ENV) or bcfg.get("url")
        return HttpBackend(url, float(bcfg.get("timeout_s", 300)), int(bcfg.get("retries", 0)))
    raise ValueError(f"unknown backend kind {kind!r}")


def _open(ref):
    """Materialize a package resource or path as a filesystem path."""
    return resources.as_file(ref) if not isinstance(ref, Path) else _nullctx(ref)


class _nullctx:
    def __init__(self, v):
        self.v = v

    def __enter__(self):
        return self.v

    def __exit__(self, *exc):
        return False


def execute(settings: RunSettings, backend: Backend | None = None,
            progress: Callable[[str], None] | None = None) -> RunManifest:
    """Run a configured sweep end to end and write summary.csv plus reports."""
    task = settings.grid.task
    loc_field = task.schema.field_names[0] if task.name == "locations" else "response"
    backend = backend or build_backend(settings.backend, loc_field)
    with _open(settings.corpus) as cp:
        articles = load_corpus(cp)
    labels = None
    if settings.labels is not None:
        with _open(settings.labels) as lp:
            labels = load_labels(lp, task.schema)
    if not articles:
        raise ValueError("corpus is empty")
    manifest = run_sweep(settings.grid, articles, backend, settings.out_dir, settings.workers,
                         settings.failure_budget)
    configs = enumerate_grid(settings.grid)
    records = collect_records(settings.out_dir, configs)
    write_summary(records, labels, task, Path(settings.out_dir) / "summary.csv")
    flat = [r for c in configs for r in records.get(c.config_id, [])]
    export_records_csv(flat, Path(settings.out_dir) / "reports" / "records.csv", task.schema)
    if progress:
        progress(f"cells: {manifest.counts()}")
    return manifest


__all__ = [
    "BackendUnreachable", "ExperimentGrid", "ManifestMismatch", "RunManifest", "RunSettings",
    "build_backend", "collect_records", "enumerate_grid", "execute", "grid_hash", "load_settings",
    "read_summary", "record_filename", "run_sweep", "write_summary",
]
