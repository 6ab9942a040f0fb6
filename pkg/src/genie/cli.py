"""Command-line entry point: ``genie run|eval|analyze|pareto|report``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from .backend import BackendError, BackendUnreachable
from .corpus import CorpusError, load_labels
from .evalkit import evaluate_records
from .pipeline import read_records
from .prompts import FLAG_NAMES, PRESETS, task_from_config
from .report import FACTOR_COLUMNS, PARETO_COLUMNS, factor_tests, pareto_rows, render_text, write_csv, write_reports
from .runner import execute, load_settings, read_summary

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BACKEND = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _task(args):
    if args.config:
        cfg = yaml.safe_load(Path(args.config).read_text(encoding="utf-8")) or {}
        return task_from_config(cfg.get("task") or {})
    return task_from_config({"preset": args.task})


def cmd_run(args) -> int:
    settings = load_settings(args.config)
    if args.workers:
        settings.workers = args.workers
    if args.out:
        settings.out_dir = Path(args.out)
    manifest = execute(settings, progress=print)
    print(f"output: {settings.out_dir}")
    return EXIT_OK if manifest.counts()["failed"] == 0 else EXIT_BACKEND


def cmd_eval(args) -> int:
    task = _task(args)
    src = Path(args.records)
    files = sorted(src.glob("*.jsonl")) if src.is_dir() else [src]
    labels = load_labels(args.labels, task.schema)
    grouped: dict[str, list] = {}
    for f in files:
        for r in read_records(f):
            grouped.setdefault(r.config_id, {})[r.article_id] = r
    out = {}
    for cid in sorted(grouped):
        out[cid] = evaluate_records(list(grouped[cid].values()), labels, task.schema).to_dict()
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_analyze(args) -> int:
    rows = read_summary(args.summary)
    factors = FLAG_NAMES if args.factor == "all" else (args.factor,)
    table = factor_tests(rows, args.metric, factors, m=args.m, alpha=args.alpha)
    if not table:
        print(f"no complete pairs for {args.factor} on {args.metric}", file=sys.stderr)
        return EXIT_DATA
    if args.csv:
        write_csv(table, FACTOR_COLUMNS, args.csv)
    print(render_text(table, FACTOR_COLUMNS), end="")
    return EXIT_OK


def cmd_pareto(args) -> int:
    rows = read_summary(args.summary)
    front = pareto_rows(rows, args.f1_column, args.seconds_column)
    if args.csv:
        write_csv(front, PARETO_COLUMNS, args.csv)
    print(render_text(front, PARETO_COLUMNS), end="")
    return EXIT_OK


def cmd_report(args) -> int:
    d = Path(args.dir)
    rows = read_summary(d / "summary.csv")
    written = write_reports(rows, d / "reports", m=args.m)
    for p in written:
        if p.suffix == ".txt":
            print(f"== {p.name}")
            print(p.read_text(encoding="utf-8"), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="genie", description="Schema-guided extraction sweeps with local language models.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="execute a sweep from a YAML configuration")
    r.add_argument("config")
    r.add_argument("--workers", type=int, default=0)
    r.add_argument("--out", help="override output.dir")
    r.set_defaults(fn=cmd_run)

    e = sub.add_parser("eval", help="score a record file or directory against gold labels")
    e.add_argument("records")
    e.add_argument("labels")
    g = e.add_mutually_exclusive_group()
    g.add_argument("--task", choices=sorted(PRESETS), default="impacts")
    g.add_argument("--config", help="take the task section from this YAML file")
    e.set_defaults(fn=cmd_eval)

    a = sub.add_parser("analyze", help="paired factor tests over a summary table")
    a.add_argument("summary")
    a.add_argument("--factor", required=True, choices=[*FLAG_NAMES, "all"])
    a.add_argument("--metric", required=True)
    a.add_argument("--m", type=int, default=None, help="Bonferroni family size")
    a.add_argument("--alpha", type=float, default=0.05)
    a.add_argument("--csv")
    a.set_defaults(fn=cmd_analyze)

    pa = sub.add_parser("pareto", help="F1 / seconds-per-article front")
    pa.add_argument("summary")
    pa.add_argument("--f1-column", default="f1")
    pa.add_argument("--seconds-column", default="mean_exec_seconds")
    pa.add_argument("--csv")
    pa.set_defaults(fn=cmd_pareto)

    rep = sub.add_parser("report", help="write factor and front tables for a run directory")
    rep.add_argument("dir")
    rep.add_argument("--m", type=int, default=None)
    rep.set_defaults(fn=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except (BackendUnreachable, BackendError) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (CorpusError, ValueError, KeyError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
