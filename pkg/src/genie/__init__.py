"""Schema-guided information extraction from news text with local language models."""

from __future__ import annotations

from .analysis import bonferroni, build_pairs, pareto_front, select_representatives, wilcoxon_signed_rank
from .backend import GenerationParams, HttpBackend, MockBackend, ModelRef
from .corpus import NewsArticle, load_corpus, load_labels, stratified_split
from .evalkit import evaluate_records
from .jsonx import extract_json
from .pipeline import PipelineConfig, RunRecord, run_article
from .prompts import StrategyFlags, TaskSpec, task_from_config
from .schema import ExtractionSchema, FieldSpec

__version__ = "0.1.0"

__all__ = [
    "ExtractionSchema", "FieldSpec", "GenerationParams", "HttpBackend", "MockBackend", "ModelRef",
    "NewsArticle", "PipelineConfig", "RunRecord", "StrategyFlags", "TaskSpec", "bonferroni",
    "build_pairs", "evaluate_records", "extract_json", "load_corpus", "load_labels", "pareto_front",
    "run_article", "select_representatives", "stratified_split", "task_from_config",
    "wilcoxon_signed_rank",
]
