"""Prompt assembly, score extraction, metrics and grid runs for LLM essay scoring.

The heavy lifting happens in the compiled ``_core`` module; this package
re-exports it and adds a few conveniences.
"""

from pathlib import Path

from ._core import (
    Corpus,
    EssayfbError,
    FormatError,
    MetricError,
    NotFoundError,
    ScriptedEndpoint,
    ValidationError,
    assemble_prompt,
    build_judge_prompt,
    extract_score,
    krippendorff_alpha_interval,
    load_corpus,
    mean_std,
    pearson,
    plan_strategies,
    qwk,
    run_grid,
    score_table,
    set_log_level,
    split_feedback,
)

__all__ = [
    "Corpus",
    "EssayfbError",
    "FormatError",
    "MetricError",
    "NotFoundError",
    "ScriptedEndpoint",
    "ValidationError",
    "assemble_prompt",
    "build_judge_prompt",
    "extract_score",
    "krippendorff_alpha_interval",
    "load_corpus",
    "load_corpus_dir",
    "mean_std",
    "pearson",
    "plan_strategies",
    "qwk",
    "run_grid",
    "score_table",
    "set_log_level",
    "split_feedback",
]


def load_corpus_dir(path):
    """Loads DIR/essays.tsv, DIR/sets and DIR/folds.tsv."""
    root = Path(path)
    return load_corpus(root / "essays.tsv", root / "sets", root / "folds.tsv")
