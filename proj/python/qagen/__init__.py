"""Synthetic question-answer generation from passages."""
import json

from ._qagen import (
    FormatError,
    GeneratedPair,
    ScoringError,
    UsageError,
    ValidationError,
    Vocabulary,
    __version__,
    bleu,
    bucket_analysis,
    build_target,
    build_vocab,
    contains_answer,
    detokenize,
    exact_match,
    f1_score,
    lexical_oracle,
    lm_score,
    normalize_answer,
    select_top_m,
    tokenize,
    truncate,
)
from ._qagen import _run

SUBCOMMANDS = ("train-lm", "generate", "filter", "evaluate", "analyze", "mix")


def run(subcommand, config):
    """Run a pipeline subcommand with a flat config dict; returns the manifest."""
    if subcommand not in SUBCOMMANDS:
        raise UsageError(f"unknown subcommand {subcommand!r}")
    return json.loads(_run(subcommand, json.dumps(config)))
