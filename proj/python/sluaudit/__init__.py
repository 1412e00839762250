"""Demographic bias audit for spoken-language-understanding output."""

from ._core import (
    DataError,
    RankDeficiencyError,
    SeparationError,
    StatError,
    __version__,
    adjust,
    audit,
    chi2_contingency,
    default_schema,
    exact_match,
    matrix,
    one_way_anova,
    report_json,
    report_markdown,
    score,
    simulate,
    tokenize,
    validate,
    word_error_counts,
)

__all__ = [
    "DataError",
    "RankDeficiencyError",
    "SeparationError",
    "StatError",
    "__version__",
    "adjust",
    "audit",
    "chi2_contingency",
    "default_schema",
    "exact_match",
    "matrix",
    "one_way_anova",
    "report_json",
    "report_markdown",
    "score",
    "simulate",
    "tokenize",
    "validate",
    "word_error_counts",
]
