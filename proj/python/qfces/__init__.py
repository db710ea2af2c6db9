"""Python access to the qfces scoring, correlation and agreement routines."""

from ._core import (
    BackendError,
    ValidationError,
    check_format,
    compare_means,
    dataset_stats,
    extract_score,
    flag_discrepancies,
    kendall_tau_b,
    krippendorff_alpha,
    parse_ces,
    spearman,
    summary_level_corr,
    weighted_score,
)

__all__ = [
    "BackendError",
    "ValidationError",
    "check_format",
    "compare_means",
    "dataset_stats",
    "extract_score",
    "flag_discrepancies",
    "kendall_tau_b",
    "krippendorff_alpha",
    "parse_ces",
    "spearman",
    "summary_level_corr",
    "weighted_score",
]
