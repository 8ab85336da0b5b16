"""Python bindings for the autohead C++ library."""

from ._autohead import (
    AutoheadError,
    RunConfig,
    bench,
    evaluate_scores,
    fuse,
    fuse_predictions,
    gen_data,
    normalize_auc_weights,
    report,
    roc_auc,
    search_head,
    timing_profile,
    train_cnns,
)

__all__ = [
    "AutoheadError",
    "RunConfig",
    "bench",
    "evaluate_scores",
    "fuse",
    "fuse_predictions",
    "gen_data",
    "normalize_auc_weights",
    "report",
    "roc_auc",
    "search_head",
    "timing_profile",
    "train_cnns",
]
