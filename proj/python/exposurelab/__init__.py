"""AI exposure indices, new-work detection and fixed-effect regressions."""

from ._core import (
    DataError,
    Error,
    NumericalError,
    ValidationError,
    absorb,
    cluster_vcov,
    joint_top_quantile,
    load_embeddings,
    normalize_title,
    run,
    save_embeddings,
    tag_scores,
    test_embeddings,
    tsls,
    wls,
)

__all__ = [
    "DataError",
    "Error",
    "NumericalError",
    "ValidationError",
    "absorb",
    "cluster_vcov",
    "joint_top_quantile",
    "load_embeddings",
    "normalize_title",
    "run",
    "save_embeddings",
    "tag_scores",
    "test_embeddings",
    "tsls",
    "wls",
]
