"""Temporal transaction-graph scam detection (Python bindings)."""

from ._txscam import (  # noqa: F401
    Error,
    InputError,
    alias_sample,
    degree_stats,
    detect,
    gen_dataset,
    interval_index,
    metrics,
    strwalk,
    temporal_step_weights,
    train,
)

__all__ = [
    "Error",
    "InputError",
    "alias_sample",
    "degree_stats",
    "detect",
    "gen_dataset",
    "interval_index",
    "metrics",
    "strwalk",
    "temporal_step_weights",
    "train",
]
