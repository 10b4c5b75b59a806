"""Python bindings for the tsdiff event-sequence generator."""

from ._tsdiff import (
    DataError,
    Dataset,
    Error,
    Event,
    EventSequence,
    LossBreakdown,
    Model,
    NumericalError,
    UsageError,
    default_config,
    durations,
    gen_oracle,
    inject_missing_mcar,
    inverse_standardize,
    load_jsonl,
    prd,
    prd_features,
    save_jsonl,
    standardize,
    tfc_score,
)

__all__ = [
    "DataError",
    "Dataset",
    "Error",
    "Event",
    "EventSequence",
    "LossBreakdown",
    "Model",
    "NumericalError",
    "UsageError",
    "default_config",
    "durations",
    "gen_oracle",
    "inject_missing_mcar",
    "inverse_standardize",
    "load_jsonl",
    "prd",
    "prd_features",
    "save_jsonl",
    "standardize",
    "tfc_score",
]
