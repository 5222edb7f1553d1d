"""Multi-space visual-semantic embedding: synthetic corpora, training, retrieval."""

from ._mvse import (
    Corpus,
    DegenerateEmbedding,
    FormatError,
    Model,
    SpaceUnavailable,
    batch_loss,
    compute_metrics,
    gate_weights,
    gradcheck,
    median_rank,
    recall_at_k,
)

__all__ = [
    "Corpus",
    "DegenerateEmbedding",
    "FormatError",
    "Model",
    "SpaceUnavailable",
    "batch_loss",
    "compute_metrics",
    "gate_weights",
    "gradcheck",
    "median_rank",
    "recall_at_k",
]
