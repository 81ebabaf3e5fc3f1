"""Embedding-driven evaluation engine for multilingual image-captioning metrics.

The package computes CLIPScore/RefCLIPScore from stored embeddings, correlates
metric values with human ratings (Spearman rho, Kendall tau-b/tau-c with full
tie accounting), runs classification-style benchmark tasks, selects
quality-filtered machine translations, and finetunes a linear embedding
adapter with a combined contrastive + Pearson objective.

Everything is exposed twice: as a FastAPI service (``capeval.service``) and as
a thin CLI client (``capeval.cli``) that speaks to the service in-process by
default or to a remote instance via ``--server``.
"""

__version__ = "0.1.0"

from capeval.errors import CapevalError, DataError, NumericError, UsageError

__all__ = [
    "CapevalError",
    "DataError",
    "NumericError",
    "UsageError",
    "__version__",
]
