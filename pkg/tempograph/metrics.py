"""
Ranking metrics for link prediction.

Scores come from whole query streams, so both metrics refuse a label set with
a single class instead of returning sklearn's undefined-metric fallback.
"""

import logging
from typing import Sequence, Tuple, Union

import numpy as np
from sklearn.metrics import average_precision_score, roc_auc_score

from .errors import MetricError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, Sequence[float]]


def _validate(scores: ArrayLike, labels: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels, dtype=np.float64).reshape(-1)
    if scores.shape != labels.shape:
        raise MetricError(f"{scores.size} scores vs {labels.size} labels")
    if not np.all((labels == 0) | (labels == 1)):
        raise MetricError("labels must be 0 or 1")
    positives = int(labels.sum())
    if positives == 0 or positives == labels.size:
        raise MetricError(f"need both classes, got {positives} positives of {labels.size}")
    if not np.all(np.isfinite(scores)):
        raise MetricError("scores must be finite")
    return scores, labels.astype(np.int64)


def average_precision(scores: ArrayLike, labels: ArrayLike) -> float:
    """
    Mean over positives of the precision at each positive's rank, scores
    descending. Tied scores form one threshold, so query order within a tie
    never changes the result.
    """
    scores, labels = _validate(scores, labels)
    return float(average_precision_score(labels, scores))


def auc_roc(scores: ArrayLike, labels: ArrayLike) -> float:
    """P(random positive outscores random negative), ties counting one half."""
    scores, labels = _validate(scores, labels)
    return float(roc_auc_score(labels, scores))
