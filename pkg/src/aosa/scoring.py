"""Selection scores: the prediction/neighborhood inconsistency score and entropy.

The inconsistency score of a candidate is the cross-entropy between the
classifier's predicted class distribution and the softmax-normalized
histogram of its neighbors' labels.  High values flag samples where the
model disagrees with the local label evidence.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .knn import NeighborList

_PROB_TOL = 1e-6


@dataclass(frozen=True)
class ScoreRecord:
    """Per-candidate scoring breakdown."""

    id: int
    model_probs: np.ndarray
    neighbor_counts: np.ndarray
    neighbor_probs: np.ndarray
    score: float


def neighbor_histogram(
    neighbors: NeighborList | Sequence[int], n_classes: int
) -> np.ndarray:
    """Count vector over class indices; entry c counts neighbors labeled c.

    Accepts a NeighborList or a plain label sequence.  Every label must
    already be a class index in [0, n_classes); invalid-marked neighbors must
    be filtered out by the caller before scoring.
    """
    labels = neighbors.labels() if isinstance(neighbors, NeighborList) else list(neighbors)
    counts = np.zeros(n_classes, dtype=np.int64)
    for lbl in labels:
        if not 0 <= lbl < n_classes:
            raise ValueError(f"neighbor label {lbl} outside [0, {n_classes})")
        counts[lbl] += 1
    return counts


def softmax_normalize(counts: np.ndarray) -> np.ndarray:
    """Softmax with max-subtraction; strictly positive, sums to one."""
    v = np.asarray(counts, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("softmax input must be finite")
    shifted = np.exp(v - v.max())
    return shifted / shifted.sum()


def _check_probability_vector(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0) or abs(float(p.sum()) - 1.0) > _PROB_TOL:
        raise ValueError("not a probability vector")
    return p


def inconsistency_score(model_probs: np.ndarray, neighbor_counts: np.ndarray) -> float:
    """Cross-entropy between the prediction and the softmaxed neighbor histogram.

    Always non-negative; equals logsumexp(counts) - <probs, counts> in closed
    form.  Terms where the prediction puts zero mass contribute nothing, even
    if the corresponding normalized count underflows to zero.
    """
    p = _check_probability_vector(model_probs)
    v = np.asarray(neighbor_counts, dtype=np.float64)
    if p.shape != v.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {v.shape}")
    v_norm = softmax_normalize(v)
    log_terms = np.log(np.where(p > 0, v_norm, 1.0))
    return float(-np.sum(np.where(p > 0, p * log_terms, 0.0)))


def entropy(probs: np.ndarray) -> float:
    """Shannon entropy in nats, with 0*log(0) taken as zero."""
    p = _check_probability_vector(probs)
    terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return float(-terms.sum())


def entropy_rows(probs: np.ndarray) -> np.ndarray:
    """Row-wise entropy of a matrix of probability vectors."""
    p = np.asarray(probs, dtype=np.float64)
    terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return -terms.sum(axis=1)


def score_candidate(
    sample_id: int,
    model_probs: np.ndarray,
    neighbor_labels: Sequence[int],
    n_classes: int,
) -> ScoreRecord:
    counts = neighbor_histogram(neighbor_labels, n_classes)
    return ScoreRecord(
        id=int(sample_id),
        model_probs=np.asarray(model_probs, dtype=np.float64),
        neighbor_counts=counts,
        neighbor_probs=softmax_normalize(counts),
        score=inconsistency_score(model_probs, counts),
    )
