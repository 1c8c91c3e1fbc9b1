"""Multinomial logistic classifier over stored features.

Trained from scratch each round by mini-batch gradient descent on softmax
cross-entropy with a step learning-rate decay.  This deliberately consumes
precomputed feature vectors rather than raw images; a CSV import path exists
for prediction vectors computed by an external model.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, SchemaError, TrainingError

_ROW_SUM_TOL = 1e-3


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    learning_rate: float = 0.01
    lr_decay: float = 0.5
    decay_every: int = 20
    batch_size: int = 128
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1 or self.decay_every < 1:
            raise ConfigError("epochs, batch_size and decay_every must be positive")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if not 0 < self.lr_decay <= 1:
            raise ConfigError("lr_decay must be in (0, 1]")


@dataclass
class Classifier:
    """Softmax-linear model; output c corresponds to ``classes[c]``."""

    weights: np.ndarray
    bias: np.ndarray
    classes: tuple[int, ...]
    train_log: list[float] = field(default_factory=list)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def output_index(self, label: int) -> int:
        return self.classes.index(label)


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = np.exp(logits - logits.max(axis=1, keepdims=True))
    return shifted / shifted.sum(axis=1, keepdims=True)


def loss_and_gradient(
    weights: np.ndarray, bias: np.ndarray, x: np.ndarray, y_idx: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy loss and its analytic gradient on a batch.

    ``y_idx`` holds output indices (already mapped through the class list).
    """
    m = x.shape[0]
    probs = _softmax_rows(x @ weights.T + bias)
    loss = float(-np.mean(np.log(probs[np.arange(m), y_idx])))
    delta = probs.copy()
    delta[np.arange(m), y_idx] -= 1.0
    delta /= m
    return loss, delta.T @ x, delta.sum(axis=0)


def train_classifier(
    x: np.ndarray,
    labels: np.ndarray,
    known_classes: set[int] | frozenset[int],
    cfg: TrainConfig,
) -> Classifier:
    """Fit the softmax classifier; deterministic given cfg.seed.

    Every configured known class must appear in the labeled data, since the
    model has one output per known class.
    """
    classes = tuple(sorted(int(c) for c in known_classes))
    if len(classes) < 2:
        raise ConfigError("training requires at least two known classes")
    labels = np.asarray(labels)
    present = set(int(l) for l in labels)
    if not present <= set(classes):
        raise TrainingError(f"labels outside the known set: {sorted(present - set(classes))}")
    for c in classes:
        if c not in present:
            raise TrainingError(f"known class {c} has no labeled samples")

    x = np.asarray(x, dtype=np.float64)
    n, dim = x.shape
    index_of = {c: i for i, c in enumerate(classes)}
    y_idx = np.asarray([index_of[int(l)] for l in labels], dtype=np.int64)

    rng = np.random.default_rng(cfg.seed)
    weights = rng.normal(scale=0.01, size=(len(classes), dim))
    bias = np.zeros(len(classes))
    train_log: list[float] = []
    for epoch in range(cfg.epochs):
        lr = cfg.learning_rate * cfg.lr_decay ** (epoch // cfg.decay_every)
        perm = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, cfg.batch_size):
            batch = perm[start : start + cfg.batch_size]
            loss, grad_w, grad_b = loss_and_gradient(weights, bias, x[batch], y_idx[batch])
            weights -= lr * grad_w
            bias -= lr * grad_b
            epoch_losses.append(loss)
        train_log.append(float(np.mean(epoch_losses)))
    return Classifier(weights=weights, bias=bias, classes=classes, train_log=train_log)


def predict_proba(clf: Classifier, x: np.ndarray) -> np.ndarray:
    """Softmax probabilities for one feature vector, ordered like clf.classes."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (clf.weights.shape[1],):
        raise ValueError(
            f"dimension mismatch: feature {x.shape} vs model dim {clf.weights.shape[1]}"
        )
    return _softmax_rows((clf.weights @ x + clf.bias)[None, :])[0]


def predict_proba_batch(clf: Classifier, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != clf.weights.shape[1]:
        raise ValueError("feature matrix has wrong shape")
    return _softmax_rows(x @ clf.weights.T + clf.bias)


def evaluate_accuracy(clf: Classifier, x: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of argmax-correct predictions on a test set."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ConfigError("test set is empty")
    probs = predict_proba_batch(clf, x)
    predicted = np.asarray(clf.classes)[probs.argmax(axis=1)]
    return float(np.mean(predicted == labels))


def load_external_predictions(
    path: str | os.PathLike,
    n_classes: int,
    valid_ids: set[int] | None = None,
) -> dict[int, np.ndarray]:
    """Parse a CSV of rows ``id,p_0,...,p_{C-1}`` into per-id probability vectors.

    Rows whose probabilities sum to within 1e-3 of one are re-normalized;
    anything further off is rejected with the row number.  A header row is
    tolerated.  When ``valid_ids`` is given, ids outside it are rejected.
    """
    out: dict[int, np.ndarray] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for rownum, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                sid = int(row[0])
            except ValueError:
                if rownum == 1:
                    continue  # header
                raise DataError(f"{path}: row {rownum}: non-integer id {row[0]!r}") from None
            if len(row) - 1 != n_classes:
                raise SchemaError(
                    f"{path}: row {rownum}: expected {n_classes} probabilities, got {len(row) - 1}"
                )
            try:
                probs = np.asarray([float(v) for v in row[1:]], dtype=np.float64)
            except ValueError as exc:
                raise DataError(f"{path}: row {rownum}: {exc}") from exc
            total = float(probs.sum())
            if abs(total - 1.0) > _ROW_SUM_TOL:
                raise DataError(
                    f"{path}: row {rownum}: probabilities sum to {total:.6f}, not 1"
                )
            if np.any(probs < 0):
                raise DataError(f"{path}: row {rownum}: negative probability")
            if valid_ids is not None and sid not in valid_ids:
                raise DataError(f"{path}: row {rownum}: unknown sample id {sid}")
            if sid in out:
                raise DataError(f"{path}: row {rownum}: duplicate sample id {sid}")
            out[sid] = probs / total
    return out
