"""The budgeted multi-round annotation loop with a simulated oracle.

Each round trains a fresh classifier on the labeled set, detects known-class
candidates, selects a batch, annotates it against ground truth (unknown-class
samples come back invalid and never enter the labeled set), updates the
state, and records metrics.  The whole loop is deterministic given the
configuration seed.
"""

from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .detection import detect_known
from .errors import ConfigError, DataError, StateError
from .feature_store import (
    INVALID_LABEL,
    FeatureStore,
    PartitionState,
    split_initial,
)
from .knn import KnnIndex
from .model import TrainConfig, evaluate_accuracy, train_classifier
from .strategies import STRATEGY_NAMES, run_strategy

ROUNDS_CSV_HEADER = (
    "round,selected,known_selected,precision,recall_cum,test_accuracy,"
    "labeled_size,candidate_set_size"
)


@dataclass(frozen=True)
class ProtocolConfig:
    """Everything one run needs besides the feature store itself.

    ``rounds``/``budget``/``neighbors`` are the T/B/K knobs of the loop.
    ``use_invalid_neighbors`` controls whether invalid-annotated samples
    participate in neighbor search (as non-known labels); with it off the
    all-known filter is vacuous whenever the labeled set is all-known.
    """

    rounds: int
    budget: int
    neighbors: int
    strategy: str
    known_classes: frozenset[int]
    init_fraction: float
    test_fraction: float
    seed: int
    model: TrainConfig = field(default_factory=TrainConfig)
    prefilter: bool = False
    use_invalid_neighbors: bool = True

    def __post_init__(self) -> None:
        if self.rounds < 1 or self.budget < 1 or self.neighbors < 1:
            raise ConfigError("rounds, budget and neighbors must be >= 1")
        if self.strategy not in STRATEGY_NAMES:
            raise ConfigError(
                f"unknown strategy {self.strategy!r}; choose from {STRATEGY_NAMES}"
            )
        if not self.known_classes:
            raise ConfigError("known_classes must be non-empty")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("test_fraction must be in (0, 1) for per-round accuracy")


@dataclass(frozen=True)
class RoundReport:
    """Metrics for one query round.

    ``test_accuracy`` belongs to the classifier trained at the start of the
    round (on the labeled set before this round's additions); ``labeled_size``
    is the labeled-set size after the additions.
    """

    round: int
    selected: int
    known_selected: int
    precision: float
    recall_cumulative: float
    test_accuracy: float
    labeled_size: int
    candidate_set_size: int


@dataclass(frozen=True)
class ProtocolResult:
    reports: tuple[RoundReport, ...]
    truncated: bool
    n_total_known: int
    wall_time_s: float


def oracle_annotate(
    batch_ids, store: FeatureStore, known_classes: frozenset[int] | set[int]
) -> tuple[dict[int, int], set[int]]:
    """Ground-truth annotation: known-class samples get their label, others invalid."""
    known_labeled: dict[int, int] = {}
    invalid: set[int] = set()
    for sid in batch_ids:
        label = store.label_of(sid)  # raises DataError for unknown ids
        if label in known_classes:
            known_labeled[int(sid)] = label
        else:
            invalid.add(int(sid))
    return known_labeled, invalid


def apply_round(
    state: PartitionState, known_labeled: dict[int, int], invalid: set[int]
) -> None:
    """Move a batch out of the pool; only known-labeled samples join the labeled set."""
    batch = set(known_labeled) | set(invalid)
    if len(batch) != len(known_labeled) + len(invalid):
        raise StateError("annotation outputs overlap")
    for sid in batch:
        if sid in state.labeled or sid in state.invalid:
            raise StateError(f"sample {sid} was already annotated")
        if sid not in state.pool:
            raise StateError(f"sample {sid} is not in the pool")
    state.pool -= batch
    state.labeled.update(known_labeled)
    state.invalid |= invalid


def compute_metrics(
    counts: list[tuple[int, int]], n_total_known: int
) -> list[tuple[float, float]]:
    """Per-round (precision, cumulative recall) from (selected, known_selected) counts.

    Recall divides by the number of known-class samples in the initial pool;
    with none, recall is reported as 1.0 (nothing to find).
    """
    out = []
    cum = 0
    for selected, known_selected in counts:
        if known_selected > selected or selected < 1:
            raise DataError("invalid per-round counts")
        cum += known_selected
        precision = known_selected / selected
        recall = 1.0 if n_total_known == 0 else cum / n_total_known
        out.append((precision, recall))
    return out


def _build_round_index(
    state: PartitionState, store: FeatureStore, use_invalid_neighbors: bool
) -> KnnIndex:
    entries = [
        (sid, state.labeled[sid], store.feature_of(sid))
        for sid in sorted(state.labeled)
    ]
    if use_invalid_neighbors:
        entries.extend(
            (sid, INVALID_LABEL, store.feature_of(sid))
            for sid in sorted(state.invalid)
        )
    return KnnIndex.build(entries)


def run_protocol(cfg: ProtocolConfig, store: FeatureStore) -> ProtocolResult:
    """Execute the full loop; returns one report per completed round."""
    started = time.perf_counter()
    state = split_initial(
        store, cfg.known_classes, cfg.init_fraction, cfg.test_fraction, cfg.seed
    )
    n_total_known = sum(
        1 for sid in state.pool if store.label_of(sid) in cfg.known_classes
    )
    test_ids = sorted(state.test)
    if not test_ids:
        raise ConfigError("test split is empty; raise test_fraction")
    test_x = np.stack([store.feature_of(i) for i in test_ids])
    test_y = np.asarray([store.label_of(i) for i in test_ids])

    reports: list[RoundReport] = []
    counts: list[tuple[int, int]] = []
    truncated = False
    for t in range(1, cfg.rounds + 1):
        if not state.pool:
            truncated = True
            break
        labeled_ids = sorted(state.labeled)
        train_x = np.stack([store.feature_of(i) for i in labeled_ids])
        train_y = np.asarray([state.labeled[i] for i in labeled_ids])
        clf = train_classifier(train_x, train_y, cfg.known_classes, cfg.model)
        index = _build_round_index(state, store, cfg.use_invalid_neighbors)
        candidates = detect_known(
            state.pool, store, index, cfg.neighbors, cfg.known_classes, t
        )
        batch = run_strategy(
            cfg.strategy,
            state=state,
            store=store,
            index=index,
            clf=clf,
            k=cfg.neighbors,
            budget=cfg.budget,
            seed=[cfg.seed, t],
            round_index=t,
            prefilter=cfg.prefilter,
            candidates=candidates,
        )
        known_labeled, invalid = oracle_annotate(batch.ids, store, cfg.known_classes)
        apply_round(state, known_labeled, invalid)
        counts.append((len(batch.ids), len(known_labeled)))
        precision, recall = compute_metrics(counts, n_total_known)[-1]
        reports.append(
            RoundReport(
                round=t,
                selected=len(batch.ids),
                known_selected=len(known_labeled),
                precision=precision,
                recall_cumulative=recall,
                test_accuracy=evaluate_accuracy(clf, test_x, test_y),
                labeled_size=len(state.labeled),
                candidate_set_size=len(candidates.members),
            )
        )
        state.check(store)
    return ProtocolResult(
        reports=tuple(reports),
        truncated=truncated,
        n_total_known=n_total_known,
        wall_time_s=time.perf_counter() - started,
    )


def write_rounds_csv(reports, path: str | os.PathLike) -> None:
    """Write per-round metrics; floats at full precision so replay is exact."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(ROUNDS_CSV_HEADER + "\n")
        for r in reports:
            fh.write(
                f"{r.round},{r.selected},{r.known_selected},{r.precision!r},"
                f"{r.recall_cumulative!r},{r.test_accuracy!r},{r.labeled_size},"
                f"{r.candidate_set_size}\n"
            )
    os.replace(tmp, path)


def read_rounds_csv(path: str | os.PathLike) -> list[RoundReport]:
    reports = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty rounds file") from None
        if ",".join(header) != ROUNDS_CSV_HEADER:
            raise DataError(f"{path}: unexpected header {header}")
        for row in reader:
            if not row:
                continue
            try:
                reports.append(
                    RoundReport(
                        round=int(row[0]),
                        selected=int(row[1]),
                        known_selected=int(row[2]),
                        precision=float(row[3]),
                        recall_cumulative=float(row[4]),
                        test_accuracy=float(row[5]),
                        labeled_size=int(row[6]),
                        candidate_set_size=int(row[7]),
                    )
                )
            except (ValueError, IndexError) as exc:
                raise DataError(f"{path}: corrupt row {row}: {exc}") from exc
    return reports
