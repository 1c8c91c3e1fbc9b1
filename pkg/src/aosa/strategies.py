"""Query strategies: given the current state and a budget, pick pool samples.

All strategies return distinct pool ids, never more than the pool holds, and
break ranking ties by ascending id so batches are reproducible.  When the
detection-based strategies find fewer candidates than the budget, the
remainder is filled from the rest of the pool ranked by known-neighbor
fraction, which preserves the selection-precision objective instead of
falling back to uniform sampling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .detection import CandidateSet, detect_known
from .errors import ConfigError
from .feature_store import FeatureStore, PartitionState
from .knn import KnnIndex
from .model import Classifier, predict_proba, predict_proba_batch
from .scoring import entropy_rows, inconsistency_score, neighbor_histogram

STRATEGY_NAMES = ("neat", "neat_passive", "random", "uncertainty", "certainty")

SeedLike = int | Sequence[int] | None


@dataclass(frozen=True)
class QueryBatch:
    """An ordered selection of pool ids with the scores that ranked them."""

    round: int
    ids: tuple[int, ...]
    scores: tuple[float, ...] | None = None


def _inconsistency_of(
    sample_id: int,
    store: FeatureStore,
    index: KnnIndex,
    clf: Classifier,
    k: int,
    known_only: bool = False,
) -> float:
    """Score one sample against its labeled neighborhood.

    With ``known_only`` the histogram is built from known-labeled neighbors
    only, which is how non-candidates are scored in the fallback ranking.
    """
    nl = index.query(store.feature_of(sample_id), k, query_id=sample_id)
    class_index = {c: i for i, c in enumerate(clf.classes)}
    labels = [class_index[n.label] for n in nl.neighbors if n.label in class_index]
    if not known_only and len(labels) != len(nl.neighbors):
        raise ValueError(f"sample {sample_id} has non-known neighbors; not a candidate")
    counts = neighbor_histogram(labels, clf.n_classes)
    probs = predict_proba(clf, store.feature_of(sample_id))
    return inconsistency_score(probs, counts)


def _fallback_order(
    remainder: set[int],
    candidates: CandidateSet,
    store: FeatureStore,
    index: KnnIndex,
    clf: Classifier | None,
    k: int,
) -> list[tuple[int, float]]:
    """Non-candidates ranked by descending known-neighbor fraction.

    Ties go to the higher inconsistency score over known-labeled neighbors
    when a classifier is available, then to ascending id.
    """
    ranked = []
    for sid in sorted(remainder):
        frac = candidates.known_fraction_by_id[sid]
        score = (
            _inconsistency_of(sid, store, index, clf, k, known_only=True)
            if clf is not None
            else 0.0
        )
        ranked.append((sid, frac, score))
    ranked.sort(key=lambda t: (-t[1], -t[2], t[0]))
    return [(sid, frac) for sid, frac, _ in ranked]


def select_neat(
    state: PartitionState,
    store: FeatureStore,
    index: KnnIndex,
    clf: Classifier,
    k: int,
    budget: int,
    round_index: int = 0,
    seed: SeedLike = None,
    candidates: CandidateSet | None = None,
) -> QueryBatch:
    """Top-budget pool samples by descending inconsistency over the candidate set."""
    if budget < 1:
        raise ConfigError("budget must be >= 1")
    if candidates is None:
        candidates = detect_known(
            state.pool, store, index, k, state.known_classes, round_index
        )
    scored = [
        (sid, _inconsistency_of(sid, store, index, clf, k))
        for sid in sorted(candidates.members)
    ]
    scored.sort(key=lambda t: (-t[1], t[0]))
    take = min(budget, len(state.pool))
    picked = scored[:take]
    if len(picked) < take:
        remainder = state.pool - candidates.members
        picked.extend(
            _fallback_order(remainder, candidates, store, index, clf, k)[
                : take - len(picked)
            ]
        )
    return QueryBatch(
        round=round_index,
        ids=tuple(sid for sid, _ in picked),
        scores=tuple(s for _, s in picked),
    )


def select_neat_passive(
    state: PartitionState,
    store: FeatureStore,
    index: KnnIndex,
    k: int,
    budget: int,
    seed: SeedLike,
    round_index: int = 0,
    candidates: CandidateSet | None = None,
) -> QueryBatch:
    """Uniform random subset of the detection candidates, same fallback as neat."""
    if budget < 1:
        raise ConfigError("budget must be >= 1")
    if candidates is None:
        candidates = detect_known(
            state.pool, store, index, k, state.known_classes, round_index
        )
    rng = np.random.default_rng(seed)
    members = sorted(candidates.members)
    take = min(budget, len(state.pool))
    if len(members) >= take:
        chosen = rng.choice(np.asarray(members, dtype=np.int64), size=take, replace=False)
        return QueryBatch(round=round_index, ids=tuple(int(i) for i in chosen))
    picked = list(members)
    remainder = state.pool - candidates.members
    picked.extend(
        sid
        for sid, _ in _fallback_order(remainder, candidates, store, index, None, k)[
            : take - len(picked)
        ]
    )
    return QueryBatch(round=round_index, ids=tuple(picked))


def select_random(
    state: PartitionState,
    budget: int,
    seed: SeedLike,
    round_index: int = 0,
    store: FeatureStore | None = None,
    index: KnnIndex | None = None,
    k: int | None = None,
    candidates: CandidateSet | None = None,
) -> QueryBatch:
    """Uniform random pool subset; over the candidate set when prefiltered."""
    if budget < 1:
        raise ConfigError("budget must be >= 1")
    rng = np.random.default_rng(seed)
    take = min(budget, len(state.pool))
    if candidates is None:
        chosen = rng.choice(
            np.asarray(sorted(state.pool), dtype=np.int64), size=take, replace=False
        )
        return QueryBatch(round=round_index, ids=tuple(int(i) for i in chosen))
    members = sorted(candidates.members)
    if len(members) >= take:
        chosen = rng.choice(np.asarray(members, dtype=np.int64), size=take, replace=False)
        return QueryBatch(round=round_index, ids=tuple(int(i) for i in chosen))
    picked = list(members)
    remainder = state.pool - candidates.members
    picked.extend(
        sid
        for sid, _ in _fallback_order(remainder, candidates, store, index, None, k)[
            : take - len(picked)
        ]
    )
    return QueryBatch(round=round_index, ids=tuple(picked))


def _select_by_entropy(
    state: PartitionState,
    store: FeatureStore,
    clf: Classifier,
    budget: int,
    descending: bool,
    round_index: int,
    candidates: CandidateSet | None,
    index: KnnIndex | None,
    k: int | None,
) -> QueryBatch:
    if budget < 1:
        raise ConfigError("budget must be >= 1")
    scope = sorted(candidates.members) if candidates is not None else sorted(state.pool)
    take = min(budget, len(state.pool))
    picked: list[tuple[int, float]] = []
    if scope:
        feats = np.stack([store.feature_of(sid) for sid in scope])
        ent = entropy_rows(predict_proba_batch(clf, feats))
        order = sorted(
            range(len(scope)),
            key=lambda i: (-ent[i], scope[i]) if descending else (ent[i], scope[i]),
        )
        picked = [(scope[i], float(ent[i])) for i in order[:take]]
    if candidates is not None and len(picked) < take:
        remainder = state.pool - candidates.members
        picked.extend(
            _fallback_order(remainder, candidates, store, index, None, k)[
                : take - len(picked)
            ]
        )
    return QueryBatch(
        round=round_index,
        ids=tuple(sid for sid, _ in picked),
        scores=tuple(s for _, s in picked),
    )


def select_uncertainty(
    state: PartitionState,
    store: FeatureStore,
    clf: Classifier,
    budget: int,
    round_index: int = 0,
    candidates: CandidateSet | None = None,
    index: KnnIndex | None = None,
    k: int | None = None,
) -> QueryBatch:
    """Top-budget by descending prediction entropy (whole pool unless prefiltered)."""
    return _select_by_entropy(
        state, store, clf, budget, True, round_index, candidates, index, k
    )


def select_certainty(
    state: PartitionState,
    store: FeatureStore,
    clf: Classifier,
    budget: int,
    round_index: int = 0,
    candidates: CandidateSet | None = None,
    index: KnnIndex | None = None,
    k: int | None = None,
) -> QueryBatch:
    """Top-budget by ascending prediction entropy (whole pool unless prefiltered)."""
    return _select_by_entropy(
        state, store, clf, budget, False, round_index, candidates, index, k
    )


def run_strategy(
    name: str,
    *,
    state: PartitionState,
    store: FeatureStore,
    index: KnnIndex,
    clf: Classifier,
    k: int,
    budget: int,
    seed: SeedLike,
    round_index: int = 0,
    prefilter: bool = False,
    candidates: CandidateSet | None = None,
) -> QueryBatch:
    """Dispatch a strategy by its configuration name.

    ``prefilter`` restricts the entropy and random baselines to the detection
    candidate set; the two detection-based strategies use it regardless.
    ``candidates`` may carry a precomputed detection result for the round.
    """
    if name not in STRATEGY_NAMES:
        raise ConfigError(f"unknown strategy {name!r}; choose from {STRATEGY_NAMES}")
    needs_candidates = name in ("neat", "neat_passive") or prefilter
    if needs_candidates and candidates is None:
        candidates = detect_known(
            state.pool, store, index, k, state.known_classes, round_index
        )
    filt = candidates if prefilter else None
    if name == "neat":
        return select_neat(
            state, store, index, clf, k, budget, round_index, seed, candidates
        )
    if name == "neat_passive":
        return select_neat_passive(
            state, store, index, k, budget, seed, round_index, candidates
        )
    if name == "random":
        return select_random(
            state, budget, seed, round_index, store, index, k, filt
        )
    if name == "uncertainty":
        return select_uncertainty(
            state, store, clf, budget, round_index, filt, index, k
        )
    return select_certainty(state, store, clf, budget, round_index, filt, index, k)
