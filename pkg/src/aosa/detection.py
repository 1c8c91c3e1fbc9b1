"""Data-centric known-class detection via all-K-neighbors agreement.

An unlabeled sample joins the candidate set exactly when every one of its K
nearest labeled neighbors carries a known-class label.  The per-sample
known-neighbor fraction is the relaxed statistic used for fallback ranking
when the candidate set is smaller than the query budget.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .errors import StateError
from .feature_store import FeatureStore
from .knn import KnnIndex, NeighborList


@dataclass(frozen=True)
class CandidateSet:
    """Detector output for one round.

    ``members`` holds the pool ids whose neighborhoods are all-known;
    ``known_fraction_by_id`` records the known-neighbor fraction for every
    pool sample, members or not.
    """

    round: int
    members: frozenset[int]
    known_fraction_by_id: dict[int, float]


def neighbors_all_known(
    neighbors: NeighborList, known_classes: frozenset[int] | set[int]
) -> bool:
    return all(n.label in known_classes for n in neighbors.neighbors)


def known_neighbor_fraction(
    sample_id: int,
    store: FeatureStore,
    index: KnnIndex,
    k: int,
    known_classes: frozenset[int] | set[int],
) -> float:
    """(# known-labeled neighbors) / min(K, |L|) for one pool sample."""
    if len(index) == 0:
        raise StateError("labeled set is empty")
    nl = index.query(store.feature_of(sample_id), k, query_id=sample_id)
    hits = sum(1 for n in nl.neighbors if n.label in known_classes)
    return hits / len(nl.neighbors)


def detect_known(
    pool: Iterable[int],
    store: FeatureStore,
    index: KnnIndex,
    k: int,
    known_classes: frozenset[int] | set[int],
    round_index: int = 0,
) -> CandidateSet:
    """Admit pool samples whose K nearest labeled neighbors are all known-class."""
    if len(index) == 0:
        raise StateError("labeled set is empty")
    if k < 1:
        raise ValueError("k must be >= 1")
    members: set[int] = set()
    fractions: dict[int, float] = {}
    for sid in sorted(int(s) for s in pool):
        nl = index.query(store.feature_of(sid), k, query_id=sid)
        hits = sum(1 for n in nl.neighbors if n.label in known_classes)
        frac = hits / len(nl.neighbors)
        fractions[sid] = frac
        if hits == len(nl.neighbors):
            members.add(sid)
    return CandidateSet(
        round=round_index, members=frozenset(members), known_fraction_by_id=fractions
    )


def measure_detection_quality(
    candidates: CandidateSet,
    store: FeatureStore,
    known_classes: frozenset[int] | set[int],
) -> tuple[float | None, float]:
    """Detector precision and recall against ground-truth labels.

    Precision is the fraction of members whose true class is known (None for
    an empty candidate set); recall is members over all known-class pool
    samples, where the pool is everything the detector scored.
    """
    pool_ids = candidates.known_fraction_by_id.keys()
    known_pool = {
        sid for sid in pool_ids if store.label_of(sid) in known_classes
    }
    if not candidates.members:
        return None, 0.0
    truly_known = sum(
        1 for sid in candidates.members if store.label_of(sid) in known_classes
    )
    precision = truly_known / len(candidates.members)
    recall = (
        len(candidates.members & known_pool) / len(known_pool) if known_pool else 0.0
    )
    return precision, recall
