"""Exact K-nearest-neighbor search over the labeled set under cosine distance.

Search is exhaustive, so results are exact by construction.  Ties in distance
are broken by ascending sample id, which makes every query deterministic and
insertion-order independent.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import StateError


@dataclass(frozen=True)
class Neighbor:
    id: int
    label: int
    distance: float


@dataclass(frozen=True)
class NeighborList:
    """The min(K, |L|) nearest labeled samples of one query, nearest first."""

    query_id: int
    neighbors: tuple[Neighbor, ...]

    def labels(self) -> list[int]:
        return [n.label for n in self.neighbors]

    def max_distance(self) -> float:
        return self.neighbors[-1].distance if self.neighbors else 0.0


def cosine_distance(u: np.ndarray, v: np.ndarray) -> float:
    """1 - <u, v> for unit vectors; in [0, 2], zero iff u == v."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    return float(1.0 - np.dot(u, v))


class KnnIndex:
    """Exact cosine-distance index over (id, label, feature) entries.

    Immutable between protocol rounds; ``add`` exists for incremental
    rebuilds and gives results identical to a fresh build on the union.
    """

    def __init__(
        self, ids: np.ndarray, labels: np.ndarray, matrix: np.ndarray
    ) -> None:
        self._ids = ids
        self._labels = labels
        self._matrix = matrix

    @classmethod
    def build(cls, entries: Iterable[tuple[int, int, np.ndarray]]) -> "KnnIndex":
        entries = list(entries)
        if not entries:
            raise StateError("cannot build an index over an empty labeled set")
        ids = np.asarray([e[0] for e in entries], dtype=np.int64)
        labels = np.asarray([e[1] for e in entries], dtype=np.int64)
        matrix = np.asarray([e[2] for e in entries], dtype=np.float64)
        return cls(ids, labels, matrix)

    def __len__(self) -> int:
        return int(self._ids.size)

    def add(self, entries: Iterable[tuple[int, int, np.ndarray]]) -> None:
        entries = list(entries)
        if not entries:
            return
        self._ids = np.concatenate(
            [self._ids, np.asarray([e[0] for e in entries], dtype=np.int64)]
        )
        self._labels = np.concatenate(
            [self._labels, np.asarray([e[1] for e in entries], dtype=np.int64)]
        )
        self._matrix = np.vstack(
            [self._matrix, np.asarray([e[2] for e in entries], dtype=np.float64)]
        )

    def query(self, x: np.ndarray, k: int, query_id: int = -1) -> NeighborList:
        """Nearest min(k, |L|) entries, ordered by (distance, id)."""
        if k < 1:
            raise ValueError("k must be >= 1")
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self._matrix.shape[1],):
            raise ValueError(
                f"dimension mismatch: query {x.shape} vs index dim {self._matrix.shape[1]}"
            )
        dists = 1.0 - self._matrix @ x
        order = np.lexsort((self._ids, dists))[: min(k, self._ids.size)]
        return NeighborList(
            query_id=int(query_id),
            neighbors=tuple(
                Neighbor(int(self._ids[i]), int(self._labels[i]), float(dists[i]))
                for i in order
            ),
        )

    def query_many(
        self, xs: np.ndarray, k: int, query_ids: Iterable[int]
    ) -> list[NeighborList]:
        return [
            self.query(x, k, query_id=qid) for x, qid in zip(xs, query_ids)
        ]
