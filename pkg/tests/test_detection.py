"""Known-class detection: the all-K-neighbors rule and its relaxation."""

import math

import numpy as np
import pytest

from aosa import (
    INVALID_LABEL,
    KnnIndex,
    SyntheticSpec,
    detect_known,
    generate_synthetic,
    known_neighbor_fraction,
    measure_detection_quality,
    split_initial,
)
from aosa.feature_store import _build_store


def circle(angle_deg):
    a = math.radians(angle_deg)
    return np.array([math.cos(a), math.sin(a)])


def store_from_points(points, labels):
    ids = np.arange(len(points), dtype=np.int64)
    return _build_store(
        ids,
        np.asarray(labels, dtype=np.int32),
        np.asarray(points, dtype=np.float64),
        int(max(labels)) + 1,
    )


def oracle_detect(pool, store, entries, k, known):
    """Brute-force recomputation of the all-known rule."""
    members = set()
    for sid in pool:
        x = store.feature_of(sid).astype(np.float64)
        scored = sorted(
            (1.0 - float(np.dot(np.asarray(f, np.float64), x)), i, lbl)
            for i, lbl, f in entries
        )
        top = scored[: min(k, len(scored))]
        if all(lbl in known for _, _, lbl in top):
            members.add(sid)
    return members


def mixture_fixture(seed=0, flip=0.0):
    spec = SyntheticSpec(
        n_clusters=4,
        known_clusters=2,
        per_cluster=25,
        dim=6,
        cluster_separation=1.0,
        noise_sigma=0.08,
        label_flip_rate=flip,
        target_slack=0.05,
        seed=seed,
    )
    store = generate_synthetic(spec)
    state = split_initial(store, {0, 1}, 0.3, 0.1, seed=seed)
    return spec, store, state


def labeled_entries(state, store, with_invalid=()):
    entries = [
        (sid, state.labeled[sid], store.feature_of(sid)) for sid in sorted(state.labeled)
    ]
    entries += [(sid, INVALID_LABEL, store.feature_of(sid)) for sid in sorted(with_invalid)]
    return entries


class TestDetectKnown:
    def test_all_known_labeled_set_is_vacuous(self):
        _, store, state = mixture_fixture()
        index = KnnIndex.build(labeled_entries(state, store))
        cands = detect_known(state.pool, store, index, 3, state.known_classes)
        assert cands.members == frozenset(state.pool)
        assert all(f == 1.0 for f in cands.known_fraction_by_id.values())

    def test_single_invalid_neighbor_excludes(self):
        # Labeled: two known at 0 and 6 degrees, one invalid at 12 degrees.
        # The pool point at 8 degrees has the invalid mark among its 3-NN.
        points = [circle(0), circle(6), circle(12), circle(8), circle(-30)]
        labels = [0, 0, 1, 0, 0]
        store = store_from_points(points, labels)
        entries = [
            (0, 0, store.feature_of(0)),
            (1, 0, store.feature_of(1)),
            (2, INVALID_LABEL, store.feature_of(2)),
        ]
        index = KnnIndex.build(entries)
        cands = detect_known({3, 4}, store, index, 3, frozenset({0}))
        assert 3 not in cands.members
        assert 4 not in cands.members  # K=3 reaches the invalid mark too
        cands2 = detect_known({3, 4}, store, index, 2, frozenset({0}))
        assert 4 in cands2.members  # 2-NN of the far point are both known
        assert 3 not in cands2.members

    def test_matches_bruteforce_oracle(self):
        _, store, state = mixture_fixture(seed=3)
        invalid = set(list(sorted(state.pool))[:10])
        state.pool -= invalid
        state.invalid |= invalid
        entries = labeled_entries(state, store, with_invalid=invalid)
        index = KnnIndex.build(entries)
        cands = detect_known(state.pool, store, index, 5, state.known_classes)
        assert cands.members == frozenset(
            oracle_detect(state.pool, store, entries, 5, state.known_classes)
        )

    def test_member_iff_fraction_one(self):
        _, store, state = mixture_fixture(seed=4)
        invalid = set(list(sorted(state.pool))[::7])
        state.pool -= invalid
        state.invalid |= invalid
        index = KnnIndex.build(labeled_entries(state, store, with_invalid=invalid))
        cands = detect_known(state.pool, store, index, 4, state.known_classes)
        for sid, frac in cands.known_fraction_by_id.items():
            assert (sid in cands.members) == (frac == 1.0)
            assert frac == pytest.approx(
                known_neighbor_fraction(sid, store, index, 4, state.known_classes)
            )


class TestKnownNeighborFraction:
    def test_extremes_and_ratio(self):
        # Five labeled marks at distinct angles; vary how many are known.
        angles = [0, 4, 8, 12, 16]
        store = store_from_points([circle(a) for a in angles] + [circle(6)], [0] * 6)
        for known_count, expected in ((5, 1.0), (0, 0.0), (3, 0.6)):
            entries = [
                (i, 0 if i < known_count else INVALID_LABEL, store.feature_of(i))
                for i in range(5)
            ]
            index = KnnIndex.build(entries)
            frac = known_neighbor_fraction(5, store, index, 5, frozenset({0}))
            assert frac == pytest.approx(expected)


class TestMonotonicityInK:
    def test_members_shrink_as_k_grows(self):
        _, store, state = mixture_fixture(seed=6)
        invalid = set(list(sorted(state.pool))[::5])
        state.pool -= invalid
        state.invalid |= invalid
        index = KnnIndex.build(labeled_entries(state, store, with_invalid=invalid))
        prev = None
        for k in (1, 2, 3, 5, 8):
            members = detect_known(state.pool, store, index, k, state.known_classes).members
            if prev is not None:
                assert members <= prev
            prev = members


class TestDetectionQuality:
    def test_all_truly_known(self):
        _, store, state = mixture_fixture(seed=7)
        index = KnnIndex.build(labeled_entries(state, store))
        known_pool = {s for s in state.pool if store.label_of(s) in state.known_classes}
        cands = detect_known(known_pool, store, index, 3, state.known_classes)
        precision, recall = measure_detection_quality(cands, store, state.known_classes)
        assert precision == 1.0
        assert recall == 1.0

    def test_empty_candidates(self):
        from aosa.detection import CandidateSet

        cands = CandidateSet(round=0, members=frozenset(), known_fraction_by_id={1: 0.5})
        precision, recall = measure_detection_quality(cands, _dummy_store(), {0})
        assert precision is None
        assert recall == 0.0

    def test_matches_hand_count(self):
        spec, store, state = mixture_fixture(seed=8)
        invalid = set(list(sorted(state.pool))[:8])
        state.pool -= invalid
        state.invalid |= invalid
        index = KnnIndex.build(labeled_entries(state, store, with_invalid=invalid))
        cands = detect_known(state.pool, store, index, 5, state.known_classes)
        precision, recall = measure_detection_quality(cands, store, state.known_classes)
        hits = sum(1 for s in cands.members if store.label_of(s) in state.known_classes)
        known_pool = [s for s in state.pool if store.label_of(s) in state.known_classes]
        assert precision == pytest.approx(hits / len(cands.members))
        member_hits = sum(1 for s in known_pool if s in cands.members)
        assert recall == pytest.approx(member_hits / len(known_pool))

    def test_zero_error_in_pure_regime(self):
        # No label flips, wide separation, and every unknown cluster carrying
        # invalid marks: neighborhoods are label-pure, so the detector makes
        # no mistakes in either direction.
        spec, store, state = mixture_fixture(seed=9, flip=0.0)
        invalid = set()
        for cluster in (2, 3):
            cluster_pool = sorted(
                s for s in state.pool if spec.cluster_of(s) == cluster
            )
            invalid.update(cluster_pool[:10])
        state.pool -= invalid
        state.invalid |= invalid
        index = KnnIndex.build(labeled_entries(state, store, with_invalid=invalid))
        cands = detect_known(state.pool, store, index, 3, state.known_classes)
        precision, recall = measure_detection_quality(cands, store, state.known_classes)
        assert precision == 1.0
        assert recall == 1.0


def _dummy_store():
    return store_from_points([circle(0), circle(90)], [0, 0])
