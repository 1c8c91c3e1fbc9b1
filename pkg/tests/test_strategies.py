"""Query strategies: ranking, fallbacks, determinism, and oracle equivalence."""

import math

import numpy as np
import pytest

from aosa import (
    Classifier,
    ConfigError,
    INVALID_LABEL,
    KnnIndex,
    PartitionState,
    SyntheticSpec,
    TrainConfig,
    generate_synthetic,
    predict_proba,
    select_certainty,
    select_neat,
    select_neat_passive,
    select_random,
    select_uncertainty,
    split_initial,
    train_classifier,
)
from aosa.detection import detect_known
from aosa.strategies import run_strategy


def circle(angle_deg):
    a = math.radians(angle_deg)
    return np.array([math.cos(a), math.sin(a)])


def store_from_points(points, labels):
    from aosa.feature_store import _build_store

    ids = np.arange(len(points), dtype=np.int64)
    return _build_store(
        ids,
        np.asarray(labels, dtype=np.int32),
        np.asarray(points, dtype=np.float64),
        int(max(labels)) + 1,
    )


def oracle_neat(state, store, entries, clf, k, budget):
    """Recompute the whole pipeline by brute force: detection, closed-form
    scores, sorting, and the known-fraction fallback."""
    known = state.known_classes
    class_index = {c: i for i, c in enumerate(clf.classes)}
    tops, fractions = {}, {}
    for sid in sorted(state.pool):
        x = store.feature_of(sid).astype(np.float64)
        scored = sorted(
            (1.0 - float(np.dot(np.asarray(f, np.float64), x)), i, lbl)
            for i, lbl, f in entries
        )
        top = scored[: min(k, len(scored))]
        tops[sid] = top
        fractions[sid] = sum(1 for _, _, lbl in top if lbl in known) / len(top)

    def score(sid, known_only):
        labels = [
            class_index[lbl] for _, _, lbl in tops[sid] if lbl in class_index
        ]
        counts = np.zeros(len(clf.classes))
        for l in labels:
            counts[l] += 1
        p = predict_proba(clf, store.feature_of(sid))
        return float(np.logaddexp.reduce(counts) - p @ counts)

    cands = [sid for sid in sorted(state.pool) if fractions[sid] == 1.0]
    ranked = sorted(((sid, score(sid, False)) for sid in cands), key=lambda t: (-t[1], t[0]))
    take = min(budget, len(state.pool))
    picked = [sid for sid, _ in ranked[:take]]
    if len(picked) < take:
        rest = sorted(state.pool - set(cands))
        fb = sorted(
            ((sid, fractions[sid], score(sid, True)) for sid in rest),
            key=lambda t: (-t[1], -t[2], t[0]),
        )
        picked += [sid for sid, _, _ in fb[: take - len(picked)]]
    return picked


def mixture_state(seed=0, n_invalid=6):
    spec = SyntheticSpec(
        n_clusters=4,
        known_clusters=2,
        per_cluster=25,
        dim=6,
        cluster_separation=1.0,
        noise_sigma=0.1,
        label_flip_rate=0.0,
        target_slack=0.05,
        seed=seed,
    )
    store = generate_synthetic(spec)
    state = split_initial(store, {0, 1}, 0.2, 0.1, seed=seed)
    unknown_pool = sorted(s for s in state.pool if store.label_of(s) >= 2)
    invalid = set(unknown_pool[:n_invalid])
    state.pool -= invalid
    state.invalid |= invalid
    entries = [
        (sid, state.labeled[sid], store.feature_of(sid)) for sid in sorted(state.labeled)
    ] + [(sid, INVALID_LABEL, store.feature_of(sid)) for sid in sorted(invalid)]
    index = KnnIndex.build(entries)
    labeled_ids = sorted(state.labeled)
    x = np.stack([store.feature_of(i) for i in labeled_ids])
    y = np.asarray([state.labeled[i] for i in labeled_ids])
    clf = train_classifier(
        x, y, state.known_classes,
        TrainConfig(epochs=60, learning_rate=0.5, lr_decay=1.0, decay_every=60, batch_size=32),
    )
    return store, state, entries, index, clf


class TestSelectNeat:
    def test_top_b_by_score(self):
        # Hand-built geometry: known classes at 0 and 60 degrees, classifier
        # reading the raw coordinates, four pool points with distinct scores.
        points = [circle(a) for a in (0, 2, 4, 60, 62, 64)]  # labeled
        pool_pts = [circle(a) for a in (3, 30, 35, 50)]
        store = store_from_points(points + pool_pts, [0, 0, 0, 1, 1, 1, 0, 0, 1, 1])
        state = PartitionState(
            labeled={0: 0, 1: 0, 2: 0, 3: 1, 4: 1, 5: 1},
            pool={6, 7, 8, 9},
            test=frozenset(),
            known_classes=frozenset({0, 1}),
        )
        entries = [(i, state.labeled[i], store.feature_of(i)) for i in range(6)]
        index = KnnIndex.build(entries)
        clf = Classifier(weights=np.eye(2) * 2.0, bias=np.zeros(2), classes=(0, 1))
        batch = select_neat(state, store, index, clf, k=3, budget=3)
        assert len(batch.ids) == 3
        assert batch.ids == tuple(oracle_neat(state, store, entries, clf, 3, 3))
        # Scores come back sorted descending.
        assert list(batch.scores) == sorted(batch.scores, reverse=True)

    def test_ties_broken_by_ascending_id(self):
        f = circle(10)
        store = store_from_points(
            [circle(0), circle(20), f, f, f], [0, 1, 0, 0, 0]
        )
        state = PartitionState(
            labeled={0: 0, 1: 1},
            pool={2, 3, 4},
            test=frozenset(),
            known_classes=frozenset({0, 1}),
        )
        index = KnnIndex.build([(i, state.labeled[i], store.feature_of(i)) for i in (0, 1)])
        clf = Classifier(weights=np.zeros((2, 2)), bias=np.zeros(2), classes=(0, 1))
        batch = select_neat(state, store, index, clf, k=2, budget=2)
        assert batch.ids == (2, 3)

    def test_empty_candidates_fallback_picks_highest_fraction(self):
        # K=2 with one known and two invalid marks: nobody passes the filter,
        # and pool point 4 (near the invalid pair) has the lowest fraction.
        labeled_pts = [circle(0), circle(40), circle(44)]
        pool_pts = [circle(2), circle(41), circle(19)]
        store = store_from_points(labeled_pts + pool_pts, [0] * 6)
        state = PartitionState(
            labeled={0: 0},
            pool={3, 4, 5},
            test=frozenset(),
            known_classes=frozenset({0, 1}),
            invalid={1, 2},
        )
        entries = [(0, 0, store.feature_of(0))] + [
            (i, INVALID_LABEL, store.feature_of(i)) for i in (1, 2)
        ]
        index = KnnIndex.build(entries)
        cands = detect_known(state.pool, store, index, 2, state.known_classes)
        assert not cands.members
        clf = Classifier(weights=np.zeros((2, 2)), bias=np.zeros(2), classes=(0, 1))
        batch = select_neat(state, store, index, clf, k=2, budget=2)
        assert set(batch.ids) == {3, 5}

    def test_matches_pipeline_oracle(self):
        store, state, entries, index, clf = mixture_state(seed=1)
        for budget in (3, 10, 25):
            batch = select_neat(state, store, index, clf, k=5, budget=budget)
            assert list(batch.ids) == oracle_neat(state, store, entries, clf, 5, budget)

    def test_batch_within_candidates_when_enough(self):
        store, state, entries, index, clf = mixture_state(seed=2)
        cands = detect_known(state.pool, store, index, 5, state.known_classes)
        batch = select_neat(state, store, index, clf, k=5, budget=5, candidates=cands)
        assert set(batch.ids) <= set(cands.members)

    def test_monotone_score_cut(self):
        store, state, entries, index, clf = mixture_state(seed=3)
        cands = detect_known(state.pool, store, index, 5, state.known_classes)
        budget = 6
        batch = select_neat(state, store, index, clf, k=5, budget=budget, candidates=cands)
        from aosa.strategies import _inconsistency_of

        outside = [
            _inconsistency_of(sid, store, index, clf, 5)
            for sid in cands.members - set(batch.ids)
        ]
        if outside:
            assert min(batch.scores) >= max(outside) - 1e-12


class TestSelectNeatPassive:
    def test_forced_when_budget_equals_candidates(self):
        store, state, entries, index, clf = mixture_state(seed=4)
        cands = detect_known(state.pool, store, index, 5, state.known_classes)
        batch = select_neat_passive(
            state, store, index, k=5, budget=len(cands.members), seed=0, candidates=cands
        )
        assert set(batch.ids) == set(cands.members)

    def test_seed_reproducible(self):
        store, state, entries, index, clf = mixture_state(seed=5)
        a = select_neat_passive(state, store, index, k=5, budget=8, seed=42)
        b = select_neat_passive(state, store, index, k=5, budget=8, seed=42)
        assert a.ids == b.ids

    def test_members_verified_against_detection_oracle(self):
        store, state, entries, index, clf = mixture_state(seed=6)
        batch = select_neat_passive(state, store, index, k=5, budget=8, seed=1)
        known = state.known_classes
        oracle_members = set()
        for sid in state.pool:
            x = store.feature_of(sid).astype(np.float64)
            scored = sorted(
                (1.0 - float(np.dot(np.asarray(f, np.float64), x)), i, lbl)
                for i, lbl, f in entries
            )
            if all(lbl in known for _, _, lbl in scored[:5]):
                oracle_members.add(sid)
        if len(oracle_members) >= 8:
            assert set(batch.ids) <= oracle_members


class TestSelectRandom:
    def test_whole_pool_when_budget_covers(self):
        store, state, *_ = mixture_state(seed=7)
        batch = select_random(state, budget=len(state.pool), seed=0)
        assert set(batch.ids) == state.pool
        batch2 = select_random(state, budget=10 * len(state.pool), seed=0)
        assert set(batch2.ids) == state.pool

    def test_seed_reproducible(self):
        store, state, *_ = mixture_state(seed=8)
        assert select_random(state, 5, seed=3).ids == select_random(state, 5, seed=3).ids

    def test_uniformity(self):
        # 10k fixed-seed draws of 5 from 20: every sample's frequency within
        # three binomial standard errors of B/|pool|.
        state = PartitionState(
            labeled={},
            pool=set(range(20)),
            test=frozenset(),
            known_classes=frozenset({0}),
        )
        counts = np.zeros(20)
        draws = 10_000
        for s in range(draws):
            for sid in select_random(state, 5, seed=s).ids:
                counts[sid] += 1
        freq = counts / draws
        p = 5 / 20
        three_se = 3 * math.sqrt(p * (1 - p) / draws)
        assert np.all(np.abs(freq - p) <= three_se)


class TestEntropyStrategies:
    def test_extremes(self):
        # Pool sample 2 gets a uniform prediction, sample 3 a confident one.
        store = store_from_points(
            [circle(0), circle(90), circle(90), circle(0)], [0, 1, 0, 1]
        )
        state = PartitionState(
            labeled={0: 0, 1: 1},
            pool={2, 3},
            test=frozenset(),
            known_classes=frozenset({0, 1}),
        )
        clf = Classifier(weights=np.array([[5.0, 0.0], [-5.0, 0.0]]), bias=np.zeros(2), classes=(0, 1))
        unc = select_uncertainty(state, store, clf, budget=1)
        cer = select_certainty(state, store, clf, budget=1)
        assert unc.ids == (2,)
        assert cer.ids == (3,)

    def test_matches_entropy_sort_oracle(self):
        store, state, entries, index, clf = mixture_state(seed=9)
        batch = select_uncertainty(state, store, clf, budget=12)
        ent = {}
        for sid in state.pool:
            p = predict_proba(clf, store.feature_of(sid))
            ent[sid] = float(-(p * np.log(p)).sum())
        expect = [sid for sid, _ in sorted(ent.items(), key=lambda t: (-t[1], t[0]))[:12]]
        assert list(batch.ids) == expect
        cbatch = select_certainty(state, store, clf, budget=12)
        expect_c = [sid for sid, _ in sorted(ent.items(), key=lambda t: (t[1], t[0]))[:12]]
        assert list(cbatch.ids) == expect_c

    def test_budget_exceeds_pool(self):
        store, state, entries, index, clf = mixture_state(seed=10)
        batch = select_uncertainty(state, store, clf, budget=10_000)
        assert set(batch.ids) == state.pool


class TestDispatcher:
    def test_unknown_name(self):
        store, state, entries, index, clf = mixture_state(seed=11)
        with pytest.raises(ConfigError):
            run_strategy(
                "coreset", state=state, store=store, index=index, clf=clf,
                k=5, budget=3, seed=0,
            )

    def test_prefilter_restricts_to_candidates(self):
        store, state, entries, index, clf = mixture_state(seed=12)
        cands = detect_known(state.pool, store, index, 5, state.known_classes)
        batch = run_strategy(
            "uncertainty", state=state, store=store, index=index, clf=clf,
            k=5, budget=5, seed=0, prefilter=True, candidates=cands,
        )
        assert set(batch.ids) <= set(cands.members)

    def test_all_strategies_return_distinct_pool_ids(self):
        store, state, entries, index, clf = mixture_state(seed=13)
        for name in ("neat", "neat_passive", "random", "uncertainty", "certainty"):
            batch = run_strategy(
                name, state=state, store=store, index=index, clf=clf,
                k=5, budget=9, seed=5,
            )
            assert len(batch.ids) == len(set(batch.ids)) == 9
            assert set(batch.ids) <= state.pool
