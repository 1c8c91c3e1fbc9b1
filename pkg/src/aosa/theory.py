"""Detection-error bound evaluation and Monte-Carlo verification.

The all-K-neighbors detector admits a sample when every neighbor's observed
label is known-class.  Under two assumptions (the chance that two samples at
distance rho have different true classes is at most C * rho^alpha, and
observed labels are wrong with probability at most e), the probability of a
detection error (admitting a sample whose true class is unknown) is bounded
by a pair of binomial sums over the number of mislabeled neighbors.

The verifier instantiates those constants by construction: synthetic
clusters sit on orthonormal directions with radius-capped noise, so there is
a guaranteed minimum cosine distance g between points of different clusters.
Any pair closer than g shares a cluster (probability zero of differing), and
any pair at rho >= g satisfies C * rho^alpha >= 1 once C = g^(-alpha).
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError
from .feature_store import (
    NOISE_TRUNCATION,
    SyntheticSpec,
    generate_synthetic,
)
from .knn import KnnIndex

GRID_CSV_HEADER = "K,e,C,alpha,r_K,bound,empirical,stderr,pass,vacuous"

#: Axes accepted by verify_bound_grid.
GRID_AXES = ("K", "e", "alpha", "r_K", "C")


@dataclass(frozen=True)
class BoundParams:
    """Inputs of the detection-error bound."""

    k_neighbors: int
    label_error: float
    smoothness: float
    alpha: float
    radius: float

    def __post_init__(self) -> None:
        if self.k_neighbors < 1:
            raise ConfigError("k_neighbors must be >= 1")
        if not 0.0 <= self.label_error <= 1.0:
            raise ConfigError("label_error must be in [0, 1]")
        if self.smoothness <= 0:
            raise ConfigError("smoothness constant must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must be in (0, 1)")
        if self.radius < 0:
            raise ConfigError("radius must be non-negative")


def detection_error_bound(params: BoundParams) -> float:
    """Evaluate the two binomial sums exactly; may exceed 1 (vacuous but valid).

    First sum: at least ceil((K-1)/2)+1 of the K neighbors mislabeled, each
    term damped by (C r^alpha)^k.  Second sum: at most floor((K+1)/2)-1
    mislabeled, damped by (C r^alpha)^(K-k).
    """
    k_n, e = params.k_neighbors, params.label_error
    base = params.smoothness * params.radius**params.alpha
    first_lo = math.ceil((k_n - 1) / 2) + 1
    second_hi = math.floor((k_n + 1) / 2) - 1
    total = 0.0
    for k in range(first_lo, k_n + 1):
        total += math.comb(k_n, k) * e**k * (1 - e) ** (k_n - k) * base**k
    for k in range(0, second_hi + 1):
        total += math.comb(k_n, k) * e**k * (1 - e) ** (k_n - k) * base ** (k_n - k)
    return max(total, 0.0)


def bound_index_sets(k_neighbors: int) -> tuple[list[int], list[int]]:
    """The k ranges of the two sums, exposed for auditing."""
    first = list(range(math.ceil((k_neighbors - 1) / 2) + 1, k_neighbors + 1))
    second = list(range(0, math.floor((k_neighbors + 1) / 2)))
    return first, second


def noise_cap(spec: SyntheticSpec) -> float:
    """Hard cap on cluster noise norms in the pre-normalization space."""
    return NOISE_TRUNCATION * spec.noise_sigma * math.sqrt(spec.dim)


def construction_constants(spec: SyntheticSpec, alpha: float) -> tuple[float, float]:
    """(smoothness constant, guaranteed cross-cluster gap) for a synthetic spec.

    Requires the separated regime: orthonormal centers (dim >= n_clusters)
    and a noise cone narrow enough that same-cluster diameters stay below the
    cross-cluster gap.  Raises ConfigError outside that regime.
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigError("alpha must be in (0, 1)")
    if spec.dim < spec.n_clusters:
        raise ConfigError(
            "constants need orthonormal cluster directions (dim >= n_clusters)"
        )
    cap = noise_cap(spec)
    if cap >= spec.cluster_separation:
        raise ConfigError("noise cap exceeds cluster separation")
    phi = math.asin(cap / spec.cluster_separation)
    if 2 * phi >= math.pi / 4:
        raise ConfigError(
            "outside the separated regime: noise cone half-angle too wide"
        )
    gap = 1.0 - math.sin(2 * phi)
    return gap ** (-alpha), gap


def default_verification_spec(seed: int = 2024) -> SyntheticSpec:
    """The documented construction used for bound verification."""
    return SyntheticSpec(
        n_clusters=4,
        known_clusters=2,
        per_cluster=40,
        dim=8,
        cluster_separation=1.0,
        noise_sigma=0.02,
        label_flip_rate=0.0,
        target_slack=0.01,
        seed=seed,
    )


def _trial_seed(seed: int, *path: int) -> int:
    return int(np.random.SeedSequence([seed, *path]).generate_state(1)[0])


@dataclass(frozen=True)
class SimulationResult:
    empirical_error: float
    stderr: float
    max_radius: float
    trials: int


def simulate_detection_error(
    spec: SyntheticSpec, k: int, trials: int, seed: int
) -> SimulationResult:
    """Monte-Carlo estimate of the detector's false-admit rate.

    Each trial draws a fresh labeled set from the spec's distribution, holds
    one sample out as the query, and runs the all-K-known rule over the rest.
    A detection error is an admitted query whose true cluster is unknown; the
    proof's two failure modes (mislabeled neighbors, and unknown-class
    samples whose neighborhoods look known) both surface this way.  Trials
    use derived seeds, so results do not depend on execution order.
    """
    if trials < 100:
        raise ConfigError("need at least 100 trials for a meaningful stderr")
    if k < 1:
        raise ConfigError("k must be >= 1")
    if k >= spec.n_samples:
        raise ConfigError("k must be smaller than the per-trial labeled set")
    known = frozenset(range(spec.known_clusters))
    errors = 0
    max_radius = 0.0
    for t in range(trials):
        store = generate_synthetic(replace(spec, seed=_trial_seed(seed, t, 0)))
        rng = np.random.default_rng([seed, t, 1])
        q = int(rng.integers(store.n_samples))
        index = KnnIndex(
            ids=np.delete(store.ids, q),
            labels=np.delete(store.labels, q).astype(np.int64),
            matrix=np.delete(store.features, q, axis=0).astype(np.float64),
        )
        nl = index.query(store.features[q].astype(np.float64), k, query_id=q)
        max_radius = max(max_radius, nl.max_distance())
        admitted = all(n.label in known for n in nl.neighbors)
        truly_known = spec.cluster_of(q) < spec.known_clusters
        if admitted and not truly_known:
            errors += 1
    p = errors / trials
    return SimulationResult(
        empirical_error=p,
        stderr=math.sqrt(p * (1.0 - p) / trials),
        max_radius=max_radius,
        trials=trials,
    )


@dataclass(frozen=True)
class GridRow:
    k_neighbors: int
    label_error: float
    smoothness: float
    alpha: float
    radius: float
    bound: float
    empirical: float
    stderr: float
    passed: bool
    vacuous: bool


def verify_bound_grid(
    grid: dict[str, list],
    spec: SyntheticSpec,
    trials: int,
    seed: int = 0,
    alpha: float = 0.5,
) -> list[GridRow]:
    """Evaluate bound vs Monte-Carlo error over the cartesian product of axes.

    Axes: K and e (simulated), plus optional alpha / r_K / C overrides.  A
    row passes when empirical <= bound + 3*stderr.  An explicit r_K or C
    replaces the measured radius or the construction constant in the bound
    only; the simulation itself is unaffected.  An empty grid yields no rows.
    """
    for axis in grid:
        if axis not in GRID_AXES:
            raise ConfigError(f"unknown grid axis {axis!r}; choose from {GRID_AXES}")
    if not grid or any(len(v) == 0 for v in grid.values()):
        return []
    ks = [int(v) for v in grid.get("K", [1])]
    es = [float(v) for v in grid.get("e", [spec.label_flip_rate])]
    alphas = [float(v) for v in grid.get("alpha", [alpha])]
    radii = grid.get("r_K", [None])
    smooths = grid.get("C", [None])
    for k in ks:
        if k < 1:
            raise ConfigError(f"grid K value {k} must be >= 1")

    rows: list[GridRow] = []
    sim_cache: dict[tuple[int, float], SimulationResult] = {}
    cell = 0
    for k in ks:
        for e in es:
            if (k, e) not in sim_cache:
                sim_cache[(k, e)] = simulate_detection_error(
                    replace(spec, label_flip_rate=e), k, trials, _trial_seed(seed, cell)
                )
                cell += 1
            sim = sim_cache[(k, e)]
            for a in alphas:
                for r_over in radii:
                    for c_over in smooths:
                        c_val = (
                            float(c_over)
                            if c_over is not None
                            else construction_constants(spec, a)[0]
                        )
                        r_val = float(r_over) if r_over is not None else sim.max_radius
                        bound = detection_error_bound(
                            BoundParams(
                                k_neighbors=k,
                                label_error=e,
                                smoothness=c_val,
                                alpha=a,
                                radius=r_val,
                            )
                        )
                        rows.append(
                            GridRow(
                                k_neighbors=k,
                                label_error=e,
                                smoothness=c_val,
                                alpha=a,
                                radius=r_val,
                                bound=bound,
                                empirical=sim.empirical_error,
                                stderr=sim.stderr,
                                passed=sim.empirical_error <= bound + 3 * sim.stderr,
                                vacuous=bound > 1.0,
                            )
                        )
    return rows


def write_grid_csv(rows: list[GridRow], path: str | os.PathLike) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(GRID_CSV_HEADER + "\n")
        for r in rows:
            fh.write(
                f"{r.k_neighbors},{r.label_error!r},{r.smoothness!r},{r.alpha!r},"
                f"{r.radius!r},{r.bound!r},{r.empirical!r},{r.stderr!r},"
                f"{str(r.passed).lower()},{str(r.vacuous).lower()}\n"
            )
    os.replace(tmp, path)


def read_grid_csv(path: str | os.PathLike) -> list[GridRow]:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if ",".join(header) != GRID_CSV_HEADER:
            raise ConfigError(f"{path}: unexpected header")
        for row in reader:
            if not row:
                continue
            rows.append(
                GridRow(
                    k_neighbors=int(row[0]),
                    label_error=float(row[1]),
                    smoothness=float(row[2]),
                    alpha=float(row[3]),
                    radius=float(row[4]),
                    bound=float(row[5]),
                    empirical=float(row[6]),
                    stderr=float(row[7]),
                    passed=row[8] == "true",
                    vacuous=row[9] == "true",
                )
            )
    return rows
