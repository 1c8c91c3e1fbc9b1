"""Active open-set annotation over precomputed feature stores.

Detects known-class samples in a mixed unlabeled pool by requiring every
labeled nearest neighbor to carry a known-class label, ranks candidates by
the inconsistency between classifier predictions and neighborhood label
evidence, runs the budgeted query protocol with per-round metrics, and
verifies the detection-error bound by Monte-Carlo simulation.
"""

__version__ = "0.1.0"

from .detection import CandidateSet, detect_known, known_neighbor_fraction, measure_detection_quality
from .errors import (
    AosaError,
    ConfigError,
    DataError,
    FormatError,
    SchemaError,
    StateError,
    TrainingError,
)
from .feature_store import (
    INVALID_LABEL,
    FeatureStore,
    PartitionState,
    SampleRecord,
    SyntheticSpec,
    generate_synthetic,
    load_feature_store,
    measure_clusterability_slack,
    save_feature_store,
    split_initial,
)
from .knn import KnnIndex, Neighbor, NeighborList, cosine_distance
from .model import (
    Classifier,
    TrainConfig,
    evaluate_accuracy,
    load_external_predictions,
    predict_proba,
    predict_proba_batch,
    train_classifier,
)
from .protocol import (
    ProtocolConfig,
    ProtocolResult,
    RoundReport,
    apply_round,
    compute_metrics,
    oracle_annotate,
    read_rounds_csv,
    run_protocol,
    write_rounds_csv,
)
from .scoring import (
    ScoreRecord,
    entropy,
    inconsistency_score,
    neighbor_histogram,
    score_candidate,
    softmax_normalize,
)
from .strategies import (
    STRATEGY_NAMES,
    QueryBatch,
    run_strategy,
    select_certainty,
    select_neat,
    select_neat_passive,
    select_random,
    select_uncertainty,
)
from .theory import (
    BoundParams,
    GridRow,
    SimulationResult,
    bound_index_sets,
    construction_constants,
    default_verification_spec,
    detection_error_bound,
    simulate_detection_error,
    verify_bound_grid,
    write_grid_csv,
)

__all__ = [name for name in dir() if not name.startswith("_")]
