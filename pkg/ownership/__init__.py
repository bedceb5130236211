# ownership/__init__.py

from .base import (
    AcquisitionAborted,
    BackendError,
    CalibrationError,
    HeuristicWeights,
    InputError,
    LlmParams,
    OwnershipError,
    RespondentError,
    ShareParams,
    SimilarityParams,
    SpatialParams,
)

from .roster_map import (
    ContextEntry,
    MapStore,
    ObjectRecord,
    Roster,
    UserProfile,
    load_map,
    load_roster,
    neighbor_context,
    similar_context,
)

from .usage_history import (
    Event,
    EventLog,
    UsageSummary,
    parse_events,
    segment_sessions,
    usage_summary,
)

from .scoring import (
    AblationFlags,
    ContextBundle,
    ScorerBackend,
    ShareDecision,
    build_inference_prompt,
    build_known,
    detect_shared,
    heuristic_score,
    parse_score_response,
    score_object,
)

from .conformal import (
    CalibrationModel,
    CalibrationSample,
    PredictionSet,
    calibrate,
    nonconformity,
    prediction_set,
    stopping_threshold,
)

from .interaction import (
    AnswerVector,
    Question,
    apply_answer,
    generate_question,
    interpret_answer,
    respond,
)

from .acquisition import (
    AcquisitionState,
    RunTrace,
    run_acquisition,
    select_query_target,
)

from .datagen import (
    GroundTruth,
    ScenarioSpec,
    assign_user,
    generate_environment,
    split_by_time,
)

from .baselines import frequency_predict, last_user_predict

from .evaluation import (
    MetricsReport,
    compute_metrics,
    predicted_set_from_state,
    step_curve,
)

__all__ = [
    "AcquisitionAborted",
    "BackendError",
    "CalibrationError",
    "HeuristicWeights",
    "InputError",
    "LlmParams",
    "OwnershipError",
    "RespondentError",
    "ShareParams",
    "SimilarityParams",
    "SpatialParams",
    "ContextEntry",
    "MapStore",
    "ObjectRecord",
    "Roster",
    "UserProfile",
    "load_map",
    "load_roster",
    "neighbor_context",
    "similar_context",
    "Event",
    "EventLog",
    "UsageSummary",
    "parse_events",
    "segment_sessions",
    "usage_summary",
    "AblationFlags",
    "ContextBundle",
    "ScorerBackend",
    "ShareDecision",
    "build_inference_prompt",
    "build_known",
    "detect_shared",
    "heuristic_score",
    "parse_score_response",
    "score_object",
    "CalibrationModel",
    "CalibrationSample",
    "PredictionSet",
    "calibrate",
    "nonconformity",
    "prediction_set",
    "stopping_threshold",
    "AnswerVector",
    "Question",
    "apply_answer",
    "generate_question",
    "interpret_answer",
    "respond",
    "AcquisitionState",
    "RunTrace",
    "run_acquisition",
    "select_query_target",
    "GroundTruth",
    "ScenarioSpec",
    "assign_user",
    "generate_environment",
    "split_by_time",
    "frequency_predict",
    "last_user_predict",
    "MetricsReport",
    "compute_metrics",
    "predicted_set_from_state",
    "step_curve",
]
