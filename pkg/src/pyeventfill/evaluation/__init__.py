"""Argument extraction metrics, evaluation modes and threshold sweeps."""

from pyeventfill.candidates.pooling import box_iou
from pyeventfill.config import MatchPolicy
from pyeventfill.evaluation.metrics import (
    PRF,
    TASKS,
    ArgumentRecord,
    MetricReport,
    PredictionRecord,
    TaskMetrics,
    argument_matches,
    gold_records,
    score_arguments,
)
from pyeventfill.evaluation.runner import (
    EvaluationData,
    EvaluationMode,
    SweepResult,
    SweepRow,
    apply_confidence_floor,
    evaluate,
    evaluate_modes,
    predict_events,
    records_at,
    score_events,
    sweep_thresholds,
    to_prediction,
)

__all__ = [
    # Records and metrics
    "PRF",
    "TASKS",
    "ArgumentRecord",
    "MatchPolicy",
    "MetricReport",
    "PredictionRecord",
    "TaskMetrics",
    "argument_matches",
    "box_iou",
    "gold_records",
    "score_arguments",
    # Prediction and evaluation
    "EvaluationData",
    "EvaluationMode",
    "apply_confidence_floor",
    "evaluate",
    "evaluate_modes",
    "predict_events",
    "records_at",
    "score_events",
    "to_prediction",
    # Threshold sweeps
    "SweepResult",
    "SweepRow",
    "sweep_thresholds",
]
