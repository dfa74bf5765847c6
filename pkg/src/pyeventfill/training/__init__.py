"""Training strategies, checkpoints and ablation suites."""

from pyeventfill.training.ablation import (
    AblationRow,
    AblationVariant,
    apply_variant,
    parse_suite,
    run_ablation_suite,
    write_ablation_table,
)
from pyeventfill.training.checkpoint import load_checkpoint, load_manifest, save_checkpoint
from pyeventfill.training.trainer import (
    EvaluationRecord,
    RunManifest,
    StageRecord,
    StepPlan,
    TrainingData,
    TrainResult,
    batch_loss,
    check_leakage,
    compute_run_id,
    plan_steps,
    train,
    transfer_train,
)

__all__ = [
    # Training
    "TrainingData",
    "TrainResult",
    "StepPlan",
    "plan_steps",
    "batch_loss",
    "train",
    "transfer_train",
    "check_leakage",
    "compute_run_id",
    # Manifests
    "RunManifest",
    "StageRecord",
    "EvaluationRecord",
    # Checkpoints
    "save_checkpoint",
    "load_checkpoint",
    "load_manifest",
    # Ablations
    "AblationVariant",
    "AblationRow",
    "apply_variant",
    "parse_suite",
    "run_ablation_suite",
    "write_ablation_table",
]
