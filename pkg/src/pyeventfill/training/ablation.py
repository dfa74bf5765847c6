"""Component ablations: train and evaluate model variants under one seed."""

import csv
import logging
from collections.abc import Iterable, Sequence
from enum import StrEnum
from pathlib import Path

from pydantic import BaseModel

from pyeventfill.config import ModelConfig, TrainingConfig
from pyeventfill.corpus.records import EventInstance
from pyeventfill.evaluation.metrics import MetricReport
from pyeventfill.evaluation.runner import evaluate
from pyeventfill.exceptions import ConfigurationError
from pyeventfill.matching.model import build_model
from pyeventfill.ontology.ontology import Ontology
from pyeventfill.training.trainer import TrainingData, train

logger = logging.getLogger(__name__)


class AblationVariant(StrEnum):
    """A model variant with one component removed or replaced."""

    BASELINE = "baseline"
    NO_CROSS_ATTENTION = "no_cross_attention"  # queries ignore the context
    NO_JOINT_PROMPTS = "no_joint_prompts"  # one query model per modality
    NO_PROMPTS = "no_prompts"  # trainable role prototypes instead of prompts


def apply_variant(config: ModelConfig, variant: AblationVariant) -> ModelConfig:
    """Model configuration of a variant, derived from the baseline configuration."""
    ablations = config.ablations
    match variant:
        case AblationVariant.BASELINE:
            return config
        case AblationVariant.NO_CROSS_ATTENTION:
            ablations = ablations.model_copy(update={"no_cross_attention": True})
        case AblationVariant.NO_JOINT_PROMPTS:
            ablations = ablations.model_copy(update={"joint_prompts": False})
        case AblationVariant.NO_PROMPTS:
            ablations = ablations.model_copy(update={"use_prototypes": True})
    return config.model_copy(update={"ablations": ablations})


def parse_suite(names: Iterable[str]) -> list[AblationVariant]:
    """Parse variant names; the baseline is always run first.

    Raises:
        ConfigurationError: If a name is not a known variant.

    Example:
        >>> parse_suite(["no_prompts"])
        [<AblationVariant.BASELINE: 'baseline'>, <AblationVariant.NO_PROMPTS: 'no_prompts'>]
    """
    variants = [AblationVariant.BASELINE]
    for name in names:
        try:
            variant = AblationVariant(name.strip())
        except ValueError as exc:
            known = [v.value for v in AblationVariant if v is not AblationVariant.BASELINE]
            raise ConfigurationError(f"Unknown ablation '{name}', expected one of {known}") from exc
        if variant not in variants:
            variants.append(variant)
    return variants


class AblationRow(BaseModel, frozen=True):
    """Outcome of one variant.

    Attributes:
        variant: Which variant.
        report: Metrics on the evaluation events.
        trainable_components: Components that received gradients.
        query_models: Keys of the variant's query models (empty for prototypes).
        run_id: Id of the variant's training manifest.
    """

    variant: AblationVariant
    report: MetricReport
    trainable_components: tuple[str, ...]
    query_models: tuple[str, ...]
    run_id: str


def run_ablation_suite(
    model_config: ModelConfig,
    training: TrainingConfig,
    ontology: Ontology,
    data: TrainingData,
    evaluation: Sequence[EventInstance],
    variants: Sequence[AblationVariant],
    output_dir: Path | None = None,
) -> list[AblationRow]:
    """Train and evaluate every variant with the same seed and data.

    Args:
        model_config: Baseline model configuration.
        training: Training schedule shared by all variants.
        ontology: Ontology of the training and evaluation events.
        data: Training and selection splits.
        evaluation: Events the variants are compared on.
        variants: Variants to run, usually from ``parse_suite``.
        output_dir: If given, each variant's manifest is written to
            ``<output_dir>/<variant>/manifest.json``.

    Returns:
        One row per variant, in order.
    """
    rows: list[AblationRow] = []
    for variant in variants:
        logger.info("Ablation variant %s", variant)
        model = build_model(apply_variant(model_config, variant), ontology)
        variant_dir = output_dir / variant.value if output_dir is not None else None
        result = train(model, data, training, output_dir=variant_dir)
        if variant_dir is not None:
            result.manifest.write(variant_dir / "manifest.json")
        trained = result.model
        rows.append(
            AblationRow(
                variant=variant,
                report=evaluate(trained, evaluation),
                trainable_components=tuple(
                    sorted({name for stage in result.manifest.stages for name in stage.trainable})
                ),
                query_models=tuple(sorted(trained.query_models.keys())),
                run_id=result.manifest.run_id,
            )
        )
    return rows


def write_ablation_table(rows: Sequence[AblationRow], path: Path | str) -> Path:
    """Write one line per variant with argument P/R/F1 per task."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, delimiter="\t", lineterminator="\n")
        header = ["variant"]
        for task in ("text", "image", "multimedia"):
            header += [f"{task}_P", f"{task}_R", f"{task}_F1"]
        writer.writerow([*header, "query_models", "trainable"])
        for row in rows:
            cells: list[str] = [row.variant.value]
            for task in ("text", "image", "multimedia"):
                counts = row.report.task(task).argument
                cells += [f"{counts.precision:.6f}", f"{counts.recall:.6f}", f"{counts.f1:.6f}"]
            cells += [",".join(row.query_models) or "-", ",".join(row.trainable_components)]
            writer.writerow(cells)
    return path
