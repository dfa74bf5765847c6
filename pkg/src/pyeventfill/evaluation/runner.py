"""Prediction, evaluation modes and threshold sweeps."""

import csv
import logging
from collections.abc import Sequence
from enum import StrEnum
from pathlib import Path

from pydantic import BaseModel, Field

from pyeventfill.candidates.pooling import filter_by_confidence
from pyeventfill.config import InferenceConfig, Modality
from pyeventfill.corpus.records import EventInstance
from pyeventfill.evaluation.metrics import (
    ArgumentRecord,
    MetricReport,
    PredictionRecord,
    TaskMetrics,
    gold_records,
    score_arguments,
)
from pyeventfill.exceptions import DataError, ValidationError
from pyeventfill.matching.model import TemplateFillingModel
from pyeventfill.matching.scoring import MatchResult

logger = logging.getLogger(__name__)


class EvaluationMode(StrEnum):
    """Which event mentions and candidates the model is evaluated on."""

    PRED_TRIGGERS = "pred_triggers"  # predicted event mentions, detector candidates
    GOLD_TRIGGERS = "gold_triggers"  # annotated event mentions, detector candidates
    GOLD_CANDIDATES = "gold_candidates"  # annotated mentions and annotated candidates


class EvaluationData(BaseModel, frozen=True):
    """Gold events plus, optionally, predicted event mentions.

    Attributes:
        gold: Annotated event instances.
        triggers: Predicted event mentions with their candidates, needed for
            ``pred_triggers`` mode.
    """

    gold: tuple[EventInstance, ...]
    triggers: tuple[EventInstance, ...] | None = None


def apply_confidence_floor(instance: EventInstance, floor: float | None) -> EventInstance:
    """Drop the candidates whose detector confidence is below ``floor``."""
    if floor is None:
        return instance
    return instance.model_copy(
        update={
            "entity_candidates": tuple(filter_by_confidence(instance.entity_candidates, floor)),
            "object_candidates": tuple(filter_by_confidence(instance.object_candidates, floor)),
        }
    )


def score_events(
    model: TemplateFillingModel,
    instances: Sequence[EventInstance],
    confidence_floor: float | None = None,
) -> list[tuple[EventInstance, MatchResult]]:
    """Run the model once over every event; re-threshold the results freely afterwards."""
    scored: list[tuple[EventInstance, MatchResult]] = []
    for instance in instances:
        kept = apply_confidence_floor(instance, confidence_floor)
        scored.append((kept, model.forward_event(kept)))
    return scored


def to_prediction(instance: EventInstance, result: MatchResult) -> PredictionRecord:
    """Turn role assignments into a prediction record."""
    arguments: list[ArgumentRecord] = []
    for index, role in enumerate(result.assignments):
        if role is None:
            continue
        score = result.assigned_score(index)
        if instance.modality is Modality.TEXT:
            candidate = instance.entity_candidates[index]
            arguments.append(
                ArgumentRecord(role=role, span=candidate.span, head=candidate.head, score=score)
            )
        else:
            box = instance.object_candidates[index]
            arguments.append(ArgumentRecord(role=role, bbox=box.bbox, score=score))
    return PredictionRecord(
        instance_id=instance.instance_id,
        doc_id=instance.doc_id,
        modality=instance.modality,
        event_type=instance.event_type,
        ontology=instance.ontology,
        sentence_id=instance.sentence_id,
        trigger=instance.trigger,
        image_id=instance.image.image_id if instance.image is not None else None,
        multimedia_id=instance.multimedia_id,
        arguments=tuple(arguments),
    )


def records_at(
    scored: Sequence[tuple[EventInstance, MatchResult]],
    text_threshold: float,
    visual_threshold: float,
) -> list[PredictionRecord]:
    """Prediction records of scored events at the given thresholds."""
    records: list[PredictionRecord] = []
    for instance, result in scored:
        tau = text_threshold if instance.modality is Modality.TEXT else visual_threshold
        records.append(to_prediction(instance, result.rethreshold(tau)))
    return records


def predict_events(
    model: TemplateFillingModel,
    instances: Sequence[EventInstance],
    inference: InferenceConfig | None = None,
) -> list[PredictionRecord]:
    """Predict the arguments of every event mention.

    Args:
        model: Trained model.
        instances: Event mentions with candidates.
        inference: Thresholds and confidence floor; defaults to tau = 0.5.
    """
    inference = inference or InferenceConfig()
    scored = score_events(model, instances, inference.confidence_floor)
    return records_at(scored, inference.text_threshold, inference.visual_threshold)


def evaluate(
    model: TemplateFillingModel,
    instances: Sequence[EventInstance],
    inference: InferenceConfig | None = None,
) -> MetricReport:
    """Predict on annotated event mentions and score against their gold arguments."""
    inference = inference or InferenceConfig()
    predictions = predict_events(model, instances, inference)
    return score_arguments(
        predictions,
        gold_records(instances),
        policy=inference.match_policy,
        iou_threshold=inference.iou_threshold,
    )


def _check_object_candidates(inputs: Sequence[EventInstance], mode: EvaluationMode) -> None:
    images = [i for i in inputs if i.modality is Modality.IMAGE]
    bare = [i.instance_id for i in images if not i.object_candidates]
    if not bare:
        return
    if len(bare) == len(images):
        raise DataError(
            f"{mode} mode needs detected objects but no image event has any; "
            "attach detections or evaluate in gold_candidates mode"
        )
    logger.warning(
        "%d of %d image events have no object candidates and get no arguments: %s",
        len(bare),
        len(images),
        bare[:5],
    )


def evaluate_modes(
    model: TemplateFillingModel,
    data: EvaluationData,
    mode: EvaluationMode,
    inference: InferenceConfig | None = None,
) -> MetricReport:
    """Evaluate under predicted triggers, gold triggers or gold candidates.

    Raises:
        DataError: If the mode needs annotations or trigger predictions that
            the data lacks, or if outside gold_candidates mode no image event
            has object candidates.
    """
    inference = inference or InferenceConfig()
    gold = list(data.gold)
    match mode:
        case EvaluationMode.PRED_TRIGGERS:
            if data.triggers is None:
                raise DataError("pred_triggers mode needs predicted event mentions")
            inputs = list(data.triggers)
        case EvaluationMode.GOLD_TRIGGERS:
            if not gold:
                raise DataError("gold_triggers mode needs annotated event mentions")
            inputs = gold
        case EvaluationMode.GOLD_CANDIDATES:
            missing = [i.instance_id for i in gold if not i.has_gold_candidates]
            if not gold or missing:
                raise DataError(
                    f"gold_candidates mode needs annotated candidates; missing for {missing[:5]}"
                )
            inputs = [instance.with_gold_candidates() for instance in gold]

    if mode is not EvaluationMode.GOLD_CANDIDATES:
        _check_object_candidates(inputs, mode)
    predictions = predict_events(model, inputs, inference)
    report = score_arguments(
        predictions,
        gold_records(gold),
        policy=inference.match_policy,
        iou_threshold=inference.iou_threshold,
    )
    logger.info("%s: pooled argument F1 %.4f", mode, report.argument_f1)
    return report


class SweepRow(BaseModel, frozen=True):
    """Metrics of one task at one threshold setting.

    Text rows vary ``text_threshold`` only, image rows ``visual_threshold``
    only; multimedia rows depend on both.
    """

    task: str
    text_threshold: float | None = None
    visual_threshold: float | None = None
    metrics: TaskMetrics


class SweepResult(BaseModel, frozen=True):
    """A threshold sweep: one report per threshold pair and the derived table."""

    text_grid: tuple[float, ...]
    visual_grid: tuple[float, ...]
    reports: dict[str, MetricReport] = Field(description="Keyed 'tau_text,tau_vis'")

    @staticmethod
    def key(text_threshold: float, visual_threshold: float) -> str:
        """Report key of a threshold pair."""
        return f"{text_threshold:g},{visual_threshold:g}"

    def report(self, text_threshold: float, visual_threshold: float) -> MetricReport:
        """Report at one threshold pair."""
        return self.reports[self.key(text_threshold, visual_threshold)]

    @property
    def rows(self) -> tuple[SweepRow, ...]:
        """Text rows per tau_text, image rows per tau_vis, multimedia rows per pair."""
        first_text, first_visual = self.text_grid[0], self.visual_grid[0]
        rows = [
            SweepRow(
                task="text",
                text_threshold=tau,
                metrics=self.report(tau, first_visual).task("text"),
            )
            for tau in self.text_grid
        ]
        rows += [
            SweepRow(
                task="image",
                visual_threshold=tau,
                metrics=self.report(first_text, tau).task("image"),
            )
            for tau in self.visual_grid
        ]
        rows += [
            SweepRow(
                task="multimedia",
                text_threshold=tau_text,
                visual_threshold=tau_visual,
                metrics=self.report(tau_text, tau_visual).task("multimedia"),
            )
            for tau_text in self.text_grid
            for tau_visual in self.visual_grid
        ]
        return tuple(rows)

    def rows_for(self, task: str) -> tuple[SweepRow, ...]:
        """Rows of one task."""
        return tuple(row for row in self.rows if row.task == task)

    def best_thresholds(self) -> tuple[float, float]:
        """tau_text and tau_vis maximising their modality's argument F1.

        The lowest threshold wins ties.
        """
        best_text = max(
            self.text_grid,
            key=lambda tau: (self.report(tau, self.visual_grid[0]).task("text").argument.f1, -tau),
        )
        best_visual = max(
            self.visual_grid,
            key=lambda tau: (self.report(self.text_grid[0], tau).task("image").argument.f1, -tau),
        )
        return best_text, best_visual

    def write_tsv(self, path: Path | str) -> Path:
        """Write the sweep table with a header line.

        Columns: tau_text, tau_vis, task, P, R, F1, predicted, gold, matched.
        Thresholds a row does not depend on are written as ``-``.
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, delimiter="\t", lineterminator="\n")
            writer.writerow(
                ["tau_text", "tau_vis", "task", "P", "R", "F1", "predicted", "gold", "matched"]
            )
            for row in self.rows:
                counts = row.metrics.argument
                writer.writerow(
                    [
                        "-" if row.text_threshold is None else f"{row.text_threshold:g}",
                        "-" if row.visual_threshold is None else f"{row.visual_threshold:g}",
                        row.task,
                        f"{counts.precision:.6f}",
                        f"{counts.recall:.6f}",
                        f"{counts.f1:.6f}",
                        counts.predicted,
                        counts.gold,
                        counts.matched,
                    ]
                )
        return path


def _check_grid(grid: Sequence[float], name: str) -> tuple[float, ...]:
    if not grid:
        raise ValidationError(f"Empty {name} threshold grid")
    if any(not 0 < tau < 1 for tau in grid):
        raise ValidationError(f"{name} thresholds must lie in (0, 1): {list(grid)}")
    if any(b <= a for a, b in zip(grid, grid[1:], strict=False)):
        raise ValidationError(f"{name} thresholds must be strictly increasing: {list(grid)}")
    return tuple(float(tau) for tau in grid)


def sweep_thresholds(
    model: TemplateFillingModel,
    instances: Sequence[EventInstance],
    text_grid: Sequence[float],
    visual_grid: Sequence[float] | None = None,
    inference: InferenceConfig | None = None,
) -> SweepResult:
    """Evaluate every (tau_text, tau_vis) pair of two threshold grids.

    The model scores every event once; each pair only re-thresholds.

    Args:
        model: Trained model.
        instances: Annotated event mentions.
        text_grid: Sorted thresholds in (0, 1) for text.
        visual_grid: Thresholds for images; defaults to ``text_grid``.
        inference: Matching policy, IoU and confidence floor.

    Raises:
        ValidationError: If a grid is empty, unsorted or leaves (0, 1).
    """
    inference = inference or InferenceConfig()
    text_taus = _check_grid(text_grid, "text")
    visual_taus = _check_grid(visual_grid if visual_grid is not None else text_grid, "visual")
    scored = score_events(model, instances, inference.confidence_floor)
    gold = gold_records(instances)
    reports: dict[str, MetricReport] = {}
    for tau_text in text_taus:
        for tau_visual in visual_taus:
            reports[SweepResult.key(tau_text, tau_visual)] = score_arguments(
                records_at(scored, tau_text, tau_visual),
                gold,
                policy=inference.match_policy,
                iou_threshold=inference.iou_threshold,
            )
    result = SweepResult(text_grid=text_taus, visual_grid=visual_taus, reports=reports)
    logger.info("Swept %d threshold pairs; best %s", len(reports), result.best_thresholds())
    return result

