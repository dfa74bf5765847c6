"""Precision, recall and F1 for event mentions and their arguments.

Predictions and gold annotations are both written as ``PredictionRecord``
lines. An argument counts as correct when its event type and role match a gold
argument anchored in the same sentence (text) or image (visual), and its
location matches: the exact word span (or, under the head policy, a span
containing the gold head word) for text, an IoU at or above the threshold for
boxes. Each gold argument can be matched once.

Multimedia scores pool the textual and visual decisions of the events that
belong to an aligned multimedia event, so a multimedia event's gold arguments
are the union of its textual and visual ones.
"""

import logging
from collections import defaultdict
from collections.abc import Iterable, Sequence

from pydantic import BaseModel, Field, computed_field

from pyeventfill.candidates.pooling import box_iou
from pyeventfill.config import MatchPolicy, Modality, get_config
from pyeventfill.corpus.records import BoundingBox, EventInstance, Span
from pyeventfill.exceptions import ValidationError

logger = logging.getLogger(__name__)

TASKS = ("text", "image", "multimedia")

Anchor = tuple[str, str, str, str]


class ArgumentRecord(BaseModel, frozen=True):
    """A predicted or gold argument.

    Attributes:
        role: Role name.
        span: Word span for text arguments.
        head: Head word index, if known.
        bbox: Box for visual arguments.
        score: Matching score of a prediction, None for gold.
    """

    role: str
    span: Span | None = None
    head: int | None = None
    bbox: BoundingBox | None = None
    score: float | None = Field(default=None, ge=0, le=1)


class PredictionRecord(BaseModel, frozen=True):
    """One event mention with its arguments, predicted or gold."""

    instance_id: str
    doc_id: str
    modality: Modality
    event_type: str
    ontology: str
    sentence_id: str | None = None
    trigger: Span | None = None
    image_id: str | None = None
    multimedia_id: str | None = None
    arguments: tuple[ArgumentRecord, ...] = ()

    @property
    def anchor(self) -> Anchor:
        """Document, sentence or image, and event type an argument is scored within."""
        where = self.sentence_id if self.modality is Modality.TEXT else self.image_id
        return (self.modality.value, self.doc_id, where or "", self.event_type)

    @property
    def mention_key(self) -> tuple[Anchor, tuple[int, int] | None]:
        """Anchor plus trigger span, identifying an event mention."""
        return self.anchor, self.trigger.as_tuple() if self.trigger is not None else None


class PRF(BaseModel, frozen=True):
    """Counts and the precision, recall and F1 they imply (0/0 counts as 0)."""

    gold: int = 0
    predicted: int = 0
    matched: int = 0

    @computed_field  # type: ignore[prop-decorator]
    @property
    def precision(self) -> float:
        return self.matched / self.predicted if self.predicted else 0.0

    @computed_field  # type: ignore[prop-decorator]
    @property
    def recall(self) -> float:
        return self.matched / self.gold if self.gold else 0.0

    @computed_field  # type: ignore[prop-decorator]
    @property
    def f1(self) -> float:
        total = self.precision + self.recall
        return 2 * self.precision * self.recall / total if total else 0.0

    def __add__(self, other: "PRF") -> "PRF":
        return PRF(
            gold=self.gold + other.gold,
            predicted=self.predicted + other.predicted,
            matched=self.matched + other.matched,
        )


class TaskMetrics(BaseModel, frozen=True):
    """Event mention and argument scores of one task."""

    event: PRF = Field(default_factory=PRF)
    argument: PRF = Field(default_factory=PRF)


class MetricReport(BaseModel, frozen=True):
    """Scores per task (``text``, ``image``, ``multimedia``) plus pooled arguments.

    Attributes:
        tasks: Metrics per task.
        overall_argument: Textual and visual argument counts pooled.
    """

    tasks: dict[str, TaskMetrics] = Field(default_factory=dict)
    overall_argument: PRF = Field(default_factory=PRF)

    def task(self, name: str) -> TaskMetrics:
        """Metrics of one task, empty when the task had no data."""
        return self.tasks.get(name, TaskMetrics())

    @property
    def argument_f1(self) -> float:
        """Pooled argument F1, the checkpoint selection metric."""
        return self.overall_argument.f1


def gold_records(instances: Iterable[EventInstance]) -> list[PredictionRecord]:
    """Gold annotations of event instances as records."""
    return [
        PredictionRecord(
            instance_id=instance.instance_id,
            doc_id=instance.doc_id,
            modality=instance.modality,
            event_type=instance.event_type,
            ontology=instance.ontology,
            sentence_id=instance.sentence_id,
            trigger=instance.trigger,
            image_id=instance.image.image_id if instance.image is not None else None,
            multimedia_id=instance.multimedia_id,
            arguments=tuple(
                ArgumentRecord(role=a.role, span=a.span, head=a.head, bbox=a.bbox)
                for a in instance.arguments
            ),
        )
        for instance in instances
    ]


def argument_matches(
    predicted: ArgumentRecord,
    gold: ArgumentRecord,
    policy: MatchPolicy = MatchPolicy.EXACT,
    iou_threshold: float = 0.5,
) -> bool:
    """Whether a predicted argument fills the same role at the same place as a gold one."""
    if predicted.role != gold.role:
        return False
    if predicted.bbox is not None and gold.bbox is not None:
        return box_iou(predicted.bbox.as_tuple(), gold.bbox.as_tuple()) >= iou_threshold
    if predicted.span is None or gold.span is None:
        return False
    match policy:
        case MatchPolicy.EXACT:
            return predicted.span == gold.span
        case MatchPolicy.HEAD:
            head = gold.head if gold.head is not None else gold.span.end - 1
            return predicted.span.start <= head < predicted.span.end


def _count_arguments(
    predictions: Sequence[PredictionRecord],
    gold: Sequence[PredictionRecord],
    policy: MatchPolicy,
    iou_threshold: float,
) -> PRF:
    gold_by_anchor: dict[Anchor, list[ArgumentRecord]] = defaultdict(list)
    for record in gold:
        gold_by_anchor[record.anchor].extend(record.arguments)
    used: dict[Anchor, set[int]] = defaultdict(set)
    matched = 0
    for record in predictions:
        candidates = gold_by_anchor.get(record.anchor, [])
        taken = used[record.anchor]
        for argument in record.arguments:
            for index, gold_argument in enumerate(candidates):
                if index not in taken and argument_matches(
                    argument, gold_argument, policy, iou_threshold
                ):
                    taken.add(index)
                    matched += 1
                    break
    return PRF(
        gold=sum(len(r.arguments) for r in gold),
        predicted=sum(len(r.arguments) for r in predictions),
        matched=matched,
    )


def _count_events(
    predictions: Sequence[PredictionRecord],
    gold: Sequence[PredictionRecord],
) -> PRF:
    gold_keys = {record.mention_key for record in gold}
    predicted_keys = {record.mention_key for record in predictions}
    return PRF(
        gold=len(gold_keys),
        predicted=len(predicted_keys),
        matched=len(gold_keys & predicted_keys),
    )


def _count_multimedia_events(
    predictions: Sequence[PredictionRecord],
    gold: Sequence[PredictionRecord],
) -> PRF:
    gold_keys = {(r.multimedia_id, r.event_type) for r in gold}
    predicted_keys = {(r.multimedia_id, r.event_type) for r in predictions}
    return PRF(
        gold=len(gold_keys),
        predicted=len(predicted_keys),
        matched=len(gold_keys & predicted_keys),
    )


def score_arguments(
    predictions: Sequence[PredictionRecord],
    gold: Sequence[PredictionRecord],
    policy: MatchPolicy = MatchPolicy.EXACT,
    iou_threshold: float | None = None,
) -> MetricReport:
    """Score predictions against gold records.

    Args:
        predictions: Predicted events and arguments.
        gold: Gold events and arguments.
        policy: Text span matching policy.
        iou_threshold: Minimum IoU for boxes; defaults to the global setting (0.5).

    Returns:
        MetricReport with text, image and multimedia tasks.

    Raises:
        ValidationError: If the two sides use different ontologies.

    Example:
        >>> report = score_arguments([], [])
        >>> report.task("text").argument.f1
        0.0
    """
    ontologies = {record.ontology for record in (*predictions, *gold)}
    if len(ontologies) > 1:
        raise ValidationError(f"Predictions and gold mix ontologies: {sorted(ontologies)}")
    threshold = iou_threshold if iou_threshold is not None else get_config().iou_threshold

    tasks: dict[str, TaskMetrics] = {}
    for modality in Modality:
        modal_predictions = [r for r in predictions if r.modality is modality]
        modal_gold = [r for r in gold if r.modality is modality]
        tasks[modality.value] = TaskMetrics(
            event=_count_events(modal_predictions, modal_gold),
            argument=_count_arguments(modal_predictions, modal_gold, policy, threshold),
        )

    multimedia_predictions = [r for r in predictions if r.multimedia_id is not None]
    multimedia_gold = [r for r in gold if r.multimedia_id is not None]
    multimedia_arguments = PRF()
    for modality in Modality:
        multimedia_arguments += _count_arguments(
            [r for r in multimedia_predictions if r.modality is modality],
            [r for r in multimedia_gold if r.modality is modality],
            policy,
            threshold,
        )
    tasks["multimedia"] = TaskMetrics(
        event=_count_multimedia_events(multimedia_predictions, multimedia_gold),
        argument=multimedia_arguments,
    )

    report = MetricReport(
        tasks=tasks,
        overall_argument=tasks["text"].argument + tasks["image"].argument,
    )
    logger.debug(
        "Argument F1 text=%.4f image=%.4f multimedia=%.4f",
        report.task("text").argument.f1,
        report.task("image").argument.f1,
        report.task("multimedia").argument.f1,
    )
    return report
