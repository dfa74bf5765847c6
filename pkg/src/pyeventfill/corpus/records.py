"""Normalized corpus records.

Every source format is converted into ``EventInstance`` records, one per event
mention, stored as JSON lines. Trainers and evaluators only ever see these.
"""

import hashlib
import json
import logging
from collections.abc import Iterable
from pathlib import Path
from typing import Self

from pydantic import BaseModel, Field, model_validator

from pyeventfill.config import Modality
from pyeventfill.exceptions import DataError, IngestionError

logger = logging.getLogger(__name__)

RGB = tuple[int, int, int]


class Span(BaseModel, frozen=True):
    """A ``[start, end)`` word span."""

    start: int = Field(ge=0)
    end: int = Field(ge=1)

    @model_validator(mode="after")
    def _non_empty(self) -> Self:
        if self.start >= self.end:
            raise ValueError(f"Span [{self.start}, {self.end}) is empty")
        return self

    def as_tuple(self) -> tuple[int, int]:
        """``(start, end)``."""
        return self.start, self.end


class BoundingBox(BaseModel, frozen=True):
    """An axis-aligned box in original image pixels."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    @model_validator(mode="after")
    def _positive_area(self) -> Self:
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"Bounding box {self.as_tuple()} has zero or negative area")
        return self

    def as_tuple(self) -> tuple[float, float, float, float]:
        """``(x_min, y_min, x_max, y_max)``."""
        return self.x_min, self.y_min, self.x_max, self.y_max

    @property
    def area(self) -> float:
        """Box area in square pixels."""
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)


class CandidateSpan(BaseModel, frozen=True):
    """An entity span proposed as argument candidate.

    Attributes:
        span: Word span of the entity.
        head: Word index of the syntactic head, if known.
        label: Entity type, if known.
        confidence: Recognizer confidence, if given.
    """

    span: Span
    head: int | None = None
    label: str | None = None
    confidence: float | None = Field(default=None, ge=0, le=1)


class CandidateBox(BaseModel, frozen=True):
    """A detected (or annotated) object box proposed as argument candidate."""

    bbox: BoundingBox
    label: str | None = None
    confidence: float | None = Field(default=None, ge=0, le=1)


class GoldArgument(BaseModel, frozen=True):
    """An annotated argument: a role filled by a span (text) or a box (image)."""

    role: str
    span: Span | None = None
    head: int | None = None
    bbox: BoundingBox | None = None

    @model_validator(mode="after")
    def _one_location(self) -> Self:
        if (self.span is None) == (self.bbox is None):
            raise ValueError(f"Argument '{self.role}' needs exactly one of span or bbox")
        return self


class CanvasFill(BaseModel, frozen=True):
    """A textured rectangle drawn on a synthetic canvas.

    The texture is a 16x16 tile of pixels drawn from ``pattern_seed`` and
    repeated over the box.
    """

    bbox: BoundingBox
    pattern_seed: int


class SyntheticCanvas(BaseModel, frozen=True):
    """A procedurally drawn image."""

    width: int = Field(ge=1)
    height: int = Field(ge=1)
    background: RGB
    fills: tuple[CanvasFill, ...] = ()


class ImageRef(BaseModel, frozen=True):
    """Where an image comes from: a file, or a synthetic canvas description."""

    image_id: str
    path: Path | None = None
    canvas: SyntheticCanvas | None = None

    @model_validator(mode="after")
    def _one_source(self) -> Self:
        if (self.path is None) == (self.canvas is None):
            raise ValueError(f"Image '{self.image_id}' needs exactly one of path or canvas")
        return self


class EventInstance(BaseModel, frozen=True):
    """One event mention with its candidates and gold arguments.

    Text instances carry the sentence words and a trigger span; image
    instances carry an image and no trigger (the whole scene is the trigger).

    Attributes:
        instance_id: Unique id of the mention.
        doc_id: Document the mention belongs to.
        modality: Text or image.
        event_type: Label in ``ontology``.
        ontology: Name of the ontology the labels belong to.
        source: Provenance of the record (corpus format, detector name ...).
        sentence_id: Sentence id for text mentions.
        words: Sentence words for text mentions.
        trigger: Trigger word span for text mentions.
        image: Image for image mentions.
        entity_candidates: Recognized entity spans (text).
        object_candidates: Detected object boxes (image).
        gold_entities: Annotated entity spans, used in gold-candidate mode.
        gold_objects: Annotated object boxes, used in gold-candidate mode.
        arguments: Gold arguments.
        multimedia_id: Shared by the text and image mention of a multimedia event.
    """

    instance_id: str
    doc_id: str
    modality: Modality
    event_type: str
    ontology: str
    source: str = "normalized"
    sentence_id: str | None = None
    words: tuple[str, ...] = ()
    trigger: Span | None = None
    image: ImageRef | None = None
    entity_candidates: tuple[CandidateSpan, ...] = ()
    object_candidates: tuple[CandidateBox, ...] = ()
    gold_entities: tuple[CandidateSpan, ...] = ()
    gold_objects: tuple[CandidateBox, ...] = ()
    arguments: tuple[GoldArgument, ...] = ()
    multimedia_id: str | None = None

    @model_validator(mode="after")
    def _check_modality(self) -> Self:
        if self.modality is Modality.TEXT:
            if not self.words or self.trigger is None:
                raise ValueError(f"Text instance '{self.instance_id}' needs words and a trigger")
            length = len(self.words)
            spans = [self.trigger]
            spans += [c.span for c in (*self.entity_candidates, *self.gold_entities)]
            spans += [a.span for a in self.arguments if a.span is not None]
            for span in spans:
                if span.end > length:
                    raise ValueError(
                        f"Span {span.as_tuple()} outside the {length}-word sentence of "
                        f"'{self.instance_id}'"
                    )
            if any(a.bbox is not None for a in self.arguments):
                raise ValueError(f"Text instance '{self.instance_id}' has box arguments")
        else:
            if self.image is None or self.trigger is not None:
                raise ValueError(
                    f"Image instance '{self.instance_id}' needs an image and no trigger"
                )
            if any(a.span is not None for a in self.arguments):
                raise ValueError(f"Image instance '{self.instance_id}' has span arguments")
        return self

    @property
    def has_gold_candidates(self) -> bool:
        """Whether annotated candidates (or argument locations) exist."""
        return bool(self.gold_entities or self.gold_objects or self.arguments)

    def with_gold_candidates(self) -> "EventInstance":
        """Swap detector candidates for annotated ones.

        Annotated entity spans / object boxes are used when present, otherwise
        the gold argument locations.
        """
        if self.modality is Modality.TEXT:
            gold = self.gold_entities or tuple(
                CandidateSpan(span=a.span, head=a.head) for a in self.arguments if a.span
            )
            return self.model_copy(update={"entity_candidates": _unique(gold)})
        boxes = self.gold_objects or tuple(
            CandidateBox(bbox=a.bbox) for a in self.arguments if a.bbox
        )
        return self.model_copy(update={"object_candidates": _unique(boxes)})

    @property
    def candidate_count(self) -> int:
        """Number of candidates of this instance's modality."""
        if self.modality is Modality.TEXT:
            return len(self.entity_candidates)
        return len(self.object_candidates)


def _unique[T](items: Iterable[T]) -> tuple[T, ...]:
    return tuple(dict.fromkeys(items))


class MultimediaDocument(BaseModel, frozen=True):
    """A news document with sentences, images, candidates and gold events.

    Attributes:
        doc_id: Document id.
        sentences: Sentence id to words.
        images: Image id to reference.
        entities: Sentence id to entity spans.
        objects: Image id to object boxes.
        text_events: Gold textual event mentions.
        image_events: Gold visual event mentions.
        multimedia_events: Pairs of (text instance id, image instance id).
    """

    doc_id: str
    sentences: dict[str, tuple[str, ...]] = Field(default_factory=dict)
    images: dict[str, ImageRef] = Field(default_factory=dict)
    entities: dict[str, tuple[CandidateSpan, ...]] = Field(default_factory=dict)
    objects: dict[str, tuple[CandidateBox, ...]] = Field(default_factory=dict)
    text_events: tuple[EventInstance, ...] = ()
    image_events: tuple[EventInstance, ...] = ()
    multimedia_events: tuple[tuple[str, str], ...] = ()

    def validate_integrity(self) -> None:
        """Check every reference inside the document.

        Raises:
            DataError: Naming the first dangling reference.
        """
        for sentence_id in self.entities:
            if sentence_id not in self.sentences:
                raise DataError(f"{self.doc_id}: entities reference unknown sentence {sentence_id}")
        for image_id in self.objects:
            if image_id not in self.images:
                raise DataError(f"{self.doc_id}: objects reference unknown image {image_id}")
        for event in self.text_events:
            if event.sentence_id not in self.sentences:
                raise DataError(
                    f"{self.doc_id}: event {event.instance_id} references unknown sentence "
                    f"{event.sentence_id}"
                )
        for event in self.image_events:
            if event.image is None or event.image.image_id not in self.images:
                raise DataError(
                    f"{self.doc_id}: event {event.instance_id} references an unknown image"
                )
        text_by_id = {event.instance_id: event for event in self.text_events}
        image_by_id = {event.instance_id: event for event in self.image_events}
        for text_id, image_id in self.multimedia_events:
            if text_id not in text_by_id or image_id not in image_by_id:
                raise DataError(
                    f"{self.doc_id}: multimedia event ({text_id}, {image_id}) references a "
                    "missing event"
                )
            if text_by_id[text_id].event_type != image_by_id[image_id].event_type:
                raise DataError(
                    f"{self.doc_id}: multimedia event ({text_id}, {image_id}) joins different "
                    "event types"
                )


def write_jsonl(records: Iterable[BaseModel], path: Path | str) -> int:
    """Write pydantic records as JSON lines.

    Returns:
        Number of records written.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(record.model_dump_json(exclude_defaults=True))
            handle.write("\n")
            count += 1
    return count


def read_jsonl[M: BaseModel](path: Path | str, model: type[M]) -> list[M]:
    """Read JSON lines into pydantic records.

    Raises:
        IngestionError: If the file is unreadable or a line fails validation.
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IngestionError(f"Cannot read records ({exc})", path) from exc
    records: list[M] = []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            records.append(model.model_validate_json(line))
        except ValueError as exc:
            raise IngestionError(f"Invalid record on line {line_no} ({exc})", path) from exc
    logger.debug("Read %d %s records from %s", len(records), model.__name__, path)
    return records


def read_instances(path: Path | str) -> list[EventInstance]:
    """Read normalized EventInstance records."""
    return read_jsonl(path, EventInstance)


def fingerprint_instances(instances: Iterable[EventInstance]) -> str:
    """SHA-256 over the canonical JSON of a list of instances."""
    digest = hashlib.sha256()
    for instance in instances:
        digest.update(json.dumps(instance.model_dump(mode="json"), sort_keys=True).encode())
        digest.update(b"\n")
    return digest.hexdigest()


def instance_statistics(instances: Iterable[EventInstance]) -> dict[str, int]:
    """Document, sentence, image and event counts of a split.

    Uses the keys of ``corpus_statistics``. Sentences and images are counted
    once however many events they anchor; multimedia events are counted by
    distinct ``multimedia_id``.
    """
    items = list(instances)
    return {
        "documents": len({i.doc_id for i in items}),
        "sentences": len({i.sentence_id for i in items if i.sentence_id is not None}),
        "images": len({i.image.image_id for i in items if i.image is not None}),
        "text_events": sum(i.modality is Modality.TEXT for i in items),
        "image_events": sum(i.modality is Modality.IMAGE for i in items),
        "multimedia_events": len({i.multimedia_id for i in items if i.multimedia_id}),
    }
