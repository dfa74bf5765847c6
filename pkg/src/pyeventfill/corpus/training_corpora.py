"""Adapters for training corpora in ACE-, SWiG- and FrameNet-like layouts.

Labels are carried over to the active ontology through an OntologyMapping.
Events mapped to DROP disappear, roles mapped to DROP leave their candidate
without a role. Events or roles without a mapping rule raise in strict mode
and are counted and skipped in lenient mode.

Layouts:

ace_like
    JSON list or JSON lines of sentence records, the same keys as M2E2 text
    files (``sentence_id``, ``words``, ``golden-entity-mentions``,
    ``golden-event-mentions``).
swig_like
    A JSON object mapping image file names to ``{"verb": ..., "frames":
    [{role: noun, ...}], "bb": {role: [x0, y0, x1, y1]}}``; boxes of
    ``-1`` mark roles not visible in the image.
framenet_like
    JSON lines of ``{"sentence_id", "words", "frame", "target": [s, e],
    "frame_elements": [{"name", "start", "end"}]}``.
"""

import json
import logging
from collections.abc import Iterator
from dataclasses import dataclass
from enum import StrEnum
from pathlib import Path
from typing import Any

from pydantic import BaseModel

from pyeventfill.config import Modality
from pyeventfill.corpus.m2e2 import document_id
from pyeventfill.corpus.records import (
    BoundingBox,
    CandidateBox,
    CandidateSpan,
    EventInstance,
    GoldArgument,
    ImageRef,
    Span,
)
from pyeventfill.exceptions import DataError, IngestionError, OntologyError
from pyeventfill.ontology.mapping import OntologyMapping, map_labels
from pyeventfill.ontology.ontology import Ontology

logger = logging.getLogger(__name__)


class TrainingFormat(StrEnum):
    """Layout of a training corpus."""

    ACE_LIKE = "ace_like"
    SWIG_LIKE = "swig_like"
    FRAMENET_LIKE = "framenet_like"


class TrainingCorpus(BaseModel, frozen=True):
    """Instances relabeled into the active ontology.

    Attributes:
        instances: Emitted event instances.
        dropped: Events mapped to DROP.
        skipped: Events skipped in lenient mode for lack of a mapping rule.
    """

    instances: tuple[EventInstance, ...]
    dropped: int = 0
    skipped: int = 0


@dataclass
class _RawEvent:
    """A source-labeled event before relabeling."""

    record_id: str
    doc_id: str
    modality: Modality
    event_type: str
    roles: list[str]
    locations: list[Span | BoundingBox]
    words: tuple[str, ...] = ()
    sentence_id: str | None = None
    trigger: Span | None = None
    image: ImageRef | None = None
    entities: tuple[CandidateSpan, ...] = ()
    boxes: tuple[CandidateBox, ...] = ()


def _load_records(path: Path) -> list[dict[str, Any]]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IngestionError(f"Cannot read corpus ({exc})", path) from exc
    try:
        if text.lstrip().startswith("["):
            records: list[dict[str, Any]] = json.loads(text)
            return records
        return [json.loads(line) for line in text.splitlines() if line.strip()]
    except ValueError as exc:
        raise IngestionError(f"Invalid JSON ({exc})", path) from exc


def _ace_events(path: Path) -> Iterator[_RawEvent]:
    for record in _load_records(path):
        sentence_id = record["sentence_id"]
        entities = tuple(
            CandidateSpan(span=Span(start=m["start"], end=m["end"]), label=m.get("entity_type"))
            for m in record.get("golden-entity-mentions", [])
        )
        for index, mention in enumerate(record.get("golden-event-mentions", [])):
            arguments = mention.get("arguments", [])
            yield _RawEvent(
                record_id=f"{sentence_id}:e{index}",
                doc_id=record.get("doc_id") or document_id(sentence_id),
                modality=Modality.TEXT,
                event_type=mention["event_type"],
                roles=[a["role"] for a in arguments],
                locations=[Span(start=a["start"], end=a["end"]) for a in arguments],
                words=tuple(record["words"]),
                sentence_id=sentence_id,
                trigger=Span(start=mention["trigger"]["start"], end=mention["trigger"]["end"]),
                entities=entities,
            )


def _swig_events(path: Path) -> Iterator[_RawEvent]:
    try:
        annotations: dict[str, Any] = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise IngestionError(f"Cannot parse SWiG-like annotations ({exc})", path) from exc
    for image_name, record in annotations.items():
        roles: list[str] = []
        boxes: list[BoundingBox] = []
        for role, box in record.get("bb", {}).items():
            if min(box) < 0:
                continue
            x_min, y_min, x_max, y_max = (float(v) for v in box)
            if x_min >= x_max or y_min >= y_max:
                continue
            roles.append(role)
            boxes.append(BoundingBox(x_min=x_min, y_min=y_min, x_max=x_max, y_max=y_max))
        yield _RawEvent(
            record_id=image_name,
            doc_id=image_name.rsplit(".", 1)[0],
            modality=Modality.IMAGE,
            event_type=record["verb"],
            roles=roles,
            locations=list(boxes),
            image=ImageRef(image_id=image_name, path=Path("images") / image_name),
            boxes=tuple(dict.fromkeys(CandidateBox(bbox=b) for b in boxes)),
        )


def _framenet_events(path: Path) -> Iterator[_RawEvent]:
    for record in _load_records(path):
        elements = record.get("frame_elements", [])
        spans = [Span(start=fe["start"], end=fe["end"]) for fe in elements]
        start, end = record["target"]
        yield _RawEvent(
            record_id=record["sentence_id"],
            doc_id=record.get("doc_id") or document_id(record["sentence_id"]),
            modality=Modality.TEXT,
            event_type=record["frame"],
            roles=[fe["name"] for fe in elements],
            locations=list(spans),
            words=tuple(record["words"]),
            sentence_id=record["sentence_id"],
            trigger=Span(start=start, end=end),
            entities=tuple(dict.fromkeys(CandidateSpan(span=s) for s in spans)),
        )


_READERS = {
    TrainingFormat.ACE_LIKE: _ace_events,
    TrainingFormat.SWIG_LIKE: _swig_events,
    TrainingFormat.FRAMENET_LIKE: _framenet_events,
}


def load_training_corpus(
    path: Path | str,
    corpus_format: TrainingFormat,
    mapping: OntologyMapping,
    ontology: Ontology,
    strict: bool = True,
) -> TrainingCorpus:
    """Load a training corpus and relabel it into ``ontology``.

    Args:
        path: Corpus file.
        corpus_format: Source layout.
        mapping: Source-to-target label mapping; use
            ``OntologyMapping.identity(ontology)`` for corpora already in the
            target labels.
        ontology: Active ontology; every emitted instance has a template in it.
        strict: Raise on unmapped labels instead of skipping the event.

    Raises:
        OntologyError: If the mapping targets labels missing from ``ontology``.
        DataError: On malformed records, or unmapped labels in strict mode.
    """
    path = Path(path)
    mapping.validate_against(ontology)
    instances: list[EventInstance] = []
    dropped = skipped = 0
    try:
        raw_events = list(_READERS[corpus_format](path))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"Malformed {corpus_format} record in {path}: {exc}") from exc

    for raw in raw_events:
        try:
            mapped = map_labels(mapping, raw.event_type, raw.roles)
        except OntologyError as exc:
            if strict:
                raise DataError(f"{path.name}, record {raw.record_id}: {exc}") from exc
            skipped += 1
            logger.warning("Skipping %s: %s", raw.record_id, exc)
            continue
        if mapped is None:
            dropped += 1
            continue

        arguments = tuple(
            GoldArgument(role=role, span=loc)
            if isinstance(loc, Span)
            else GoldArgument(role=role, bbox=loc)
            for role, loc in zip(mapped.roles, raw.locations, strict=True)
            if role is not None
        )
        try:
            instance = EventInstance(
                instance_id=raw.record_id,
                doc_id=raw.doc_id,
                modality=raw.modality,
                event_type=mapped.event_type,
                ontology=ontology.name,
                source=corpus_format.value,
                sentence_id=raw.sentence_id,
                words=raw.words,
                trigger=raw.trigger,
                image=raw.image,
                entity_candidates=raw.entities,
                gold_entities=raw.entities,
                object_candidates=raw.boxes,
                gold_objects=raw.boxes,
                arguments=arguments,
            )
        except ValueError as exc:
            raise DataError(f"{path.name}, record {raw.record_id}: {exc}") from exc
        instances.append(instance)

    logger.info(
        "Loaded %d instances from %s (%d dropped, %d skipped)",
        len(instances),
        path.name,
        dropped,
        skipped,
    )
    return TrainingCorpus(instances=tuple(instances), dropped=dropped, skipped=skipped)
