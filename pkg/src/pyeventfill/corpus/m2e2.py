"""Loader for the published M2E2 benchmark layout.

Expected files in the corpus directory (each optional, at least one needed):

* ``text_multimedia_event.json`` / ``text_only_event.json``: lists of sentence
  records with ``sentence_id``, ``words``, ``golden-entity-mentions`` and
  ``golden-event-mentions``;
* ``image_multimedia_event.json`` / ``image_only_event.json``: image id to
  ``{"event_type": ..., "role": {role: [[label, x0, y0, x1, y1], ...]}}``;
* ``crossmedia_coref.txt``: tab-separated ``sentence_id, image_id, event_type``
  lines aligning textual and visual events into multimedia events.

Sentence and image ids start with their document id, separated from the
running index by the last underscore.
"""

import json
import logging
from collections import defaultdict
from pathlib import Path
from typing import Any

from pyeventfill.config import Modality
from pyeventfill.corpus.records import (
    BoundingBox,
    CandidateBox,
    CandidateSpan,
    EventInstance,
    GoldArgument,
    ImageRef,
    MultimediaDocument,
    Span,
)
from pyeventfill.exceptions import DataError, IngestionError

logger = logging.getLogger(__name__)

TEXT_FILES = ("text_multimedia_event.json", "text_only_event.json")
IMAGE_FILES = ("image_multimedia_event.json", "image_only_event.json")
COREF_FILE = "crossmedia_coref.txt"
ONTOLOGY_NAME = "m2e2"


def document_id(item_id: str) -> str:
    """Document id of a sentence or image id.

    Example:
        >>> document_id("VOA_EN_NW_2017.04.03.3793935_9")
        'VOA_EN_NW_2017.04.03.3793935'
    """
    stem = item_id.rsplit(".", 1)[0] if item_id.endswith((".jpg", ".png", ".jpeg")) else item_id
    return stem.rsplit("_", 1)[0]


def _read_json(path: Path) -> Any:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise IngestionError(f"Cannot parse M2E2 file ({exc})", path) from exc


class _DocumentBuilder:
    def __init__(self, doc_id: str) -> None:
        self.doc_id = doc_id
        self.sentences: dict[str, tuple[str, ...]] = {}
        self.images: dict[str, ImageRef] = {}
        self.entities: dict[str, tuple[CandidateSpan, ...]] = {}
        self.objects: dict[str, tuple[CandidateBox, ...]] = {}
        self.text_events: list[EventInstance] = []
        self.image_events: list[EventInstance] = []
        self.pairs: list[tuple[str, str]] = []

    def build(self) -> MultimediaDocument:
        paired_text = {text_id: f"{text_id}|{image_id}" for text_id, image_id in self.pairs}
        paired_image = {image_id: f"{text_id}|{image_id}" for text_id, image_id in self.pairs}
        return MultimediaDocument(
            doc_id=self.doc_id,
            sentences=self.sentences,
            images=self.images,
            entities=self.entities,
            objects=self.objects,
            text_events=tuple(
                e.model_copy(update={"multimedia_id": paired_text.get(e.instance_id)})
                for e in self.text_events
            ),
            image_events=tuple(
                e.model_copy(update={"multimedia_id": paired_image.get(e.instance_id)})
                for e in self.image_events
            ),
            multimedia_events=tuple(self.pairs),
        )


def _add_sentence(builder: _DocumentBuilder, record: dict[str, Any]) -> None:
    sentence_id = record["sentence_id"]
    words = tuple(record["words"])
    builder.sentences[sentence_id] = words
    entities = tuple(
        CandidateSpan(
            span=Span(start=m["start"], end=m["end"]),
            label=m.get("entity_type"),
        )
        for m in record.get("golden-entity-mentions", [])
    )
    builder.entities[sentence_id] = entities
    for index, mention in enumerate(record.get("golden-event-mentions", [])):
        trigger = mention["trigger"]
        builder.text_events.append(
            EventInstance(
                instance_id=f"{sentence_id}:e{index}",
                doc_id=builder.doc_id,
                modality=Modality.TEXT,
                event_type=mention["event_type"],
                ontology=ONTOLOGY_NAME,
                source="m2e2",
                sentence_id=sentence_id,
                words=words,
                trigger=Span(start=trigger["start"], end=trigger["end"]),
                entity_candidates=entities,
                gold_entities=entities,
                arguments=tuple(
                    GoldArgument(role=a["role"], span=Span(start=a["start"], end=a["end"]))
                    for a in mention.get("arguments", [])
                ),
            )
        )


def _add_image(builder: _DocumentBuilder, image_id: str, record: dict[str, Any]) -> None:
    ref = ImageRef(image_id=image_id, path=Path("image") / image_id)
    builder.images[image_id] = ref
    arguments: list[GoldArgument] = []
    for role, boxes in record.get("role", {}).items():
        for box in boxes:
            x_min, y_min, x_max, y_max = (float(v) for v in box[-4:])
            arguments.append(
                GoldArgument(
                    role=role,
                    bbox=BoundingBox(x_min=x_min, y_min=y_min, x_max=x_max, y_max=y_max),
                )
            )
    gold_boxes = tuple(dict.fromkeys(CandidateBox(bbox=a.bbox) for a in arguments if a.bbox))
    builder.objects[image_id] = gold_boxes
    builder.image_events.append(
        EventInstance(
            instance_id=image_id,
            doc_id=builder.doc_id,
            modality=Modality.IMAGE,
            event_type=record["event_type"],
            ontology=ONTOLOGY_NAME,
            source="m2e2",
            image=ref,
            gold_objects=gold_boxes,
            arguments=tuple(arguments),
        )
    )


def load_m2e2(path: Path | str) -> list[MultimediaDocument]:
    """Load an M2E2-layout corpus directory.

    Args:
        path: Directory holding the benchmark JSON files.

    Returns:
        Documents sorted by id, each checked for referential integrity.

    Raises:
        DataError: If the directory holds no benchmark files, or a record
            references a missing sentence, image or event.
        IngestionError: If a file cannot be parsed.
    """
    root = Path(path)
    present = [name for name in (*TEXT_FILES, *IMAGE_FILES) if (root / name).is_file()]
    if not present:
        raise DataError(f"No M2E2 event files found in {root}")

    builders: dict[str, _DocumentBuilder] = {}

    def builder_for(item_id: str) -> _DocumentBuilder:
        doc_id = document_id(item_id)
        return builders.setdefault(doc_id, _DocumentBuilder(doc_id))

    for name in TEXT_FILES:
        if (root / name).is_file():
            for record in _read_json(root / name):
                try:
                    _add_sentence(builder_for(record["sentence_id"]), record)
                except (KeyError, TypeError, ValueError) as exc:
                    raise DataError(
                        f"Malformed sentence record {record.get('sentence_id', '?')} in {name}: "
                        f"{exc}"
                    ) from exc
    for name in IMAGE_FILES:
        if (root / name).is_file():
            for image_id, record in _read_json(root / name).items():
                try:
                    _add_image(builder_for(image_id), image_id, record)
                except (KeyError, TypeError, ValueError) as exc:
                    raise DataError(f"Malformed image record {image_id} in {name}: {exc}") from exc

    coref = root / COREF_FILE
    if coref.is_file():
        for line_no, line in enumerate(coref.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            cells = [cell.strip() for cell in line.split("\t")]
            if len(cells) < 3:
                raise DataError(f"{COREF_FILE} line {line_no} needs three tab-separated fields")
            sentence_id, image_id, event_type = cells[:3]
            builder = builders.get(document_id(sentence_id))
            text_event = next(
                (
                    e
                    for e in (builder.text_events if builder else [])
                    if e.sentence_id == sentence_id and e.event_type == event_type
                ),
                None,
            )
            if builder is None or text_event is None or image_id not in builder.images:
                raise DataError(
                    f"{COREF_FILE} line {line_no} references a missing event: "
                    f"{sentence_id} / {image_id} / {event_type}"
                )
            builder.pairs.append((text_event.instance_id, image_id))

    documents = [builders[doc_id].build() for doc_id in sorted(builders)]
    for document in documents:
        document.validate_integrity()
    stats = corpus_statistics(documents)
    logger.info("Loaded M2E2 corpus from %s: %s", root, stats)
    return documents


def corpus_statistics(documents: list[MultimediaDocument]) -> dict[str, int]:
    """Document, sentence, image and event counts."""
    return {
        "documents": len(documents),
        "sentences": sum(len(d.sentences) for d in documents),
        "images": sum(len(d.images) for d in documents),
        "text_events": sum(len(d.text_events) for d in documents),
        "image_events": sum(len(d.image_events) for d in documents),
        "multimedia_events": sum(len(d.multimedia_events) for d in documents),
    }


def documents_to_instances(documents: list[MultimediaDocument]) -> list[EventInstance]:
    """Flatten documents into their gold event instances, text first."""
    by_kind: dict[Modality, list[EventInstance]] = defaultdict(list)
    for document in documents:
        by_kind[Modality.TEXT].extend(document.text_events)
        by_kind[Modality.IMAGE].extend(document.image_events)
    return by_kind[Modality.TEXT] + by_kind[Modality.IMAGE]
