"""Detector and entity-recognizer outputs.

The framework never runs detection itself; it ingests candidate files with one
JSON record per line, either an object box::

    {"image_id": "img1.jpg", "bbox": [12, 30, 140, 200], "label": "person", "confidence": 0.91}

or an entity span::

    {"sentence_id": "doc1_3", "span": [4, 6], "label": "PER", "confidence": 0.88}

``confidence`` is optional. The file name is recorded as provenance.
"""

import json
import logging
from pathlib import Path

from pydantic import BaseModel, Field

from pyeventfill.candidates.pooling import filter_by_confidence
from pyeventfill.config import Modality
from pyeventfill.corpus.records import BoundingBox, CandidateBox, CandidateSpan, EventInstance, Span
from pyeventfill.exceptions import IngestionError

logger = logging.getLogger(__name__)


class Detections(BaseModel, frozen=True):
    """Candidates keyed by the sentence or image they were found in."""

    provenance: str
    spans: dict[str, tuple[CandidateSpan, ...]] = Field(default_factory=dict)
    boxes: dict[str, tuple[CandidateBox, ...]] = Field(default_factory=dict)


def load_detections(path: Path | str) -> Detections:
    """Read a candidate file.

    Raises:
        IngestionError: If the file is unreadable or a record is malformed.
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IngestionError(f"Cannot read detections ({exc})", path) from exc

    spans: dict[str, list[CandidateSpan]] = {}
    boxes: dict[str, list[CandidateBox]] = {}
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            if "image_id" in record:
                x_min, y_min, x_max, y_max = record["bbox"]
                boxes.setdefault(record["image_id"], []).append(
                    CandidateBox(
                        bbox=BoundingBox(x_min=x_min, y_min=y_min, x_max=x_max, y_max=y_max),
                        label=record.get("label"),
                        confidence=record.get("confidence"),
                    )
                )
            else:
                start, end = record["span"]
                spans.setdefault(record["sentence_id"], []).append(
                    CandidateSpan(
                        span=Span(start=start, end=end),
                        head=record.get("head"),
                        label=record.get("label"),
                        confidence=record.get("confidence"),
                    )
                )
        except (ValueError, KeyError, TypeError) as exc:
            raise IngestionError(f"Invalid detection on line {line_no} ({exc})", path) from exc

    logger.info(
        "Loaded %d span and %d box candidates from %s",
        sum(len(v) for v in spans.values()),
        sum(len(v) for v in boxes.values()),
        path.name,
    )
    return Detections(
        provenance=path.name,
        spans={key: tuple(value) for key, value in spans.items()},
        boxes={key: tuple(value) for key, value in boxes.items()},
    )


def attach_detections(
    instances: list[EventInstance],
    detections: Detections,
    confidence_floor: float | None = None,
) -> list[EventInstance]:
    """Replace each instance's candidates with the detections for its sentence or image.

    Instances with no detections keep no candidates. Candidates below the
    confidence floor are dropped.
    """
    attached: list[EventInstance] = []
    for instance in instances:
        if instance.modality is Modality.TEXT:
            found = detections.spans.get(instance.sentence_id or "", ())
            kept_spans = tuple(
                c
                for c in filter_by_confidence(found, confidence_floor)
                if c.span.end <= len(instance.words)
            )
            update: dict[str, object] = {"entity_candidates": kept_spans}
        else:
            image_id = instance.image.image_id if instance.image is not None else ""
            found_boxes = detections.boxes.get(image_id, ())
            kept_boxes = tuple(filter_by_confidence(found_boxes, confidence_floor))
            update = {"object_candidates": kept_boxes}
        update["source"] = f"{instance.source}+{detections.provenance}"
        attached.append(instance.model_copy(update=update))
    return attached
