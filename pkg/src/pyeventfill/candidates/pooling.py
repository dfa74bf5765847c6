"""Candidate features from entity spans and object boxes.

A textual candidate is the mean of its entity subwords concatenated with the
mean of the trigger subwords. A visual candidate is the max over the patches
its box touches concatenated with the image CLS embedding, which stands in for
the trigger of a visual event. Mean and RoI-align pooling are available for
comparison.
"""

from collections.abc import Sequence
from typing import Protocol, Self, TypeVar

import torch
from pydantic import BaseModel, ConfigDict, model_validator
from torchvision.ops import roi_align

from pyeventfill.config import Modality, PoolingMode
from pyeventfill.encoding.base import ImageContext, ImageGrid, TextContext
from pyeventfill.exceptions import ValidationError

BBox = tuple[float, float, float, float]


class TriggerRef(BaseModel, frozen=True):
    """The anchor of an event mention.

    Attributes:
        modality: Text or image.
        event_type: Ontology label of the event.
        word_span: Trigger words for text events, None for image events.
    """

    modality: Modality
    event_type: str
    word_span: tuple[int, int] | None = None

    @model_validator(mode="after")
    def _span_matches_modality(self) -> Self:
        if self.modality is Modality.TEXT and self.word_span is None:
            raise ValueError("Text triggers need a word span")
        if self.modality is Modality.IMAGE and self.word_span is not None:
            raise ValueError("Image triggers are the whole scene and take no word span")
        return self


class EntityCandidate(BaseModel):
    """A textual candidate and its raw feature (width 2 x text width)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    word_span: tuple[int, int]
    subword_range: tuple[int, int]
    raw_feature: torch.Tensor


class ObjectCandidate(BaseModel):
    """A visual candidate and its raw feature (width 2 x vision width)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    bbox: BBox
    patch_indices: tuple[int, ...]
    raw_feature: torch.Tensor
    confidence: float | None = None


def pool_entity(
    context: TextContext,
    entity_span: tuple[int, int],
    trigger_span: tuple[int, int],
) -> torch.Tensor:
    """Mean-pool an entity and its trigger and concatenate them.

    Args:
        context: Encoded sentence.
        entity_span: ``[start, end)`` word indices of the entity.
        trigger_span: ``[start, end)`` word indices of the trigger.

    Returns:
        Tensor of width 2 x H_text.

    Raises:
        BoundsError: If either span is outside the sentence.
    """
    ent_start, ent_end = context.subword_range(entity_span)
    trig_start, trig_end = context.subword_range(trigger_span)
    embeddings = context.token_embeddings
    return torch.cat(
        [embeddings[ent_start:ent_end].mean(dim=0), embeddings[trig_start:trig_end].mean(dim=0)]
    )


def _check_bbox(grid: ImageGrid, bbox: BBox) -> None:
    x_min, y_min, x_max, y_max = bbox
    if not (x_min < x_max and y_min < y_max):
        raise ValidationError(f"Bounding box {bbox} has zero or negative area")
    if x_max <= 0 or y_max <= 0 or x_min >= grid.image_width or y_min >= grid.image_height:
        raise ValidationError(
            f"Bounding box {bbox} does not intersect the "
            f"{grid.image_width}x{grid.image_height} image"
        )


def bbox_to_patches(grid: ImageGrid, bbox: BBox) -> tuple[int, ...]:
    """Indices of the patches a box overlaps with positive area.

    The box is given in original image pixels and rescaled into the encoder's
    resized frame first. Indices are row-major.

    Raises:
        ValidationError: If the box has no area or misses the image.

    Example:
        >>> grid = ImageGrid(rows=14, cols=14, patch_size=16, image_width=224, image_height=224)
        >>> bbox_to_patches(grid, (8, 8, 40, 24))
        (0, 1, 2, 14, 15, 16)
    """
    _check_bbox(grid, bbox)
    scale_x, scale_y = grid.scale
    x_min, y_min, x_max, y_max = bbox
    x_min, x_max = x_min * scale_x, x_max * scale_x
    y_min, y_max = y_min * scale_y, y_max * scale_y
    size = grid.patch_size
    cols = [c for c in range(grid.cols) if c * size < x_max and (c + 1) * size > x_min]
    rows = [r for r in range(grid.rows) if r * size < y_max and (r + 1) * size > y_min]
    return tuple(r * grid.cols + c for r in rows for c in cols)


def pool_object(
    context: ImageContext,
    bbox: BBox,
    mode: PoolingMode = PoolingMode.MAX,
) -> torch.Tensor:
    """Pool the patches of an object box and concatenate the CLS embedding.

    Args:
        context: Encoded image.
        bbox: ``(x_min, y_min, x_max, y_max)`` in original pixels.
        mode: ``max`` (default), ``mean`` or ``roi`` (bilinear RoI align
            over the patch grid).

    Returns:
        Tensor of width 2 x H_vis.
    """
    grid = context.grid
    indices = bbox_to_patches(grid, bbox)
    match mode:
        case PoolingMode.MAX:
            pooled = context.patch_embeddings[list(indices)].max(dim=0).values
        case PoolingMode.MEAN:
            pooled = context.patch_embeddings[list(indices)].mean(dim=0)
        case PoolingMode.ROI:
            scale_x, scale_y = grid.scale
            feature_map = context.patch_embeddings.T.reshape(1, -1, grid.rows, grid.cols)
            box = torch.tensor(
                [[0.0, bbox[0] * scale_x, bbox[1] * scale_y, bbox[2] * scale_x, bbox[3] * scale_y]],
                dtype=feature_map.dtype,
                device=feature_map.device,
            )
            pooled = roi_align(
                feature_map, box, output_size=1, spatial_scale=1.0 / grid.patch_size, aligned=True
            ).flatten()
    return torch.cat([pooled, context.cls_embedding])


def build_entity_candidate(
    context: TextContext,
    entity_span: tuple[int, int],
    trigger_span: tuple[int, int],
) -> EntityCandidate:
    """Pool a textual candidate."""
    return EntityCandidate(
        word_span=entity_span,
        subword_range=context.subword_range(entity_span),
        raw_feature=pool_entity(context, entity_span, trigger_span),
    )


def build_object_candidate(
    context: ImageContext,
    bbox: BBox,
    mode: PoolingMode = PoolingMode.MAX,
    confidence: float | None = None,
) -> ObjectCandidate:
    """Pool a visual candidate."""
    return ObjectCandidate(
        bbox=bbox,
        patch_indices=bbox_to_patches(context.grid, bbox),
        raw_feature=pool_object(context, bbox, mode),
        confidence=confidence,
    )


class HasConfidence(Protocol):
    """Anything carrying an optional detector confidence."""

    @property
    def confidence(self) -> float | None: ...


CandidateT = TypeVar("CandidateT", bound=HasConfidence)


def filter_by_confidence(
    candidates: Sequence[CandidateT],
    floor: float | None,
) -> list[CandidateT]:
    """Drop candidates whose detector confidence is below ``floor``.

    Candidates without a confidence are kept. ``floor=None`` keeps everything.
    """
    if floor is None:
        return list(candidates)
    return [c for c in candidates if c.confidence is None or c.confidence >= floor]


def box_iou(first: BBox, second: BBox) -> float:
    """Intersection over union of two ``(x_min, y_min, x_max, y_max)`` boxes.

    Example:
        >>> box_iou((0, 0, 2, 2), (1, 0, 3, 2))
        0.3333333333333333
    """
    width = min(first[2], second[2]) - max(first[0], second[0])
    height = min(first[3], second[3]) - max(first[1], second[1])
    if width <= 0 or height <= 0:
        return 0.0
    intersection = width * height
    area_first = (first[2] - first[0]) * (first[3] - first[1])
    area_second = (second[2] - second[0]) * (second[3] - second[1])
    union = area_first + area_second - intersection
    return intersection / union if union > 0 else 0.0
