"""Candidate feature pooling for entity spans and object boxes."""

from pyeventfill.candidates.pooling import (
    BBox,
    EntityCandidate,
    ObjectCandidate,
    TriggerRef,
    bbox_to_patches,
    box_iou,
    build_entity_candidate,
    build_object_candidate,
    filter_by_confidence,
    pool_entity,
    pool_object,
)
from pyeventfill.config import PoolingMode

__all__ = [
    "BBox",
    "EntityCandidate",
    "ObjectCandidate",
    "PoolingMode",
    "TriggerRef",
    "bbox_to_patches",
    "box_iou",
    "build_entity_candidate",
    "build_object_candidate",
    "filter_by_confidence",
    "pool_entity",
    "pool_object",
]
