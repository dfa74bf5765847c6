"""Candidate-query matching: mapping networks, scores, loss and the model."""

from pyeventfill.matching.model import (
    COMPONENTS,
    TemplateFillingModel,
    build_model,
    candidate_labels,
)
from pyeventfill.matching.networks import MappingNetwork, PrototypeBank
from pyeventfill.matching.scoring import (
    MatchResult,
    QuerySet,
    assign_roles,
    bce_loss,
    match_score,
    matching_logits,
    pool_role_queries,
)

__all__ = [
    # Networks
    "MappingNetwork",
    "PrototypeBank",
    # Scoring
    "MatchResult",
    "QuerySet",
    "assign_roles",
    "bce_loss",
    "match_score",
    "matching_logits",
    "pool_role_queries",
    # Model
    "COMPONENTS",
    "TemplateFillingModel",
    "build_model",
    "candidate_labels",
]
