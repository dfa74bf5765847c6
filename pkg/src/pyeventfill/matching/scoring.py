"""Candidate-query matching scores, the training loss and role assignment.

A candidate ``c`` and a role query ``r`` living in the same H-dimensional space
are scored by ``phi(c, r) = sigmoid(h_c . q_r)``. Training minimises the binary
cross-entropy of these scores against the gold role labels, summed over roles
and averaged over candidates. At inference a candidate receives the role with
the highest score if it reaches the threshold tau, otherwise no role.
"""

from collections.abc import Sequence
from typing import Self

import torch
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict, model_validator

from pyeventfill.config import get_config
from pyeventfill.encoding.base import PromptEncoding
from pyeventfill.exceptions import ShapeError, ValidationError


def match_score(candidate: torch.Tensor, query: torch.Tensor) -> torch.Tensor:
    """Sigmoid of the dot product of a mapped candidate and a mapped query.

    Raises:
        ShapeError: If the vectors differ in width.

    Example:
        >>> float(match_score(torch.tensor([1.0, 0.0]), torch.tensor([0.0, 1.0])))
        0.5
    """
    if candidate.shape[-1] != query.shape[-1]:
        raise ShapeError(
            f"Candidate width {candidate.shape[-1]} does not match query width {query.shape[-1]}"
        )
    return torch.sigmoid((candidate * query).sum(dim=-1))


def matching_logits(candidates: torch.Tensor, queries: torch.Tensor) -> torch.Tensor:
    """``|C| x R`` dot products between mapped candidates and queries."""
    if candidates.shape[-1] != queries.shape[-1]:
        raise ShapeError(
            f"Candidate width {candidates.shape[-1]} does not match query width "
            f"{queries.shape[-1]}"
        )
    return candidates @ queries.T


def bce_loss(
    scores: torch.Tensor,
    labels: torch.Tensor,
    *,
    from_logits: bool = False,
) -> torch.Tensor:
    """Binary cross-entropy summed over roles and averaged over candidates.

    Both the positive and the negative term are used. Scores are moved to logit
    space and clamped to ``+/- logit_clamp`` so saturated scores stay finite.

    Args:
        scores: ``|C| x R`` matching scores in [0, 1], or logits when
            ``from_logits`` is set.
        labels: ``|C| x R`` tensor of zeros and ones.
        from_logits: Whether ``scores`` are logits.

    Returns:
        Scalar loss; zero for an empty candidate set.

    Raises:
        ShapeError: If the shapes differ.
        ValidationError: If a label is neither 0 nor 1.
    """
    if scores.shape != labels.shape:
        raise ShapeError(f"Scores {tuple(scores.shape)} and labels {tuple(labels.shape)} differ")
    if not torch.all((labels == 0) | (labels == 1)):
        raise ValidationError("Matching labels must be binary")
    if scores.numel() == 0:
        return scores.sum()

    config = get_config()
    logits = scores if from_logits else torch.logit(scores, eps=config.score_epsilon)
    logits = logits.clamp(-config.logit_clamp, config.logit_clamp)
    per_element = F.binary_cross_entropy_with_logits(
        logits, labels.to(logits.dtype), reduction="none"
    )
    return per_element.sum() / scores.shape[0]


def _check_threshold(threshold: float) -> None:
    if not 0 < threshold < 1:
        raise ValidationError(f"Threshold must lie in (0, 1), got {threshold}")


def assign_roles(
    row: Sequence[float] | torch.Tensor,
    threshold: float,
    roles: Sequence[str],
) -> str | None:
    """Role of one candidate, or None.

    The highest-scoring role wins if its score reaches ``threshold``; among
    equal scores the role listed first in the template wins.

    Args:
        row: The candidate's score per role, in template order.
        threshold: tau in (0, 1).
        roles: Template roles.

    Raises:
        ValidationError: If tau is outside (0, 1).
        ShapeError: If the row and the role list differ in length.

    Example:
        >>> assign_roles([0.7, 0.7], 0.5, ["Attacker", "Target"])
        'Attacker'
    """
    _check_threshold(threshold)
    if not roles:
        return None
    values = row.tolist() if isinstance(row, torch.Tensor) else list(row)
    if len(values) != len(roles):
        raise ShapeError(f"Got {len(values)} scores for {len(roles)} roles")
    best = max(range(len(values)), key=lambda i: (values[i], -i))
    return roles[best] if values[best] >= threshold else None


def pool_role_queries(encoding: PromptEncoding, roles: Sequence[str]) -> torch.Tensor:
    """Mean of the prompt subword features covering each role.

    Returns:
        ``len(roles) x H'`` tensor in the given role order.

    Raises:
        ValidationError: If a role has no subwords in the prompt.
    """
    if not roles:
        return encoding.features.new_zeros((0, encoding.features.shape[-1]))
    pooled: list[torch.Tensor] = []
    for role in roles:
        indices = encoding.role_token_indices.get(role, ())
        if not indices:
            raise ValidationError(f"Role '{role}' covers no prompt subwords")
        pooled.append(encoding.features[list(indices)].mean(dim=0))
    return torch.stack(pooled)


class QuerySet(BaseModel):
    """Mapped role queries of one event type.

    Attributes:
        event_type: Ontology label.
        role_order: Roles in template order.
        vectors: ``R x H`` query matrix.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    event_type: str
    role_order: tuple[str, ...]
    vectors: torch.Tensor

    @model_validator(mode="after")
    def _one_vector_per_role(self) -> Self:
        if self.vectors.dim() != 2 or self.vectors.shape[0] != len(self.role_order):
            raise ValueError(
                f"Expected {len(self.role_order)} query vectors, got shape "
                f"{tuple(self.vectors.shape)}"
            )
        return self


class MatchResult(BaseModel):
    """Scores and role assignments for the candidates of one event.

    Attributes:
        instance_id: Event the result belongs to.
        event_type: Ontology label.
        roles: Template roles, the score columns.
        scores: ``|C| x R`` matching scores in (0, 1).
        assignments: Per candidate, its role or None.
        threshold: tau used for the assignments.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    instance_id: str
    event_type: str
    roles: tuple[str, ...]
    scores: torch.Tensor
    assignments: tuple[str | None, ...]
    threshold: float

    @model_validator(mode="after")
    def _consistent(self) -> Self:
        if self.scores.shape != (len(self.assignments), len(self.roles)):
            raise ValueError(
                f"Scores {tuple(self.scores.shape)} do not fit {len(self.assignments)} "
                f"candidates and {len(self.roles)} roles"
            )
        return self

    @classmethod
    def from_scores(
        cls,
        instance_id: str,
        event_type: str,
        roles: Sequence[str],
        scores: torch.Tensor,
        threshold: float,
    ) -> "MatchResult":
        """Assign roles row by row."""
        _check_threshold(threshold)
        detached = scores.detach().to("cpu")
        return cls(
            instance_id=instance_id,
            event_type=event_type,
            roles=tuple(roles),
            scores=detached,
            assignments=tuple(assign_roles(row, threshold, roles) for row in detached),
            threshold=threshold,
        )

    def rethreshold(self, threshold: float) -> "MatchResult":
        """The same scores assigned with another tau."""
        return MatchResult.from_scores(
            self.instance_id, self.event_type, self.roles, self.scores, threshold
        )

    @property
    def prediction_count(self) -> int:
        """Candidates that received a role."""
        return sum(role is not None for role in self.assignments)

    def assigned_score(self, index: int) -> float | None:
        """Score of the role assigned to candidate ``index``."""
        role = self.assignments[index]
        if role is None:
            return None
        return float(self.scores[index, self.roles.index(role)])
