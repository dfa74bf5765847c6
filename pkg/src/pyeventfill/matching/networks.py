"""Mapping networks and role prototypes.

Candidates and role queries come out of different backends with different
widths. A mapping network projects each of them into the shared matching space
of width H, where a dot product compares them.
"""

from collections.abc import Sequence

import torch
from torch import nn

from pyeventfill.config import get_config
from pyeventfill.exceptions import OntologyError, ShapeError


class MappingNetwork(nn.Module):
    """Two affine layers with a ReLU and dropout in between.

    Args:
        input_width: Width of the incoming features.
        output_width: Matching space width H.
        hidden_factor: Hidden units per output unit; defaults to the global
            ``mapping_hidden_factor`` (4).
        dropout: Dropout probability; defaults to the global
            ``mapping_dropout`` (0.4). Inactive in eval mode.

    Example:
        >>> net = MappingNetwork(input_width=128, output_width=64).eval()
        >>> net(torch.zeros(3, 128)).shape
        torch.Size([3, 64])
    """

    def __init__(
        self,
        input_width: int,
        output_width: int,
        hidden_factor: int | None = None,
        dropout: float | None = None,
    ) -> None:
        super().__init__()
        config = get_config()
        factor = hidden_factor if hidden_factor is not None else config.mapping_hidden_factor
        rate = dropout if dropout is not None else config.mapping_dropout
        self.input_width = input_width
        self.output_width = output_width
        self.layers = nn.Sequential(
            nn.Linear(input_width, factor * output_width),
            nn.ReLU(),
            nn.Dropout(rate),
            nn.Linear(factor * output_width, output_width),
        )

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        if features.shape[-1] != self.input_width:
            raise ShapeError(
                f"Mapping network expects width {self.input_width}, got {features.shape[-1]}"
            )
        mapped: torch.Tensor = self.layers(features)
        return mapped


class PrototypeBank(nn.Module):
    """One trainable vector per argument role of an ontology.

    Replaces prompt-decoded queries in the prompt-free ablation; the same role
    name gets the same prototype in every event type.
    """

    def __init__(self, roles: Sequence[str], width: int) -> None:
        super().__init__()
        self.roles = tuple(sorted(set(roles)))
        self._index = {role: i for i, role in enumerate(self.roles)}
        self.vectors = nn.Parameter(torch.randn(len(self.roles), width) * width**-0.5)

    def queries(self, roles: Sequence[str]) -> torch.Tensor:
        """``len(roles) x H`` prototypes in the given order.

        Raises:
            OntologyError: If a role has no prototype.
        """
        missing = [role for role in roles if role not in self._index]
        if missing:
            raise OntologyError(f"No prototype for roles {missing}")
        return self.vectors[[self._index[role] for role in roles]]
