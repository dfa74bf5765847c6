"""Encoder interfaces and the tensors they exchange.

Three kinds of backend are involved in filling a template:

* a text encoder turning a tokenized sentence into token embeddings,
* a vision encoder turning an image into patch embeddings and a CLS vector,
* a query model decoding a rendered prompt while cross-attending to either.

Widths may differ between backends; the query model projects each context's
memory to its own width, and mapping networks later align everything to H.
"""

from abc import ABC, abstractmethod
from collections.abc import Sequence
from typing import Self

import torch
from pydantic import BaseModel, ConfigDict, Field, model_validator
from torch import nn

from pyeventfill.config import BackendFamily, Modality
from pyeventfill.exceptions import BoundsError, ConfigurationError
from pyeventfill.ontology.templates import PromptRendering


class ImageGrid(BaseModel, frozen=True):
    """Patch geometry of an encoded image.

    The encoder resizes the original image to ``cols*patch_size`` by
    ``rows*patch_size`` pixels before cutting it into patches.

    Attributes:
        rows: Patch rows.
        cols: Patch columns.
        patch_size: Patch side in resized pixels.
        image_width: Original image width in pixels.
        image_height: Original image height in pixels.
    """

    rows: int = Field(ge=1)
    cols: int = Field(ge=1)
    patch_size: int = Field(ge=1)
    image_width: int = Field(ge=1)
    image_height: int = Field(ge=1)

    @property
    def num_patches(self) -> int:
        """M = rows x cols."""
        return self.rows * self.cols

    @property
    def scale(self) -> tuple[float, float]:
        """Horizontal and vertical factors from original to resized pixels."""
        return (
            self.cols * self.patch_size / self.image_width,
            self.rows * self.patch_size / self.image_height,
        )


class TextContext(BaseModel):
    """An encoded sentence.

    Attributes:
        words: The input words.
        tokens: Subword ids, N of them.
        token_embeddings: N x H tensor.
        subword_alignment: Per word, its ``[start, end)`` subword range.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    words: tuple[str, ...]
    tokens: tuple[int, ...]
    token_embeddings: torch.Tensor
    subword_alignment: tuple[tuple[int, int], ...]

    @model_validator(mode="after")
    def _check_alignment(self) -> Self:
        if not self.tokens or self.token_embeddings.shape[0] != len(self.tokens):
            raise ValueError("Token embeddings must have one row per token and N >= 1")
        if len(self.subword_alignment) != len(self.words):
            raise ValueError("Every word needs a subword range")
        previous_end = 0
        for start, end in self.subword_alignment:
            if not previous_end <= start < end <= len(self.tokens):
                raise ValueError("Subword ranges must be non-empty, ordered and disjoint")
            previous_end = end
        return self

    @property
    def hidden_size(self) -> int:
        """Embedding width."""
        return int(self.token_embeddings.shape[-1])

    def subword_range(self, word_span: tuple[int, int]) -> tuple[int, int]:
        """Map a ``[start, end)`` word span onto its subword range.

        Raises:
            BoundsError: If the span is empty or outside the sentence.
        """
        start, end = word_span
        if not 0 <= start < end <= len(self.words):
            raise BoundsError(
                f"Word span {word_span} outside sentence of {len(self.words)} words"
            )
        return self.subword_alignment[start][0], self.subword_alignment[end - 1][1]


class ImageContext(BaseModel):
    """An encoded image.

    Attributes:
        patch_embeddings: M x H tensor, row-major over the grid.
        cls_embedding: H tensor standing for the whole scene.
        grid: Patch geometry.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    patch_embeddings: torch.Tensor
    cls_embedding: torch.Tensor
    grid: ImageGrid

    @model_validator(mode="after")
    def _check_grid(self) -> Self:
        if self.patch_embeddings.shape[0] != self.grid.num_patches:
            raise ValueError(
                f"Got {self.patch_embeddings.shape[0]} patch embeddings for a "
                f"{self.grid.rows}x{self.grid.cols} grid"
            )
        if self.cls_embedding.shape != self.patch_embeddings.shape[1:]:
            raise ValueError("CLS embedding width must match patch embeddings")
        return self

    @property
    def hidden_size(self) -> int:
        """Embedding width."""
        return int(self.patch_embeddings.shape[-1])


class PromptEncoding(BaseModel):
    """Query model output for one prompt.

    Attributes:
        tokens: Prompt subword ids, L of them.
        features: L x H' tensor, one row per prompt subword.
        role_token_indices: Per role, the prompt subwords covering its span.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    tokens: tuple[int, ...]
    features: torch.Tensor
    role_token_indices: dict[str, tuple[int, ...]] = Field(default_factory=dict)


Context = TextContext | ImageContext


def context_modality(context: Context) -> Modality:
    """Modality a context was encoded from."""
    return Modality.TEXT if isinstance(context, TextContext) else Modality.IMAGE


def tokens_in_span(
    offsets: Sequence[tuple[int, int]],
    span: tuple[int, int],
) -> tuple[int, ...]:
    """Indices of tokens whose character offsets overlap ``[start, end)``."""
    start, end = span
    return tuple(
        index
        for index, (tok_start, tok_end) in enumerate(offsets)
        if tok_start < end and tok_end > start and tok_end > tok_start
    )


class TextEncoder(nn.Module, ABC):
    """Encodes tokenized sentences."""

    family: BackendFamily
    hidden_size: int
    max_length: int

    @abstractmethod
    def encode_text(self, words: Sequence[str]) -> TextContext:
        """Encode a sentence given as words.

        Raises:
            ValidationError: If the sentence is empty.
            SequenceTooLongError: If it exceeds ``max_length`` subwords.
        """

    @abstractmethod
    def describe(self) -> dict[str, str | int]:
        """Identity of the backend for run manifests."""


class VisionEncoder(nn.Module, ABC):
    """Encodes images into patch and CLS embeddings."""

    family: BackendFamily = BackendFamily.VISION
    hidden_size: int
    image_size: int
    patch_size: int

    @abstractmethod
    def encode_image(self, image: torch.Tensor) -> ImageContext:
        """Encode a ``C x H x W`` image (uint8, or float in [0, 1])."""

    @abstractmethod
    def describe(self) -> dict[str, str | int]:
        """Identity of the backend for run manifests."""


class QueryModel(nn.Module, ABC):
    """Decodes rendered prompts into per-subword features.

    Context memories are projected to the query width by one adapter per
    modality, registered with ``attach_memory``.
    """

    family: BackendFamily
    hidden_size: int

    def __init__(self) -> None:
        super().__init__()
        self.memory_projections = nn.ModuleDict()

    @property
    @abstractmethod
    def cross_attention_supported(self) -> bool:
        """Whether the model can attend to a context."""

    def attach_memory(self, modality: Modality, width: int) -> None:
        """Register the context width of a modality."""
        if width == self.hidden_size:
            self.memory_projections[modality.value] = nn.Identity()
        else:
            self.memory_projections[modality.value] = nn.Linear(width, self.hidden_size)

    def memory(self, context: Context | None) -> torch.Tensor | None:
        """Project a context to the query width, CLS first for images.

        Raises:
            ConfigurationError: If the model cannot attend to contexts, or the
                context's modality was never attached.
        """
        if context is None:
            return None
        if not self.cross_attention_supported:
            raise ConfigurationError(
                f"{type(self).__name__} ({self.family}) has no cross-attention; "
                "enable it on the query backend or decode without context"
            )
        modality = context_modality(context)
        if modality.value not in self.memory_projections:
            raise ConfigurationError(f"Query model has no memory adapter for {modality} contexts")
        if isinstance(context, TextContext):
            states = context.token_embeddings
        else:
            states = torch.cat([context.cls_embedding[None], context.patch_embeddings], dim=0)
        projected: torch.Tensor = self.memory_projections[modality.value](states)
        return projected

    @abstractmethod
    def decode_queries(
        self,
        prompt: PromptRendering,
        context: Context | None,
    ) -> PromptEncoding:
        """Decode a prompt, cross-attending to the context when one is given.

        Returns one feature row per prompt subword. Passing ``None`` decodes
        without any context.
        """

    @abstractmethod
    def describe(self) -> dict[str, str | int]:
        """Identity of the backend for run manifests."""
