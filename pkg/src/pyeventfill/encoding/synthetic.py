"""Deterministic desk-scale backends.

The synthetic backend needs no downloaded weights. Every subword piece is
hashed with blake2b and the 64-bit digest seeds a numpy generator that draws
the piece's unit-norm embedding, so distinct pieces never share a vector.
Images are cut into patches and projected by a seeded random matrix, and the
query model is a single transformer block with self- and cross-attention.
Each encoder carries a trainable identity-initialised adapter so that training
and freezing act on real parameters.
"""

import hashlib
import logging
import re
from collections.abc import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from pyeventfill.config import BackendFamily
from pyeventfill.encoding.base import (
    Context,
    ImageContext,
    ImageGrid,
    PromptEncoding,
    QueryModel,
    TextContext,
    TextEncoder,
    VisionEncoder,
    tokens_in_span,
)
from pyeventfill.exceptions import (
    ConfigurationError,
    SequenceTooLongError,
    ShapeError,
    ValidationError,
)
from pyeventfill.ontology.templates import PromptRendering

logger = logging.getLogger(__name__)

_PIECE_PATTERN = re.compile(r"\w+|[^\w\s]")


class SyntheticTokenizer:
    """Splits text into fixed-width character pieces with hashed ids.

    Example:
        >>> tokenizer = SyntheticTokenizer(subword_chars=4)
        >>> tokenizer.pieces("extradition")
        ['extr', '##adit', '##ion']
    """

    def __init__(self, subword_chars: int = 4, seed: int = 0) -> None:
        self.subword_chars = subword_chars
        self.seed = seed

    def token_id(self, piece: str) -> int:
        """63-bit content hash of a piece."""
        digest = hashlib.blake2b(f"{self.seed}\x1f{piece}".encode(), digest_size=8).digest()
        return int.from_bytes(digest, "big") >> 1

    def _chunks(self, text: str) -> list[tuple[str, int, int]]:
        chunks: list[tuple[str, int, int]] = []
        for match in _PIECE_PATTERN.finditer(text):
            word = match.group()
            for offset in range(0, len(word), self.subword_chars):
                piece = word[offset : offset + self.subword_chars]
                start = match.start() + offset
                chunks.append((piece if offset == 0 else "##" + piece, start, start + len(piece)))
        return chunks

    def pieces(self, word: str) -> list[str]:
        """Subword pieces of one word."""
        return [piece for piece, _, _ in self._chunks(word)] or [word]

    def tokenize_words(self, words: Sequence[str]) -> tuple[list[int], list[tuple[int, int]]]:
        """Token ids and per-word ``[start, end)`` subword ranges."""
        ids: list[int] = []
        alignment: list[tuple[int, int]] = []
        for word in words:
            start = len(ids)
            ids.extend(self.token_id(piece) for piece in self.pieces(word))
            alignment.append((start, len(ids)))
        return ids, alignment

    def tokenize_text(self, text: str) -> tuple[list[int], list[tuple[int, int]]]:
        """Token ids and character offsets of free text."""
        chunks = self._chunks(text)
        return [self.token_id(piece) for piece, _, _ in chunks], [(s, e) for _, s, e in chunks]


class HashEmbedding:
    """Unit-norm embeddings drawn from a generator seeded by the token id."""

    def __init__(self, width: int) -> None:
        self.width = width
        self._cache: dict[int, np.ndarray] = {}

    def vector(self, token_id: int) -> np.ndarray:
        """Embedding of one token id."""
        cached = self._cache.get(token_id)
        if cached is None:
            draw = np.random.default_rng(token_id).standard_normal(self.width)
            cached = (draw / np.linalg.norm(draw)).astype(np.float32)
            self._cache[token_id] = cached
        return cached

    def lookup(self, token_ids: Sequence[int], like: torch.Tensor) -> torch.Tensor:
        """``len(token_ids) x width`` tensor on the device and dtype of ``like``."""
        rows = np.stack([self.vector(token_id) for token_id in token_ids])
        return torch.from_numpy(rows).to(device=like.device, dtype=like.dtype)


def _identity_linear(width: int) -> nn.Linear:
    layer = nn.Linear(width, width)
    with torch.no_grad():
        layer.weight.copy_(torch.eye(width))
        layer.bias.zero_()
    return layer


class SyntheticTextEncoder(TextEncoder):
    """Hash-embedding text encoder.

    Args:
        hidden_size: Embedding width H.
        max_length: Longest accepted sentence in subwords.
        subword_chars: Characters per subword piece.
        seed: Mixed into every token hash.
    """

    family = BackendFamily.ENCODER_DECODER_TEXT

    def __init__(
        self,
        hidden_size: int = 64,
        max_length: int = 128,
        subword_chars: int = 4,
        seed: int = 0,
    ) -> None:
        super().__init__()
        self.hidden_size = hidden_size
        self.max_length = max_length
        self.seed = seed
        self.tokenizer = SyntheticTokenizer(subword_chars, seed)
        self.embedding = HashEmbedding(hidden_size)
        self.adapter = _identity_linear(hidden_size)

    def encode_text(self, words: Sequence[str]) -> TextContext:
        if not words:
            raise ValidationError("Cannot encode an empty sentence")
        ids, alignment = self.tokenizer.tokenize_words(words)
        if len(ids) > self.max_length:
            raise SequenceTooLongError(len(ids), self.max_length)
        raw = self.embedding.lookup(ids, self.adapter.weight)
        return TextContext(
            words=tuple(words),
            tokens=tuple(ids),
            token_embeddings=self.adapter(raw),
            subword_alignment=tuple(alignment),
        )

    def describe(self) -> dict[str, str | int]:
        return {
            "name": "synthetic",
            "family": self.family.value,
            "hidden_size": self.hidden_size,
            "max_length": self.max_length,
            "seed": self.seed,
        }


class SyntheticVisionEncoder(VisionEncoder):
    """Random-projection patch encoder.

    Images are resized to ``image_size`` squared, split into
    ``patch_size`` squared patches and projected by a seeded matrix plus a
    seeded bias, so an all-zero image yields a constant embedding. The CLS
    vector is the normalised mean of the patch projections.
    """

    def __init__(
        self,
        hidden_size: int = 64,
        image_size: int = 224,
        patch_size: int = 16,
        seed: int = 0,
    ) -> None:
        super().__init__()
        if image_size % patch_size:
            raise ConfigurationError(
                f"Image size {image_size} is not a multiple of patch size {patch_size}"
            )
        self.hidden_size = hidden_size
        self.image_size = image_size
        self.patch_size = patch_size
        self.seed = seed
        patch_dim = 3 * patch_size * patch_size
        generator = torch.Generator().manual_seed(seed + 1)
        weight = torch.randn(patch_dim, hidden_size, generator=generator) / patch_dim**0.5
        self.register_buffer("patch_weight", weight)
        self.register_buffer("patch_bias", torch.randn(hidden_size, generator=generator))
        self.split = nn.Unfold(kernel_size=patch_size, stride=patch_size)
        self.adapter = _identity_linear(hidden_size)

    def encode_image(self, image: torch.Tensor) -> ImageContext:
        if image.dim() != 3 or image.shape[0] not in (1, 3):
            raise ShapeError(f"Expected a C x H x W image, got {tuple(image.shape)}")
        weight: torch.Tensor = self.patch_weight
        bias: torch.Tensor = self.patch_bias
        height, width = int(image.shape[1]), int(image.shape[2])
        pixels = image.to(weight.device)
        pixels = pixels.float() / 255.0 if pixels.dtype == torch.uint8 else pixels.float()
        if pixels.shape[0] == 1:
            pixels = pixels.expand(3, -1, -1)

        if (height, width) != (self.image_size, self.image_size):
            pixels = F.interpolate(
                pixels[None],
                size=(self.image_size, self.image_size),
                mode="bilinear",
                align_corners=False,
            )[0]
        patches = self.split(pixels[None])[0].T
        raw = F.normalize((patches - 0.5) @ weight + bias, dim=-1)
        side = self.image_size // self.patch_size
        return ImageContext(
            patch_embeddings=self.adapter(raw),
            cls_embedding=self.adapter(F.normalize(raw.mean(dim=0), dim=-1)),
            grid=ImageGrid(
                rows=side,
                cols=side,
                patch_size=self.patch_size,
                image_width=width,
                image_height=height,
            ),
        )

    def describe(self) -> dict[str, str | int]:
        return {
            "name": "synthetic",
            "family": self.family.value,
            "hidden_size": self.hidden_size,
            "image_size": self.image_size,
            "patch_size": self.patch_size,
            "seed": self.seed,
        }


class SyntheticQueryModel(QueryModel):
    """One transformer block decoding hashed prompt embeddings.

    The ``encoder_decoder_text`` variant uses causal self-attention and always
    has cross-attention, like a decoder. The ``encoder_only_text`` variant uses
    bidirectional self-attention and only cross-attends when the cross-attention
    adaptation is enabled.
    """

    def __init__(
        self,
        family: BackendFamily = BackendFamily.ENCODER_DECODER_TEXT,
        hidden_size: int = 64,
        subword_chars: int = 4,
        num_heads: int = 4,
        cross_attention: bool = True,
        seed: int = 0,
    ) -> None:
        super().__init__()
        if family is BackendFamily.VISION:
            raise ConfigurationError("A vision backend cannot serve as query model")
        if hidden_size % num_heads:
            raise ConfigurationError(
                f"Hidden size {hidden_size} not divisible by {num_heads} heads"
            )
        self.family = family
        self.hidden_size = hidden_size
        self.seed = seed
        self._cross_attention = family is BackendFamily.ENCODER_DECODER_TEXT or cross_attention
        self.tokenizer = SyntheticTokenizer(subword_chars, seed + 2)
        self.embedding = HashEmbedding(hidden_size)
        self.token_proj = _identity_linear(hidden_size)
        self.self_attention = nn.MultiheadAttention(hidden_size, num_heads, batch_first=True)
        self.norm_self = nn.LayerNorm(hidden_size)
        self.cross_attention: nn.MultiheadAttention | None = None
        self.norm_cross: nn.LayerNorm | None = None
        if self._cross_attention:
            self.cross_attention = nn.MultiheadAttention(hidden_size, num_heads, batch_first=True)
            self.norm_cross = nn.LayerNorm(hidden_size)
        self.ffn = nn.Sequential(
            nn.Linear(hidden_size, 2 * hidden_size),
            nn.ReLU(),
            nn.Linear(2 * hidden_size, hidden_size),
        )
        self.norm_ffn = nn.LayerNorm(hidden_size)

    @property
    def cross_attention_supported(self) -> bool:
        return self._cross_attention

    def decode_queries(self, prompt: PromptRendering, context: Context | None) -> PromptEncoding:
        ids, offsets = self.tokenizer.tokenize_text(prompt.text)
        if not ids:
            raise ValidationError(f"Prompt has no tokens: {prompt.text!r}")
        memory = self.memory(context)
        device = self.token_proj.weight.device
        states = self.token_proj(self.embedding.lookup(ids, self.token_proj.weight))[None]

        causal = None
        if self.family is BackendFamily.ENCODER_DECODER_TEXT:
            causal = torch.triu(
                torch.ones(len(ids), len(ids), dtype=torch.bool, device=device), diagonal=1
            )
        attended, _ = self.self_attention(
            states, states, states, attn_mask=causal, need_weights=False
        )
        states = self.norm_self(states + attended)

        if memory is not None and self.cross_attention is not None and self.norm_cross is not None:
            keys = memory[None]
            attended, _ = self.cross_attention(states, keys, keys, need_weights=False)
            states = self.norm_cross(states + attended)

        states = self.norm_ffn(states + self.ffn(states))
        return PromptEncoding(
            tokens=tuple(ids),
            features=states[0],
            role_token_indices={
                role: tokens_in_span(offsets, span) for role, span in prompt.role_spans.items()
            },
        )

    def describe(self) -> dict[str, str | int]:
        return {
            "name": "synthetic",
            "family": self.family.value,
            "hidden_size": self.hidden_size,
            "cross_attention": int(self._cross_attention),
            "seed": self.seed,
        }
