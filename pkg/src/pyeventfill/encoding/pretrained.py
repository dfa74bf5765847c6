"""Pretrained Hugging Face backends.

Needs the ``pretrained`` extra (``pip install pyeventfill[pretrained]``).
``transformers`` is imported lazily so the rest of the package works without
it.

Text: T5 and BART (encoder for the context, decoder as query model) and BERT
(one encoder for the context, a second BERT with added cross-attention as
query encoder). Vision: CLIP, ViT and Data2Vec vision encoders.
"""

import logging
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import torch
import torch.nn.functional as F

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


def _transformers() -> Any:
    try:
        import transformers
    except ImportError as exc:
        raise ConfigurationError(
            "Pretrained backends need the 'pretrained' extra: pip install pyeventfill[pretrained]"
        ) from exc
    return transformers


def _source(name: str, weights_path: Path | None) -> str:
    return str(weights_path) if weights_path is not None else name


def _is_t5(name: str) -> bool:
    return "t5" in name.lower()


def _is_bart(name: str) -> bool:
    return "bart" in name.lower()


def _self_attention_mask(attention_mask: torch.Tensor) -> torch.Tensor:
    """Expand a ``batch x L`` padding mask to ``batch x L x L``.

    Hugging Face models use a 3D mask as given, so a BERT built with
    ``is_decoder=True`` keeps bidirectional self-attention instead of the
    causal mask it derives from a 2D one.
    """
    length = attention_mask.shape[-1]
    return attention_mask[:, None, :].expand(-1, length, -1).contiguous()


class PretrainedTextEncoder(TextEncoder):
    """Context encoder of a T5, BART or BERT checkpoint."""

    def __init__(
        self,
        name: str,
        family: BackendFamily,
        max_length: int = 512,
        weights_path: Path | None = None,
    ) -> None:
        super().__init__()
        hf = _transformers()
        source = _source(name, weights_path)
        self.name = name
        self.family = family
        self.tokenizer: Any = hf.AutoTokenizer.from_pretrained(source, use_fast=True)
        if _is_t5(name):
            self.model: Any = hf.T5EncoderModel.from_pretrained(source)
        elif _is_bart(name):
            self.model = hf.BartModel.from_pretrained(source).get_encoder()
        else:
            self.model = hf.AutoModel.from_pretrained(source)
        config = self.model.config
        self.hidden_size = int(getattr(config, "hidden_size", None) or config.d_model)
        self.max_length = min(max_length, int(self.tokenizer.model_max_length))
        logger.info("Loaded text encoder %s (H=%d)", name, self.hidden_size)

    def encode_text(self, words: Sequence[str]) -> TextContext:
        if not words:
            raise ValidationError("Cannot encode an empty sentence")
        batch = self.tokenizer(list(words), is_split_into_words=True, return_tensors="pt")
        length = int(batch["input_ids"].shape[1])
        if length > self.max_length:
            raise SequenceTooLongError(length, self.max_length)
        device = next(self.model.parameters()).device
        outputs = self.model(
            input_ids=batch["input_ids"].to(device),
            attention_mask=batch["attention_mask"].to(device),
        )
        word_ids = batch.word_ids(0)
        alignment: list[tuple[int, int]] = []
        for word_index in range(len(words)):
            positions = [pos for pos, wid in enumerate(word_ids) if wid == word_index]
            if not positions:
                raise ValidationError(f"Word {words[word_index]!r} produced no subwords")
            alignment.append((positions[0], positions[-1] + 1))
        return TextContext(
            words=tuple(words),
            tokens=tuple(int(t) for t in batch["input_ids"][0]),
            token_embeddings=outputs.last_hidden_state[0],
            subword_alignment=tuple(alignment),
        )

    def describe(self) -> dict[str, str | int]:
        return {
            "name": self.name,
            "family": self.family.value,
            "hidden_size": self.hidden_size,
            "max_length": self.max_length,
        }


class PretrainedQueryModel(QueryModel):
    """Decoder (T5, BART) or cross-attending encoder (BERT) over prompts.

    BERT gains cross-attention layers by loading it with
    ``add_cross_attention=True``; the new layers start untrained. Transformers
    only runs them in decoder mode, so the prompt goes in with a full 3D
    self-attention mask and every prompt token still sees the whole prompt.
    """

    def __init__(
        self,
        name: str,
        family: BackendFamily,
        cross_attention: bool = True,
        weights_path: Path | None = None,
    ) -> None:
        super().__init__()
        hf = _transformers()
        source = _source(name, weights_path)
        self.name = name
        self.family = family
        self.tokenizer: Any = hf.AutoTokenizer.from_pretrained(source, use_fast=True)
        self._bidirectional = False
        match family:
            case BackendFamily.ENCODER_DECODER_TEXT:
                self._cross_attention = True
                if _is_t5(name):
                    self.decoder: Any = hf.T5ForConditionalGeneration.from_pretrained(
                        source
                    ).get_decoder()
                else:
                    self.decoder = hf.BartModel.from_pretrained(source).get_decoder()
            case BackendFamily.ENCODER_ONLY_TEXT:
                self._cross_attention = cross_attention
                if cross_attention:
                    self._bidirectional = True
                    self.decoder = hf.AutoModel.from_pretrained(
                        source, is_decoder=True, add_cross_attention=True
                    )
                else:
                    self.decoder = hf.AutoModel.from_pretrained(source)
            case _:
                raise ConfigurationError(f"{name} cannot serve as query model ({family})")
        config = self.decoder.config
        self.hidden_size = int(getattr(config, "hidden_size", None) or config.d_model)
        logger.info("Loaded query model %s (H'=%d)", name, self.hidden_size)

    @property
    def cross_attention_supported(self) -> bool:
        return self._cross_attention

    def decode_queries(self, prompt: PromptRendering, context: Context | None) -> PromptEncoding:
        batch = self.tokenizer(prompt.text, return_offsets_mapping=True, return_tensors="pt")
        offsets = [(int(s), int(e)) for s, e in batch["offset_mapping"][0].tolist()]
        memory = self.memory(context)
        device = next(self.decoder.parameters()).device
        attention_mask = batch["attention_mask"].to(device)
        if self._bidirectional:
            attention_mask = _self_attention_mask(attention_mask)
        kwargs: dict[str, Any] = {
            "input_ids": batch["input_ids"].to(device),
            "attention_mask": attention_mask,
        }
        if memory is not None:
            kwargs["encoder_hidden_states"] = memory[None]
        outputs = self.decoder(**kwargs)
        return PromptEncoding(
            tokens=tuple(int(t) for t in batch["input_ids"][0]),
            features=outputs.last_hidden_state[0],
            role_token_indices={
                role: tokens_in_span(offsets, span) for role, span in prompt.role_spans.items()
            },
        )

    def describe(self) -> dict[str, str | int]:
        return {
            "name": self.name,
            "family": self.family.value,
            "hidden_size": self.hidden_size,
            "cross_attention": int(self._cross_attention),
        }


class PretrainedVisionEncoder(VisionEncoder):
    """CLIP, ViT or Data2Vec vision transformer.

    Images are resized to the model's square input resolution and normalised
    with the image processor's mean and standard deviation.
    """

    def __init__(self, name: str, weights_path: Path | None = None) -> None:
        super().__init__()
        hf = _transformers()
        source = _source(name, weights_path)
        self.name = name
        if "clip" in name.lower():
            self.model: Any = hf.CLIPVisionModel.from_pretrained(source)
        else:
            self.model = hf.AutoModel.from_pretrained(source)
        processor = hf.AutoImageProcessor.from_pretrained(source)
        config = self.model.config
        self.hidden_size = int(config.hidden_size)
        self.image_size = int(config.image_size)
        self.patch_size = int(config.patch_size)
        self.register_buffer("pixel_mean", torch.tensor(processor.image_mean).view(3, 1, 1))
        self.register_buffer("pixel_std", torch.tensor(processor.image_std).view(3, 1, 1))
        logger.info(
            "Loaded vision encoder %s (H=%d, %dpx, patch %d)",
            name,
            self.hidden_size,
            self.image_size,
            self.patch_size,
        )

    def encode_image(self, image: torch.Tensor) -> ImageContext:
        if image.dim() != 3 or image.shape[0] not in (1, 3):
            raise ShapeError(f"Expected a C x H x W image, got {tuple(image.shape)}")
        mean: torch.Tensor = self.pixel_mean
        std: torch.Tensor = self.pixel_std
        height, width = int(image.shape[1]), int(image.shape[2])
        pixels = image.to(mean.device)
        pixels = pixels.float() / 255.0 if pixels.dtype == torch.uint8 else pixels.float()
        if pixels.shape[0] == 1:
            pixels = pixels.expand(3, -1, -1)
        resized = F.interpolate(
            pixels[None],
            size=(self.image_size, self.image_size),
            mode="bicubic",
            align_corners=False,
        ).clamp(0.0, 1.0)
        hidden = self.model(pixel_values=(resized - mean) / std).last_hidden_state[0]
        side = self.image_size // self.patch_size
        return ImageContext(
            patch_embeddings=hidden[1 : 1 + side * side],
            cls_embedding=hidden[0],
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
            "name": self.name,
            "family": self.family.value,
            "hidden_size": self.hidden_size,
            "image_size": self.image_size,
            "patch_size": self.patch_size,
        }
