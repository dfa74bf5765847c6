"""Build encoder backends from configuration."""

import logging
from typing import NamedTuple

from pyeventfill.config import BackendConfig, BackendFamily, Modality, ModelConfig
from pyeventfill.encoding.base import QueryModel, TextEncoder, VisionEncoder
from pyeventfill.encoding.synthetic import (
    SyntheticQueryModel,
    SyntheticTextEncoder,
    SyntheticVisionEncoder,
)
from pyeventfill.exceptions import ConfigurationError

logger = logging.getLogger(__name__)


def build_text_encoder(config: BackendConfig) -> TextEncoder:
    """Instantiate the text encoder described by ``config``.

    Raises:
        ConfigurationError: If the backend is not a text backend, or a
            pretrained backend is requested without ``transformers``.
    """
    if config.family is BackendFamily.VISION:
        raise ConfigurationError(f"Text backend '{config.name}' is configured as a vision model")
    if config.is_synthetic:
        encoder = SyntheticTextEncoder(
            hidden_size=config.hidden_size,
            max_length=config.max_length,
            subword_chars=config.subword_chars,
            seed=config.seed,
        )
        encoder.family = config.family
        return encoder

    from pyeventfill.encoding.pretrained import PretrainedTextEncoder

    return PretrainedTextEncoder(
        config.name, config.family, max_length=config.max_length, weights_path=config.weights_path
    )


def build_vision_encoder(config: BackendConfig) -> VisionEncoder:
    """Instantiate the vision encoder described by ``config``."""
    if config.family is not BackendFamily.VISION:
        raise ConfigurationError(f"Vision backend '{config.name}' must have family 'vision'")
    if config.is_synthetic:
        return SyntheticVisionEncoder(
            hidden_size=config.hidden_size,
            image_size=config.image_size,
            patch_size=config.patch_size,
            seed=config.seed,
        )

    from pyeventfill.encoding.pretrained import PretrainedVisionEncoder

    return PretrainedVisionEncoder(config.name, weights_path=config.weights_path)


def build_query_model(config: BackendConfig) -> QueryModel:
    """Instantiate the query model described by ``config``.

    An ``encoder_only_text`` backend gets added cross-attention only when
    ``config.cross_attention`` is set.
    """
    if config.family is BackendFamily.VISION:
        raise ConfigurationError(f"Query backend '{config.name}' cannot be a vision model")
    if config.is_synthetic:
        return SyntheticQueryModel(
            family=config.family,
            hidden_size=config.hidden_size,
            subword_chars=config.subword_chars,
            num_heads=config.num_heads,
            cross_attention=config.cross_attention,
            seed=config.seed,
        )

    from pyeventfill.encoding.pretrained import PretrainedQueryModel

    return PretrainedQueryModel(
        config.name,
        config.family,
        cross_attention=config.cross_attention,
        weights_path=config.weights_path,
    )


class Backends(NamedTuple):
    """Encoders and query models of one model configuration.

    ``query_models`` is keyed ``joint`` for a shared query model, or by
    modality (``text``, ``image``) for modality-specific ones, and is empty
    when role prototypes replace prompts.
    """

    text_encoder: TextEncoder | None
    vision_encoder: VisionEncoder | None
    query_models: dict[str, QueryModel]


def build_backends(config: ModelConfig) -> Backends:
    """Instantiate every backend a model configuration names.

    Raises:
        ConfigurationError: If neither modality has an encoder, or a backend
            is misconfigured.
    """
    if config.text_backend is None and config.vision_backend is None:
        raise ConfigurationError("A model needs a text backend, a vision backend or both")
    text_encoder = build_text_encoder(config.text_backend) if config.text_backend else None
    vision_encoder = build_vision_encoder(config.vision_backend) if config.vision_backend else None

    query_models: dict[str, QueryModel] = {}
    ablations = config.ablations
    if ablations.joint_prompts and not ablations.use_prototypes:
        query_models["joint"] = build_query_model(config.query_backend)
    elif not ablations.use_prototypes:
        for modality, encoder in ((Modality.TEXT, text_encoder), (Modality.IMAGE, vision_encoder)):
            if encoder is not None:
                query_models[modality.value] = build_query_model(config.query_backend)
    logger.info(
        "Built backends: text=%s vision=%s queries=%s",
        config.text_backend.name if config.text_backend else None,
        config.vision_backend.name if config.vision_backend else None,
        sorted(query_models) or "prototypes",
    )
    return Backends(text_encoder, vision_encoder, query_models)
