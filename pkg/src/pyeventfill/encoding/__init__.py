"""Text, vision and query encoders."""

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
    context_modality,
    tokens_in_span,
)
from pyeventfill.encoding.registry import (
    Backends,
    build_backends,
    build_query_model,
    build_text_encoder,
    build_vision_encoder,
)
from pyeventfill.encoding.synthetic import (
    SyntheticQueryModel,
    SyntheticTextEncoder,
    SyntheticTokenizer,
    SyntheticVisionEncoder,
)

__all__ = [
    # Interfaces
    "BackendFamily",
    "Context",
    "ImageContext",
    "ImageGrid",
    "PromptEncoding",
    "QueryModel",
    "TextContext",
    "TextEncoder",
    "VisionEncoder",
    "context_modality",
    "tokens_in_span",
    # Synthetic backend
    "SyntheticQueryModel",
    "SyntheticTextEncoder",
    "SyntheticTokenizer",
    "SyntheticVisionEncoder",
    # Factories
    "Backends",
    "build_backends",
    "build_query_model",
    "build_text_encoder",
    "build_vision_encoder",
]
