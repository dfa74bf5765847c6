"""The template filling model.

For one event mention the model

1. encodes the sentence or image,
2. pools one raw feature per argument candidate,
3. renders the event type's template as a prompt and decodes it with the
   query model, cross-attending to the encoded context,
4. pools one query per role from the prompt subwords,
5. maps candidates and queries into the matching space and scores every pair.

Prompts are rendered once per event type and cached. Under the prompt-free
ablation the queries are trainable role prototypes instead.
"""

import logging
from collections.abc import Iterator
from pathlib import Path

import torch
from torch import nn

from pyeventfill.candidates.pooling import box_iou, pool_entity, pool_object
from pyeventfill.config import Modality, ModelConfig, get_config
from pyeventfill.corpus.images import load_image
from pyeventfill.corpus.records import EventInstance
from pyeventfill.encoding.base import (
    Context,
    QueryModel,
    TextContext,
    TextEncoder,
    VisionEncoder,
)
from pyeventfill.encoding.registry import build_backends
from pyeventfill.exceptions import ConfigurationError
from pyeventfill.matching.networks import MappingNetwork, PrototypeBank
from pyeventfill.matching.scoring import MatchResult, QuerySet, matching_logits, pool_role_queries
from pyeventfill.ontology.ontology import Ontology
from pyeventfill.ontology.templates import PromptRendering, render_prompt
from pyeventfill.utils.reproducibility import module_fingerprint

logger = logging.getLogger(__name__)

COMPONENTS = (
    "text_encoder",
    "vision_encoder",
    "query_model",
    "image_query_model",
    "text_candidates",
    "image_candidates",
    "prototypes",
)


class TemplateFillingModel(nn.Module):
    """Scores argument candidates against template role queries.

    Args:
        config: Architecture and ablations.
        ontology: Ontology whose templates become prompts.
        text_encoder: Encoder for sentences, or None for an image-only model.
        vision_encoder: Encoder for images, or None for a text-only model.
        query_models: ``{"joint": model}`` or ``{"text": ..., "image": ...}``;
            empty when prototypes replace prompts.

    Raises:
        ConfigurationError: If the query path is missing, or a query model
            cannot cross-attend while cross-attention is requested.
    """

    def __init__(
        self,
        config: ModelConfig,
        ontology: Ontology,
        text_encoder: TextEncoder | None,
        vision_encoder: VisionEncoder | None,
        query_models: dict[str, QueryModel],
    ) -> None:
        super().__init__()
        self.config = config
        self.image_root: Path | None = None
        width = config.hidden_size
        ablations = config.ablations

        self.text_encoder = text_encoder
        self.vision_encoder = vision_encoder
        self.query_models = nn.ModuleDict(query_models)
        self.query_mappers = nn.ModuleDict(
            {
                key: MappingNetwork(model.hidden_size, width, dropout=config.dropout)
                for key, model in query_models.items()
            }
        )
        self.candidate_mappers = nn.ModuleDict()
        if text_encoder is not None:
            self.candidate_mappers[Modality.TEXT.value] = MappingNetwork(
                2 * text_encoder.hidden_size, width, dropout=config.dropout
            )
        if vision_encoder is not None:
            self.candidate_mappers[Modality.IMAGE.value] = MappingNetwork(
                2 * vision_encoder.hidden_size, width, dropout=config.dropout
            )

        self.prototypes: PrototypeBank | None = None
        if ablations.use_prototypes:
            self.prototypes = PrototypeBank(sorted(ontology.role_vocabulary), width)
        elif not query_models:
            raise ConfigurationError("No query model configured and prototypes are disabled")

        if not ablations.no_cross_attention:
            for modality in self.modalities:
                query_model = self._query_model(modality)
                if query_model is None:
                    continue
                if not query_model.cross_attention_supported:
                    raise ConfigurationError(
                        f"Query backend {query_model.describe()['name']} cannot cross-attend; "
                        "enable its cross_attention flag or set ablations.no_cross_attention"
                    )
                query_model.attach_memory(modality, self._encoder_width(modality))

        self.ontology = ontology
        self._prompts: dict[str, PromptRendering] = {}
        self.use_ontology(ontology)

    @property
    def modalities(self) -> tuple[Modality, ...]:
        """Modalities the model has an encoder for."""
        present = []
        if self.text_encoder is not None:
            present.append(Modality.TEXT)
        if self.vision_encoder is not None:
            present.append(Modality.IMAGE)
        return tuple(present)

    def _encoder_width(self, modality: Modality) -> int:
        encoder = self.text_encoder if modality is Modality.TEXT else self.vision_encoder
        if encoder is None:
            raise ConfigurationError(f"Model has no {modality} encoder")
        return encoder.hidden_size

    def _query_key(self, modality: Modality) -> str | None:
        if "joint" in self.query_models:
            return "joint"
        return modality.value if modality.value in self.query_models else None

    def _query_model(self, modality: Modality) -> QueryModel | None:
        key = self._query_key(modality)
        if key is None:
            return None
        model: QueryModel = self.query_models[key]
        return model

    def use_ontology(self, ontology: Ontology) -> None:
        """Switch the ontology whose templates are used as prompts.

        The trained weights are kept, which is how a model trained on one
        ontology is evaluated on another.

        Raises:
            ConfigurationError: If a template cannot be rendered with the
                configured prompt variant.
        """
        prompt = self.config.prompt
        self._prompts = {
            event_type.name: render_prompt(
                event_type.template,
                variant=prompt.variant,
                event_type_prefix_enabled=prompt.event_type_prefix,
                role_definitions=event_type.role_definitions,
                event_type=event_type.name,
            )
            for event_type in ontology.event_types
        }
        self.ontology = ontology
        logger.debug("Rendered %d prompts for ontology %s", len(self._prompts), ontology.name)

    def prompt_for(self, event_type: str) -> PromptRendering:
        """Cached prompt of an event type.

        Raises:
            OntologyError: If the event type is unknown.
        """
        if event_type not in self._prompts:
            self.ontology.get_event_type(event_type)
        return self._prompts[event_type]

    def encode_context(self, instance: EventInstance) -> Context:
        """Encode the sentence or image of an event mention.

        Raises:
            ConfigurationError: If the model has no encoder for the modality.
        """
        if instance.modality is Modality.TEXT:
            if self.text_encoder is None:
                raise ConfigurationError(
                    f"Event {instance.instance_id} is textual but the model has no text encoder"
                )
            return self.text_encoder.encode_text(instance.words)
        if self.vision_encoder is None:
            raise ConfigurationError(
                f"Event {instance.instance_id} is visual but the model has no vision encoder"
            )
        if instance.image is None:
            raise ConfigurationError(f"Visual event {instance.instance_id} has no image")
        return self.vision_encoder.encode_image(load_image(instance.image, self.image_root))

    def candidate_features(self, instance: EventInstance, context: Context) -> torch.Tensor:
        """``|C| x 2H_backend`` raw candidate features."""
        width = 2 * self._encoder_width(instance.modality)
        rows: list[torch.Tensor] = []
        if isinstance(context, TextContext):
            if instance.trigger is not None:
                trigger = instance.trigger.as_tuple()
                rows = [
                    pool_entity(context, c.span.as_tuple(), trigger)
                    for c in instance.entity_candidates
                ]
        else:
            rows = [
                pool_object(context, c.bbox.as_tuple(), self.config.pooling)
                for c in instance.object_candidates
            ]
        if not rows:
            return torch.zeros(0, width, device=self.device)
        return torch.stack(rows)

    def role_queries(self, instance: EventInstance, context: Context | None) -> QuerySet:
        """Mapped queries for the roles of an event's template.

        Raises:
            OntologyError: If the event type is not in the ontology.
        """
        event_type = self.ontology.get_event_type(instance.event_type)
        roles = event_type.roles
        if self.prototypes is not None:
            return QuerySet(
                event_type=event_type.name, role_order=roles, vectors=self.prototypes.queries(roles)
            )
        key = self._query_key(instance.modality)
        if key is None:
            raise ConfigurationError(f"No query model serves {instance.modality} events")
        query_model: QueryModel = self.query_models[key]
        memory_context = None if self.config.ablations.no_cross_attention else context
        encoding = query_model.decode_queries(self.prompt_for(event_type.name), memory_context)
        raw = pool_role_queries(encoding, roles)
        return QuerySet(
            event_type=event_type.name, role_order=roles, vectors=self.query_mappers[key](raw)
        )

    def score_event(self, instance: EventInstance) -> torch.Tensor:
        """Differentiable ``|C| x R`` matching logits of one event.

        Raises:
            OntologyError: If the event type has no template.
            ConfigurationError: If the modality has no encoder or query path.
        """
        roles = self.ontology.get_event_type(instance.event_type).roles
        if instance.candidate_count == 0:
            return torch.zeros(0, len(roles), device=self.device)
        context = self.encode_context(instance)
        features = self.candidate_features(instance, context)
        queries = self.role_queries(instance, context)
        mapped = self.candidate_mappers[instance.modality.value](features)
        return matching_logits(mapped, queries.vectors)

    def forward(self, instance: EventInstance) -> torch.Tensor:
        return self.score_event(instance)

    def forward_event(self, instance: EventInstance, threshold: float | None = None) -> MatchResult:
        """Score and assign roles to the candidates of one event in eval mode.

        Args:
            instance: Event mention with candidates.
            threshold: tau; defaults to the global threshold of the modality.
        """
        if threshold is None:
            config = get_config()
            threshold = (
                config.text_threshold
                if instance.modality is Modality.TEXT
                else config.visual_threshold
            )
        was_training = self.training
        self.eval()
        try:
            with torch.no_grad():
                scores = torch.sigmoid(self.score_event(instance).float())
        finally:
            self.train(was_training)
        roles = self.ontology.get_event_type(instance.event_type).roles
        return MatchResult.from_scores(
            instance.instance_id, instance.event_type, roles, scores, threshold
        )

    @property
    def device(self) -> torch.device:
        """Device of the model parameters."""
        return next(self.parameters()).device

    def component_modules(self) -> dict[str, list[nn.Module]]:
        """Named components, each a list of the modules that make it up.

        ``query_model`` is the joint query model (or the textual one when
        prompts are modality-specific) together with its mapping network;
        ``image_query_model`` is the visual one.
        """
        components: dict[str, list[nn.Module]] = {name: [] for name in COMPONENTS}
        if self.text_encoder is not None:
            components["text_encoder"].append(self.text_encoder)
        if self.vision_encoder is not None:
            components["vision_encoder"].append(self.vision_encoder)
        for key in self.query_models:
            name = "image_query_model" if key == Modality.IMAGE.value else "query_model"
            components[name] += [self.query_models[key], self.query_mappers[key]]
        for key in self.candidate_mappers:
            components[f"{key}_candidates"].append(self.candidate_mappers[key])
        if self.prototypes is not None:
            components["prototypes"].append(self.prototypes)
        return components

    def component_parameters(self, name: str) -> Iterator[nn.Parameter]:
        """Parameters of one named component.

        Raises:
            ConfigurationError: If the name is not a component.
        """
        if name not in COMPONENTS:
            raise ConfigurationError(f"Unknown component '{name}'; expected one of {COMPONENTS}")
        for module in self.component_modules()[name]:
            yield from module.parameters()

    def modality_components(self, modality: Modality) -> tuple[str, ...]:
        """Present components that serve one modality."""
        if modality is Modality.TEXT:
            names = ["text_encoder", "text_candidates", "query_model"]
        else:
            names = ["vision_encoder", "image_candidates"]
            names.append("query_model" if "joint" in self.query_models else "image_query_model")
        names.append("prototypes")
        present = self.component_modules()
        return tuple(name for name in names if present[name])

    def trainable_components(self) -> tuple[str, ...]:
        """Components with at least one parameter that requires gradients."""
        return tuple(
            name
            for name in COMPONENTS
            if any(p.requires_grad for p in self.component_parameters(name))
        )

    def set_trainable(self, names: tuple[str, ...] | list[str], trainable: bool) -> None:
        """Switch gradient tracking of whole components."""
        for name in names:
            for parameter in self.component_parameters(name):
                parameter.requires_grad_(trainable)

    def fingerprints(self) -> dict[str, str]:
        """Parameter fingerprint per present component."""
        fingerprints: dict[str, str] = {}
        for name, modules in self.component_modules().items():
            if modules:
                container = nn.ModuleList(modules)
                fingerprints[name] = module_fingerprint(container)
        return fingerprints

    def describe(self) -> dict[str, dict[str, str | int]]:
        """Backend identities for run manifests."""
        described: dict[str, dict[str, str | int]] = {}
        if self.text_encoder is not None:
            described["text_encoder"] = self.text_encoder.describe()
        if self.vision_encoder is not None:
            described["vision_encoder"] = self.vision_encoder.describe()
        for key in self.query_models:
            query_model: QueryModel = self.query_models[key]
            described[f"query_model:{key}"] = query_model.describe()
        return described


def candidate_labels(
    instance: EventInstance,
    roles: tuple[str, ...],
    iou_threshold: float | None = None,
) -> torch.Tensor:
    """``|C| x R`` gold matrix: 1 where a candidate fills a role.

    A text candidate fills a role when its span equals a gold argument span of
    that role; an image candidate when its box overlaps a gold box of that role
    with IoU at or above the threshold (default from the global config).
    """
    threshold = iou_threshold if iou_threshold is not None else get_config().iou_threshold
    index = {role: j for j, role in enumerate(roles)}
    labels = torch.zeros(instance.candidate_count, len(roles))
    for argument in instance.arguments:
        column = index.get(argument.role)
        if column is None:
            continue
        if instance.modality is Modality.TEXT:
            for i, candidate in enumerate(instance.entity_candidates):
                if candidate.span == argument.span:
                    labels[i, column] = 1.0
        elif argument.bbox is not None:
            gold_box = argument.bbox.as_tuple()
            for i, box in enumerate(instance.object_candidates):
                if box_iou(box.bbox.as_tuple(), gold_box) >= threshold:
                    labels[i, column] = 1.0
    return labels


def build_model(config: ModelConfig, ontology: Ontology) -> TemplateFillingModel:
    """Build a freshly initialised model; parameter init is seeded by ``config.seed``.

    Raises:
        ConfigurationError: If a backend cannot be built.
    """
    torch.manual_seed(config.seed)
    backends = build_backends(config)
    model = TemplateFillingModel(
        config,
        ontology,
        text_encoder=backends.text_encoder,
        vision_encoder=backends.vision_encoder,
        query_models=backends.query_models,
    )
    return model.to(config.device)
