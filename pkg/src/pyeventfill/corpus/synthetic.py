"""Deterministic synthetic corpora.

A ``SyntheticSpec`` fully determines a generated ontology plus textual and
visual event instances whose gold arguments can be recovered by construction:

* every role owns a small lexicon of pseudo-words and a pair of texture
  patterns, both derived by hashing the role name with the seed, so the same
  role looks the same in every split and every generated ontology;
* a gold candidate carries words (text) or a texture (image) of its own role
  with probability ``signal_strength``, and of a random role of the same
  template otherwise;
* distractor candidates carry the lexicon of no role at all.

Splits share the ontology and the lexicons but draw different events.
"""

import hashlib
import logging
import string
from pathlib import Path
from typing import Self

import numpy as np
import pydantic
import yaml
from pydantic import BaseModel, Field, model_validator

from pyeventfill.config import Modality
from pyeventfill.corpus.records import (
    BoundingBox,
    CandidateBox,
    CandidateSpan,
    CanvasFill,
    EventInstance,
    GoldArgument,
    ImageRef,
    Span,
    SyntheticCanvas,
)
from pyeventfill.exceptions import ConfigurationError
from pyeventfill.ontology.ontology import EventTypeDef, Ontology

logger = logging.getLogger(__name__)

ROLE_NAMES = (
    "Agent",
    "Place",
    "Instrument",
    "Target",
    "Victim",
    "Entity",
    "Artifact",
    "Vehicle",
    "Origin",
    "Destination",
    "Attacker",
    "Person",
    "Giver",
    "Recipient",
    "Money",
    "Beneficiary",
    "Police",
    "Theme",
    "Goal",
    "Cause",
    "Speaker",
    "Payer",
    "Selector",
    "Perceiver",
)
CONNECTORS = ("with", "near", "for", "by", "at", "from", "to")
FILLERS = ("then", "and", "while", "near")
NO_ROLE = "\x00none"
LEXICON_SIZE = 4
PATTERNS_PER_ROLE = 2
PATCH = 16
SLOT_GRID = 4


class SyntheticSpec(BaseModel, frozen=True):
    """Parameters of a synthetic corpus.

    Attributes:
        seed: Master seed.
        num_event_types: Event types in the generated ontology.
        min_roles: Fewest roles per event type.
        max_roles: Most roles per event type.
        num_documents: Documents per split.
        events_per_document: Events per document and modality.
        candidates_per_event: Candidates per event, distractors included.
        distractors_per_event: Candidates filling no role.
        signal_strength: Probability a gold candidate carries its own role's feature.
        split: Split name, mixed into the event draws.
        role_pool: How many of the built-in role names templates draw from.
        ontology_name: Name of the generated ontology, mixed into template draws.
        modalities: Which modalities to generate.
        image_size: Canvas side in pixels.
    """

    seed: int = 0
    num_event_types: int = Field(default=8, ge=1)
    min_roles: int = Field(default=2, ge=1)
    max_roles: int = Field(default=5, ge=1)
    num_documents: int = Field(default=16, ge=1)
    events_per_document: int = Field(default=4, ge=1)
    candidates_per_event: int = Field(default=4, ge=1, le=SLOT_GRID * SLOT_GRID)
    distractors_per_event: int = Field(default=1, ge=0)
    signal_strength: float = Field(default=1.0, ge=0, le=1)
    split: str = "train"
    role_pool: int = Field(default=15, ge=1, le=len(ROLE_NAMES))
    ontology_name: str = "synthetic"
    modalities: tuple[Modality, ...] = (Modality.TEXT, Modality.IMAGE)
    image_size: int = Field(default=224, ge=SLOT_GRID * 3 * PATCH + PATCH)

    @model_validator(mode="after")
    def _check_counts(self) -> Self:
        if self.min_roles > self.max_roles:
            raise ValueError("min_roles must not exceed max_roles")
        if self.max_roles > self.role_pool:
            raise ValueError("max_roles must not exceed role_pool")
        if self.distractors_per_event >= self.candidates_per_event:
            raise ValueError("At least one candidate per event must fill a role")
        return self

    def for_split(self, split: str) -> "SyntheticSpec":
        """The same generator for another split."""
        return self.model_copy(update={"split": split})


class SyntheticCorpus(BaseModel, frozen=True):
    """A generated ontology and its event instances."""

    spec: SyntheticSpec
    ontology: Ontology
    text: tuple[EventInstance, ...]
    image: tuple[EventInstance, ...]

    @property
    def instances(self) -> tuple[EventInstance, ...]:
        """Text then image instances."""
        return self.text + self.image


def _stable_int(text: str) -> int:
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "big")


def _pseudo_word(key: str) -> str:
    digest = hashlib.blake2b(key.encode(), digest_size=8).digest()
    return "".join(string.ascii_lowercase[byte % 26] for byte in digest[:4])


def role_lexicon(role: str, seed: int) -> tuple[str, ...]:
    """Pseudo-words planted in candidates of a role."""
    return tuple(_pseudo_word(f"{seed}:word:{role}:{k}") for k in range(LEXICON_SIZE))


def role_patterns(role: str, seed: int) -> tuple[int, ...]:
    """Texture seeds planted in object boxes of a role."""
    return tuple(
        _stable_int(f"{seed}:pattern:{role}:{k}") % 2**32 for k in range(PATTERNS_PER_ROLE)
    )


def trigger_word(event_type: str, seed: int) -> str:
    """Trigger pseudo-word of an event type."""
    return _pseudo_word(f"{seed}:trigger:{event_type}")


def synthetic_ontology(spec: SyntheticSpec) -> Ontology:
    """The ontology a spec generates; independent of the split."""
    rng = np.random.default_rng([spec.seed, _stable_int(spec.ontology_name)])
    pool = ROLE_NAMES[: spec.role_pool]
    event_types: list[EventTypeDef] = []
    for index in range(spec.num_event_types):
        count = int(rng.integers(spec.min_roles, spec.max_roles + 1))
        roles = [str(pool[i]) for i in rng.choice(len(pool), size=count, replace=False)]
        name = f"{spec.ontology_name}:Event{index}"
        text = f"[{roles[0]}] {trigger_word(name, spec.seed)}"
        for role in roles[1:]:
            text += f" {CONNECTORS[int(rng.integers(len(CONNECTORS)))]} [{role}]"
        event_types.append(
            EventTypeDef.from_template(
                name, text + ".", {role: f"the {role.lower()}" for role in roles}
            )
        )
    return Ontology.build(spec.ontology_name, event_types)


def _planted_roles(
    rng: np.random.Generator,
    roles: tuple[str, ...],
    spec: SyntheticSpec,
) -> tuple[list[str], list[str]]:
    """Gold roles of the candidates and the role whose feature each one carries."""
    gold_count = spec.candidates_per_event - spec.distractors_per_event
    picks = rng.choice(len(roles), size=gold_count, replace=gold_count > len(roles))
    gold = [roles[int(i)] for i in picks]
    carried = [
        role if rng.random() < spec.signal_strength else roles[int(rng.integers(len(roles)))]
        for role in gold
    ]
    return gold, carried


def _text_instance(
    rng: np.random.Generator,
    spec: SyntheticSpec,
    event_type: EventTypeDef,
    doc_id: str,
    index: int,
) -> EventInstance:
    gold, carried = _planted_roles(rng, event_type.roles, spec)
    chunks: list[tuple[list[str], str | None]] = []
    for gold_role, carried_role in zip(gold, carried, strict=True):
        lexicon = role_lexicon(carried_role, spec.seed)
        length = 1 + int(rng.integers(2))
        drawn = [lexicon[int(rng.integers(LEXICON_SIZE))] for _ in range(length)]
        chunks.append((drawn, gold_role))
    null_lexicon = role_lexicon(NO_ROLE, spec.seed)
    for _ in range(spec.distractors_per_event):
        chunks.append(([null_lexicon[int(rng.integers(LEXICON_SIZE))]], None))

    words: list[str] = []
    trigger: Span | None = None
    candidates: list[CandidateSpan] = []
    arguments: list[GoldArgument] = []
    for position, chunk_index in enumerate(rng.permutation(len(chunks))):
        chunk_words, role = chunks[int(chunk_index)]
        if position:
            words.append(FILLERS[int(rng.integers(len(FILLERS)))])
        span = Span(start=len(words), end=len(words) + len(chunk_words))
        words.extend(chunk_words)
        candidates.append(CandidateSpan(span=span, head=span.end - 1))
        if role is not None:
            arguments.append(GoldArgument(role=role, span=span, head=span.end - 1))
        if position == 0:
            trigger = Span(start=len(words), end=len(words) + 1)
            words.append(trigger_word(event_type.name, spec.seed))

    return EventInstance(
        instance_id=f"{spec.split}:{doc_id}:t{index}",
        doc_id=doc_id,
        modality=Modality.TEXT,
        event_type=event_type.name,
        ontology=spec.ontology_name,
        source="synthetic",
        sentence_id=f"{doc_id}:s{index}",
        words=tuple(words),
        trigger=trigger,
        entity_candidates=tuple(candidates),
        gold_entities=tuple(candidates),
        arguments=tuple(arguments),
    )


def _image_instance(
    rng: np.random.Generator,
    spec: SyntheticSpec,
    event_type: EventTypeDef,
    doc_id: str,
    index: int,
) -> EventInstance:
    gold, carried = _planted_roles(rng, event_type.roles, spec)
    planted: list[tuple[int, str | None]] = [
        (role_patterns(carried_role, spec.seed)[int(rng.integers(PATTERNS_PER_ROLE))], gold_role)
        for gold_role, carried_role in zip(gold, carried, strict=True)
    ]
    null_patterns = role_patterns(NO_ROLE, spec.seed)
    planted += [
        (null_patterns[int(rng.integers(PATTERNS_PER_ROLE))], None)
        for _ in range(spec.distractors_per_event)
    ]

    slots = rng.choice(SLOT_GRID * SLOT_GRID, size=len(planted), replace=False)
    fills: list[CanvasFill] = []
    boxes: list[CandidateBox] = []
    arguments: list[GoldArgument] = []
    for (pattern, role), slot in zip(planted, slots, strict=True):
        row, col = divmod(int(slot), SLOT_GRID)
        side = PATCH * int(rng.integers(2, 4))
        x_min, y_min = PATCH + col * 3 * PATCH, PATCH + row * 3 * PATCH
        bbox = BoundingBox(x_min=x_min, y_min=y_min, x_max=x_min + side, y_max=y_min + side)
        fills.append(CanvasFill(bbox=bbox, pattern_seed=pattern))
        boxes.append(CandidateBox(bbox=bbox, confidence=1.0))
        if role is not None:
            arguments.append(GoldArgument(role=role, bbox=bbox))

    background = tuple(int(v) for v in rng.integers(0, 256, size=3))
    image_id = f"{doc_id}:i{index}"
    canvas = SyntheticCanvas(
        width=spec.image_size,
        height=spec.image_size,
        background=(background[0], background[1], background[2]),
        fills=tuple(fills),
    )
    return EventInstance(
        instance_id=f"{spec.split}:{doc_id}:v{index}",
        doc_id=doc_id,
        modality=Modality.IMAGE,
        event_type=event_type.name,
        ontology=spec.ontology_name,
        source="synthetic",
        image=ImageRef(image_id=image_id, canvas=canvas),
        object_candidates=tuple(boxes),
        gold_objects=tuple(boxes),
        arguments=tuple(arguments),
    )


def generate_synthetic(spec: SyntheticSpec) -> SyntheticCorpus:
    """Generate a corpus; a pure function of ``spec``.

    When both modalities are generated, the i-th text and image event of a
    document share an event type and a multimedia id.

    Example:
        >>> corpus = generate_synthetic(SyntheticSpec(seed=7, num_documents=2))
        >>> len(corpus.text), len(corpus.image)
        (8, 8)
    """
    ontology = synthetic_ontology(spec)
    rng = np.random.default_rng(
        [spec.seed, _stable_int(spec.ontology_name), _stable_int(spec.split)]
    )
    text: list[EventInstance] = []
    image: list[EventInstance] = []
    both = Modality.TEXT in spec.modalities and Modality.IMAGE in spec.modalities
    for doc_index in range(spec.num_documents):
        doc_id = f"{spec.split}-doc{doc_index}"
        for index in range(spec.events_per_document):
            event_type = ontology.event_types[int(rng.integers(len(ontology.event_types)))]
            multimedia_id = f"{doc_id}:mm{index}" if both else None
            if Modality.TEXT in spec.modalities:
                instance = _text_instance(rng, spec, event_type, doc_id, index)
                text.append(instance.model_copy(update={"multimedia_id": multimedia_id}))
            if Modality.IMAGE in spec.modalities:
                instance = _image_instance(rng, spec, event_type, doc_id, index)
                image.append(instance.model_copy(update={"multimedia_id": multimedia_id}))
    logger.info(
        "Generated synthetic split %s: %d text and %d image events over %d event types",
        spec.split,
        len(text),
        len(image),
        len(ontology.event_types),
    )
    return SyntheticCorpus(spec=spec, ontology=ontology, text=tuple(text), image=tuple(image))


def load_synthetic_spec(path: Path | str) -> SyntheticSpec:
    """Read a SyntheticSpec YAML file.

    Raises:
        ConfigurationError: If the file is unreadable or invalid.
    """
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        return SyntheticSpec.model_validate(data)
    except (OSError, yaml.YAMLError, pydantic.ValidationError) as exc:
        raise ConfigurationError(f"Invalid synthetic spec {path}: {exc}") from exc


def oracle_assign(
    instance: EventInstance,
    ontology: Ontology,
    seed: int,
) -> tuple[str | None, ...]:
    """Assign every candidate the role whose planted feature it carries.

    Text candidates take the template role whose lexicon covers most of their
    words (earlier template roles win ties); image candidates the role whose
    texture fills their box. Candidates carrying no role's feature get None.
    """
    roles = ontology.get_event_type(instance.event_type).roles
    if instance.modality is Modality.TEXT:
        lexicons = {role: set(role_lexicon(role, seed)) for role in roles}
        assigned: list[str | None] = []
        for candidate in instance.entity_candidates:
            words = instance.words[candidate.span.start : candidate.span.end]
            counts = [sum(word in lexicons[role] for word in words) for role in roles]
            best = max(range(len(roles)), key=lambda i: (counts[i], -i)) if roles else None
            assigned.append(roles[best] if best is not None and counts[best] else None)
        return tuple(assigned)

    canvas = instance.image.canvas if instance.image is not None else None
    patterns = {fill.bbox: fill.pattern_seed for fill in canvas.fills} if canvas else {}
    owners = {pattern: role for role in roles for pattern in role_patterns(role, seed)}
    return tuple(
        owners.get(patterns.get(candidate.bbox, -1)) for candidate in instance.object_candidates
    )


def oracle_f1(instances: list[EventInstance], ontology: Ontology, seed: int) -> float:
    """Argument F1 of ``oracle_assign`` against the gold arguments."""
    predicted = correct = gold = 0
    for instance in instances:
        gold_roles: dict[object, str] = {}
        for argument in instance.arguments:
            location = argument.span if argument.span is not None else argument.bbox
            gold_roles[location] = argument.role
        gold += len(instance.arguments)
        locations: list[object] = (
            [c.span for c in instance.entity_candidates]
            if instance.modality is Modality.TEXT
            else [c.bbox for c in instance.object_candidates]
        )
        for location, role in zip(
            locations, oracle_assign(instance, ontology, seed), strict=True
        ):
            if role is None:
                continue
            predicted += 1
            correct += gold_roles.get(location) == role
    precision = correct / predicted if predicted else 0.0
    recall = correct / gold if gold else 0.0
    return 2 * precision * recall / (precision + recall) if precision + recall else 0.0


def chance_f1(corpus: SyntheticCorpus) -> float:
    """Expected oracle F1 when no candidate carries its own role's feature.

    Every gold candidate then carries a uniformly drawn role of its template,
    so it is labeled correctly with probability 1/R and precision equals
    recall.
    """
    expected = total = 0.0
    for instance in corpus.instances:
        role_count = len(corpus.ontology.get_event_type(instance.event_type).roles)
        expected += len(instance.arguments) / role_count
        total += len(instance.arguments)
    return expected / total if total else 0.0
