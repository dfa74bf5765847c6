"""Event ontologies: event types, their templates and the role vocabulary.

Ontologies are data. Each one lives in a YAML file with one entry per event
type::

    name: m2e2
    event_types:
      - name: Contact:Meet
        template: "[Entity] met at [Place]."
        role_definitions:
          Entity: the people who meet
          Place: where the meeting takes place

The M2E2 ontology and an excerpt of imported FrameNet frame templates ship
with the package and are available through ``get_builtin_ontology``.
"""

import logging
from importlib import resources
from pathlib import Path
from typing import Any, Self

import yaml
from pydantic import BaseModel, Field, model_validator

from pyeventfill.exceptions import IngestionError, OntologyError, ValidationError
from pyeventfill.ontology.templates import EventTemplate, parse_template

logger = logging.getLogger(__name__)

BUILTIN_ONTOLOGIES = ("m2e2", "framenet_excerpt")


class EventTypeDef(BaseModel, frozen=True):
    """One event type (or frame) of an ontology.

    Attributes:
        name: Event type name, e.g. ``Conflict:Attack``.
        roles: Argument roles in template order.
        template: Parsed event template.
        role_definitions: Optional short definition per role.
    """

    name: str = Field(min_length=1)
    roles: tuple[str, ...]
    template: EventTemplate
    role_definitions: dict[str, str] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _roles_match_template(self) -> Self:
        if self.roles != self.template.roles:
            raise ValueError(
                f"Roles {list(self.roles)} of '{self.name}' do not match template "
                f"placeholders {list(self.template.roles)}"
            )
        return self

    @classmethod
    def from_template(
        cls,
        name: str,
        raw_template: str,
        role_definitions: dict[str, str] | None = None,
    ) -> "EventTypeDef":
        """Build an event type from its raw template text."""
        template = parse_template(raw_template)
        return cls(
            name=name,
            roles=template.roles,
            template=template,
            role_definitions=dict(role_definitions or {}),
        )


class Ontology(BaseModel, frozen=True):
    """A named set of event types sharing one role vocabulary.

    Attributes:
        name: Ontology identifier.
        event_types: Event type definitions with unique names.
        role_vocabulary: Every role any event type may use.
    """

    name: str = Field(min_length=1)
    event_types: tuple[EventTypeDef, ...]
    role_vocabulary: frozenset[str]

    @model_validator(mode="after")
    def _check_integrity(self) -> Self:
        names = [event_type.name for event_type in self.event_types]
        duplicates = sorted({name for name in names if names.count(name) > 1})
        if duplicates:
            raise ValueError(f"Duplicate event types in ontology '{self.name}': {duplicates}")
        for event_type in self.event_types:
            unknown = [role for role in event_type.roles if role not in self.role_vocabulary]
            if unknown:
                raise ValueError(
                    f"Roles {unknown} of '{event_type.name}' are missing from the role vocabulary"
                )
        return self

    @classmethod
    def build(cls, name: str, event_types: list[EventTypeDef]) -> "Ontology":
        """Create an ontology whose role vocabulary is the union of its templates' roles."""
        vocabulary = frozenset(role for event_type in event_types for role in event_type.roles)
        return cls(name=name, event_types=tuple(event_types), role_vocabulary=vocabulary)

    @property
    def event_type_names(self) -> tuple[str, ...]:
        """Event type names in file order."""
        return tuple(event_type.name for event_type in self.event_types)

    @property
    def sorted_roles(self) -> tuple[str, ...]:
        """Role vocabulary in a stable order."""
        return tuple(sorted(self.role_vocabulary))

    def has_event_type(self, name: str) -> bool:
        """Check whether an event type is defined."""
        return any(event_type.name == name for event_type in self.event_types)

    def get_event_type(self, name: str) -> EventTypeDef:
        """Look up an event type.

        Raises:
            OntologyError: If the event type is not defined.
        """
        for event_type in self.event_types:
            if event_type.name == name:
                return event_type
        raise OntologyError(f"Event type '{name}' not found in ontology '{self.name}'")

    def merge(self, others: list["Ontology"], name: str) -> "Ontology":
        """Union this ontology with others.

        Event types defined identically in several inputs are kept once.

        Raises:
            OntologyError: If two inputs define the same event type differently.
        """
        merged: dict[str, EventTypeDef] = {}
        for ontology in [self, *others]:
            for event_type in ontology.event_types:
                existing = merged.get(event_type.name)
                if existing is None:
                    merged[event_type.name] = event_type
                elif existing.template.raw_text != event_type.template.raw_text:
                    raise OntologyError(
                        f"Conflicting templates for '{event_type.name}' while merging "
                        f"into '{name}'"
                    )
        vocabulary = frozenset().union(*(o.role_vocabulary for o in [self, *others]))
        return Ontology(name=name, event_types=tuple(merged.values()), role_vocabulary=vocabulary)

    def to_dict(self) -> dict[str, Any]:
        """Serialize to the YAML file layout."""
        entries: list[dict[str, Any]] = []
        for event_type in self.event_types:
            entry: dict[str, Any] = {
                "name": event_type.name,
                "template": event_type.template.raw_text,
            }
            if event_type.role_definitions:
                entry["role_definitions"] = dict(event_type.role_definitions)
            entries.append(entry)
        return {"name": self.name, "event_types": entries}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Ontology":
        """Build an ontology from the YAML file layout.

        Raises:
            ValidationError: If the layout is malformed or a template fails to parse.
        """
        try:
            name = data["name"]
            event_types = [
                EventTypeDef.from_template(
                    entry["name"], entry["template"], entry.get("role_definitions")
                )
                for entry in data["event_types"]
            ]
        except (KeyError, TypeError, AttributeError) as exc:
            raise ValidationError(
                f"Ontology entries need 'name' and 'event_types' with 'name' and 'template': {exc}"
            ) from exc
        return cls.build(name, event_types)


def load_ontology(path: Path | str) -> Ontology:
    """Load an ontology YAML file.

    Raises:
        IngestionError: If the file cannot be read or parsed.
    """
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise IngestionError(f"Cannot read ontology ({exc})", path) from exc
    try:
        ontology = Ontology.from_dict(data)
    except (ValidationError, ValueError) as exc:
        raise IngestionError(f"Invalid ontology ({exc})", path) from exc
    logger.debug("Loaded ontology %s with %d event types", ontology.name, len(ontology.event_types))
    return ontology


def dump_ontology(ontology: Ontology, path: Path | str) -> None:
    """Write an ontology YAML file."""
    Path(path).write_text(
        yaml.safe_dump(ontology.to_dict(), sort_keys=False, allow_unicode=True),
        encoding="utf-8",
    )


def get_builtin_ontology(name: str) -> Ontology:
    """Load an ontology shipped with the package.

    Args:
        name: ``m2e2`` or ``framenet_excerpt``.

    Raises:
        OntologyError: If no such ontology ships with the package.
    """
    if name not in BUILTIN_ONTOLOGIES:
        raise OntologyError(
            f"Unknown built-in ontology '{name}', available: {list(BUILTIN_ONTOLOGIES)}"
        )
    resource = resources.files("pyeventfill.ontology") / "data" / f"{name}.yaml"
    return Ontology.from_dict(yaml.safe_load(resource.read_text(encoding="utf-8")))


def resolve_ontology(name_or_path: str) -> Ontology:
    """Resolve a built-in ontology name or an ontology file path."""
    if name_or_path in BUILTIN_ONTOLOGIES:
        return get_builtin_ontology(name_or_path)
    return load_ontology(name_or_path)
