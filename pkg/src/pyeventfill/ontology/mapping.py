"""Mapping source-ontology labels onto a target ontology.

Training corpora annotated with ACE, SWiG or FrameNet labels are aligned with
the active ontology through a mapping file. Mapping files are tab-separated,
one rule per line, ``#`` starts a comment::

    source	swig
    target	m2e2
    event	attacking	-	Conflict:Attack
    role	attacking	agent	Attacker
    role	attacking	victim	Target
    role	attacking	*	DROP
    event	cooking	-	DROP

A ``*`` role rule is the fallback for roles of that event not listed
explicitly. ``DROP`` removes the event or role.
"""

import csv
import logging
from pathlib import Path

from pydantic import BaseModel, Field

from pyeventfill.exceptions import IngestionError, OntologyError
from pyeventfill.ontology.ontology import Ontology

logger = logging.getLogger(__name__)

DROP = "DROP"
ANY_ROLE = "*"


class MappedEvent(BaseModel, frozen=True):
    """Target-ontology labels of one event.

    Attributes:
        event_type: Target event type.
        roles: Target role per input role, None where the role was dropped.
    """

    event_type: str
    roles: tuple[str | None, ...]


class OntologyMapping(BaseModel, frozen=True):
    """Label alignment from a source ontology to a target ontology.

    Attributes:
        source_ontology: Name of the source label set.
        target_ontology: Name of the target ontology.
        event_map: Source event to target event or ``DROP``.
        role_map: Source event to (source role to target role or ``DROP``).
    """

    source_ontology: str
    target_ontology: str
    event_map: dict[str, str] = Field(default_factory=dict)
    role_map: dict[str, dict[str, str]] = Field(default_factory=dict)

    @classmethod
    def identity(cls, ontology: Ontology) -> "OntologyMapping":
        """Map every event type and role of an ontology onto itself."""
        return cls(
            source_ontology=ontology.name,
            target_ontology=ontology.name,
            event_map={et.name: et.name for et in ontology.event_types},
            role_map={et.name: {role: role for role in et.roles} for et in ontology.event_types},
        )

    @property
    def is_identity(self) -> bool:
        """Whether this mapping relabels nothing."""
        return (
            self.source_ontology == self.target_ontology
            and all(src == tgt for src, tgt in self.event_map.items())
            and all(
                src == tgt for roles in self.role_map.values() for src, tgt in roles.items()
            )
        )

    def validate_against(self, target: Ontology, source: Ontology | None = None) -> None:
        """Check that every mapped label exists.

        Args:
            target: Ontology the mapping produces labels in.
            source: Source ontology, when the source labels form one.

        Raises:
            OntologyError: Listing every label that does not exist.
        """
        problems: list[str] = []
        for src_event, tgt_event in self.event_map.items():
            if source is not None and not source.has_event_type(src_event):
                problems.append(f"source event '{src_event}'")
            if tgt_event == DROP:
                continue
            if not target.has_event_type(tgt_event):
                problems.append(f"target event '{tgt_event}'")
                continue
            target_roles = target.get_event_type(tgt_event).roles
            for src_role, tgt_role in self.role_map.get(src_event, {}).items():
                if tgt_role != DROP and tgt_role not in target_roles:
                    problems.append(f"target role '{tgt_role}' of '{tgt_event}' (from {src_role})")
        for src_event in self.role_map:
            if src_event not in self.event_map:
                problems.append(f"role rules for unmapped event '{src_event}'")
        if problems:
            raise OntologyError(
                f"Mapping {self.source_ontology}->{self.target_ontology} has unknown labels: "
                + "; ".join(problems)
            )


def map_labels(
    mapping: OntologyMapping,
    event: str,
    role_assignments: list[str],
) -> MappedEvent | None:
    """Relabel one event and its role assignments.

    Args:
        mapping: Validated mapping.
        event: Source event label.
        role_assignments: Source role label of each argument.

    Returns:
        The relabeled event, or None if the event is dropped.

    Raises:
        OntologyError: If the event or a role has no mapping rule.

    Example:
        >>> mapping = OntologyMapping(
        ...     source_ontology="swig",
        ...     target_ontology="m2e2",
        ...     event_map={"attacking": "Conflict:Attack"},
        ...     role_map={"attacking": {"agent": "Attacker"}},
        ... )
        >>> map_labels(mapping, "attacking", ["agent"]).roles
        ('Attacker',)
    """
    if event not in mapping.event_map:
        raise OntologyError(f"No mapping for source event '{event}'")
    target_event = mapping.event_map[event]
    if target_event == DROP:
        return None

    rules = mapping.role_map.get(event, {})
    roles: list[str | None] = []
    for role in role_assignments:
        target_role = rules.get(role, rules.get(ANY_ROLE))
        if target_role is None:
            raise OntologyError(f"No mapping for role '{role}' of source event '{event}'")
        roles.append(None if target_role == DROP else target_role)
    return MappedEvent(event_type=target_event, roles=tuple(roles))


def load_mapping(path: Path | str) -> OntologyMapping:
    """Read a tab-separated mapping file.

    Raises:
        IngestionError: If the file is unreadable or a row is malformed.
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IngestionError(f"Cannot read mapping ({exc})", path) from exc

    source = target = ""
    event_map: dict[str, str] = {}
    role_map: dict[str, dict[str, str]] = {}
    for line_no, row in enumerate(csv.reader(lines, delimiter="\t"), start=1):
        cells = [cell.strip() for cell in row]
        if not cells or not cells[0] or cells[0].startswith("#"):
            continue
        match cells:
            case ["source", name]:
                source = name
            case ["target", name]:
                target = name
            case ["event", src_event, _, tgt_event]:
                event_map[src_event] = tgt_event
            case ["role", src_event, src_role, tgt_role]:
                role_map.setdefault(src_event, {})[src_role] = tgt_role
            case _:
                raise IngestionError(f"Malformed mapping row {line_no}: {row}", path)

    if not source or not target:
        raise IngestionError("Mapping file needs 'source' and 'target' rows", path)
    logger.debug("Loaded mapping %s->%s with %d event rules", source, target, len(event_map))
    return OntologyMapping(
        source_ontology=source, target_ontology=target, event_map=event_map, role_map=role_map
    )
