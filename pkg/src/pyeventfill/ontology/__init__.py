"""Event ontologies, bracketed event templates and label mappings."""

from pyeventfill.ontology.mapping import (
    DROP,
    MappedEvent,
    OntologyMapping,
    load_mapping,
    map_labels,
)
from pyeventfill.ontology.ontology import (
    BUILTIN_ONTOLOGIES,
    EventTypeDef,
    Ontology,
    dump_ontology,
    get_builtin_ontology,
    load_ontology,
    resolve_ontology,
)
from pyeventfill.ontology.templates import (
    EventTemplate,
    PromptRendering,
    SegmentKind,
    TemplateSegment,
    event_type_prefix,
    parse_template,
    render_prompt,
)

__all__ = [
    "BUILTIN_ONTOLOGIES",
    "DROP",
    "EventTemplate",
    "EventTypeDef",
    "MappedEvent",
    "Ontology",
    "OntologyMapping",
    "PromptRendering",
    "SegmentKind",
    "TemplateSegment",
    "dump_ontology",
    "event_type_prefix",
    "get_builtin_ontology",
    "load_mapping",
    "load_ontology",
    "map_labels",
    "parse_template",
    "render_prompt",
    "resolve_ontology",
]
