"""Resolve a configured corpus source into event instances."""

import logging

from pyeventfill.config import CorpusSource, SourceFormat
from pyeventfill.corpus.detections import attach_detections, load_detections
from pyeventfill.corpus.m2e2 import documents_to_instances, load_m2e2
from pyeventfill.corpus.records import EventInstance, read_instances
from pyeventfill.corpus.synthetic import generate_synthetic, load_synthetic_spec, synthetic_ontology
from pyeventfill.corpus.training_corpora import TrainingFormat, load_training_corpus
from pyeventfill.exceptions import ConfigurationError, OntologyError
from pyeventfill.ontology.mapping import OntologyMapping, load_mapping
from pyeventfill.ontology.ontology import Ontology

logger = logging.getLogger(__name__)


def source_ontology(source: CorpusSource) -> Ontology | None:
    """The ontology a synthetic source generates, None for any other source."""
    if source.format is SourceFormat.SYNTHETIC:
        return synthetic_ontology(load_synthetic_spec(source.path))
    return None


def load_source(
    source: CorpusSource,
    ontology: Ontology,
    split: str | None = None,
) -> list[EventInstance]:
    """Load the event instances of a corpus source.

    Args:
        source: Path, format and optional mapping and detections.
        ontology: Active ontology; every instance must have a template in it.
        split: For synthetic sources, generate this split instead of the
            one named in the SyntheticSpec file.

    Raises:
        ConfigurationError: If the path does not exist.
        OntologyError: If an instance's event type is not in ``ontology``.
        DataError: If the corpus cannot be parsed.
    """
    if not source.path.exists():
        raise ConfigurationError(f"Data path {source.path} does not exist")

    match source.format:
        case SourceFormat.JSONL:
            instances = read_instances(source.path)
        case SourceFormat.SYNTHETIC:
            spec = load_synthetic_spec(source.path)
            if split is not None:
                spec = spec.for_split(split)
            instances = list(generate_synthetic(spec).instances)
        case SourceFormat.M2E2:
            instances = documents_to_instances(load_m2e2(source.path))
        case SourceFormat.ACE_LIKE | SourceFormat.SWIG_LIKE | SourceFormat.FRAMENET_LIKE:
            mapping = (
                load_mapping(source.mapping)
                if source.mapping is not None
                else OntologyMapping.identity(ontology)
            )
            corpus = load_training_corpus(
                source.path,
                TrainingFormat(source.format.value),
                mapping,
                ontology,
                strict=source.strict,
            )
            instances = list(corpus.instances)

    if source.detections is not None:
        instances = attach_detections(instances, load_detections(source.detections))

    unknown = sorted({i.event_type for i in instances if not ontology.has_event_type(i.event_type)})
    if unknown:
        raise OntologyError(
            f"{source.path} has event types outside ontology '{ontology.name}': {unknown[:5]}"
        )
    logger.info("Loaded %d events from %s (%s)", len(instances), source.path, source.format)
    return instances
