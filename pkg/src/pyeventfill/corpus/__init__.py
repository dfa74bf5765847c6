"""Corpus records, loaders and synthetic data generation."""

from pyeventfill.corpus.detections import Detections, attach_detections, load_detections
from pyeventfill.corpus.images import load_image, render_canvas
from pyeventfill.corpus.m2e2 import (
    corpus_statistics,
    document_id,
    documents_to_instances,
    load_m2e2,
)
from pyeventfill.corpus.records import (
    BoundingBox,
    CandidateBox,
    CandidateSpan,
    CanvasFill,
    EventInstance,
    GoldArgument,
    ImageRef,
    MultimediaDocument,
    Span,
    SyntheticCanvas,
    fingerprint_instances,
    instance_statistics,
    read_instances,
    read_jsonl,
    write_jsonl,
)
from pyeventfill.corpus.sources import load_source, source_ontology
from pyeventfill.corpus.synthetic import (
    SyntheticCorpus,
    SyntheticSpec,
    chance_f1,
    generate_synthetic,
    load_synthetic_spec,
    oracle_assign,
    oracle_f1,
    role_lexicon,
    role_patterns,
    synthetic_ontology,
)
from pyeventfill.corpus.training_corpora import (
    TrainingCorpus,
    TrainingFormat,
    load_training_corpus,
)

__all__ = [
    # Records
    "BoundingBox",
    "CandidateBox",
    "CandidateSpan",
    "CanvasFill",
    "EventInstance",
    "GoldArgument",
    "ImageRef",
    "MultimediaDocument",
    "Span",
    "SyntheticCanvas",
    "fingerprint_instances",
    "instance_statistics",
    "read_instances",
    "read_jsonl",
    "write_jsonl",
    # Images
    "load_image",
    "render_canvas",
    # Benchmark and training corpora
    "TrainingCorpus",
    "TrainingFormat",
    "corpus_statistics",
    "document_id",
    "documents_to_instances",
    "load_m2e2",
    "load_training_corpus",
    # Configured sources
    "load_source",
    "source_ontology",
    # Detector outputs
    "Detections",
    "attach_detections",
    "load_detections",
    # Synthetic data
    "SyntheticCorpus",
    "SyntheticSpec",
    "chance_f1",
    "generate_synthetic",
    "load_synthetic_spec",
    "oracle_assign",
    "oracle_f1",
    "role_lexicon",
    "role_patterns",
    "synthetic_ontology",
]
