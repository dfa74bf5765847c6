"""pyeventfill - Multimodal event argument extraction by template filling.

Argument candidates (entity spans in a sentence, object boxes in an image) are
matched against role queries decoded from natural-language event templates.
One model serves both modalities, so it can be trained on text and images
jointly or in stages, and transferred to a new ontology by swapping templates.

Example:
    >>> from pyeventfill import SyntheticSpec, ModelConfig, generate_synthetic, build_model
    >>> corpus = generate_synthetic(SyntheticSpec(seed=7, num_documents=2))
    >>> model = build_model(ModelConfig(), corpus.ontology)
    >>> result = model.forward_event(corpus.text[0])
    >>> len(result.assignments) == corpus.text[0].candidate_count
    True
"""

from pyeventfill.config import (
    AblationConfig,
    BackendConfig,
    BackendFamily,
    CorpusSource,
    DataConfig,
    InferenceConfig,
    MatchPolicy,
    Modality,
    ModelConfig,
    PoolingMode,
    PromptConfig,
    PromptVariant,
    PyEventFillConfig,
    RunConfig,
    SourceFormat,
    TrainingConfig,
    TrainingStrategy,
    get_config,
    load_run_config,
    reset_config,
    set_config,
    update_config,
)
from pyeventfill.corpus import (
    BoundingBox,
    CandidateBox,
    CandidateSpan,
    EventInstance,
    GoldArgument,
    ImageRef,
    MultimediaDocument,
    Span,
    SyntheticCorpus,
    SyntheticSpec,
    TrainingFormat,
    generate_synthetic,
    load_m2e2,
    load_source,
    load_training_corpus,
    read_instances,
    write_jsonl,
)
from pyeventfill.evaluation import (
    EvaluationData,
    EvaluationMode,
    MetricReport,
    PredictionRecord,
    SweepResult,
    evaluate,
    evaluate_modes,
    predict_events,
    score_arguments,
    sweep_thresholds,
)
from pyeventfill.exceptions import (
    BoundsError,
    ConfigurationError,
    DataError,
    IngestionError,
    LeakageError,
    OntologyError,
    PyEventFillError,
    SequenceTooLongError,
    ShapeError,
    TemplateParseError,
    TrainingAbortedError,
    ValidationError,
)
from pyeventfill.matching import (
    MappingNetwork,
    MatchResult,
    TemplateFillingModel,
    assign_roles,
    bce_loss,
    build_model,
    match_score,
)
from pyeventfill.ontology import (
    EventTemplate,
    EventTypeDef,
    Ontology,
    OntologyMapping,
    get_builtin_ontology,
    load_mapping,
    load_ontology,
    map_labels,
    parse_template,
    render_prompt,
)
from pyeventfill.training import (
    AblationVariant,
    RunManifest,
    TrainingData,
    TrainResult,
    load_checkpoint,
    run_ablation_suite,
    save_checkpoint,
    train,
    transfer_train,
)

__version__ = "0.1.0"

__all__ = [
    # Version
    "__version__",
    # Configuration
    "AblationConfig",
    "BackendConfig",
    "BackendFamily",
    "CorpusSource",
    "DataConfig",
    "InferenceConfig",
    "MatchPolicy",
    "Modality",
    "ModelConfig",
    "PoolingMode",
    "PromptConfig",
    "PromptVariant",
    "PyEventFillConfig",
    "RunConfig",
    "SourceFormat",
    "TrainingConfig",
    "TrainingStrategy",
    "get_config",
    "load_run_config",
    "reset_config",
    "set_config",
    "update_config",
    # Ontologies and templates
    "EventTemplate",
    "EventTypeDef",
    "Ontology",
    "OntologyMapping",
    "get_builtin_ontology",
    "load_mapping",
    "load_ontology",
    "map_labels",
    "parse_template",
    "render_prompt",
    # Corpora
    "BoundingBox",
    "CandidateBox",
    "CandidateSpan",
    "EventInstance",
    "GoldArgument",
    "ImageRef",
    "MultimediaDocument",
    "Span",
    "SyntheticCorpus",
    "SyntheticSpec",
    "TrainingFormat",
    "generate_synthetic",
    "load_m2e2",
    "load_source",
    "load_training_corpus",
    "read_instances",
    "write_jsonl",
    # Matching
    "MappingNetwork",
    "MatchResult",
    "TemplateFillingModel",
    "assign_roles",
    "bce_loss",
    "build_model",
    "match_score",
    # Training
    "AblationVariant",
    "RunManifest",
    "TrainResult",
    "TrainingData",
    "load_checkpoint",
    "run_ablation_suite",
    "save_checkpoint",
    "train",
    "transfer_train",
    # Evaluation
    "EvaluationData",
    "EvaluationMode",
    "MetricReport",
    "PredictionRecord",
    "SweepResult",
    "evaluate",
    "evaluate_modes",
    "predict_events",
    "score_arguments",
    "sweep_thresholds",
    # Exceptions
    "BoundsError",
    "ConfigurationError",
    "DataError",
    "IngestionError",
    "LeakageError",
    "OntologyError",
    "PyEventFillError",
    "SequenceTooLongError",
    "ShapeError",
    "TemplateParseError",
    "TrainingAbortedError",
    "ValidationError",
]
