"""Configuration for pyeventfill.

Two layers live here. ``PyEventFillConfig`` is the library-wide set of numeric
defaults (thresholds, logit clamp, IoU criterion, mapping network shape) that
can be customised without touching source code. ``RunConfig`` and its nested
models describe one experiment: backends, prompt style, ablations, training
schedule, inference thresholds and data sources. Run configurations are read
from YAML files and can be overridden key by key from the command line.

Example:
    >>> from pyeventfill.config import get_config, update_config, reset_config
    >>> get_config().text_threshold
    0.5
    >>> update_config(text_threshold=0.2, visual_threshold=0.3)
    >>> reset_config()

    >>> from pyeventfill.config import load_run_config
    >>> run = load_run_config(None, {"training.strategy": "image_locked"})
    >>> run.training.strategy
    <TrainingStrategy.IMAGE_LOCKED: 'image_locked'>
"""

import os
from collections.abc import Mapping
from copy import deepcopy
from enum import StrEnum
from pathlib import Path
from typing import Any, Literal

import pydantic
import yaml
from pydantic import BaseModel, ConfigDict, Field

from pyeventfill.exceptions import ConfigurationError

OUTPUT_ROOT_ENV = "PYEVENTFILL_OUTPUT_ROOT"


class Modality(StrEnum):
    """Input modality of an event mention."""

    TEXT = "text"
    IMAGE = "image"


class BackendFamily(StrEnum):
    """Kind of encoder behind a backend."""

    ENCODER_DECODER_TEXT = "encoder_decoder_text"  # T5, BART
    ENCODER_ONLY_TEXT = "encoder_only_text"  # BERT
    VISION = "vision"  # CLIP, ViT, Data2Vec


class PromptVariant(StrEnum):
    """How an event template is turned into a query prompt."""

    CONCATENATION = "concatenation"  # role names only
    STANDARD = "standard"  # template with brackets stripped
    ENRICHED = "enriched"  # template with a definition after each role


class PoolingMode(StrEnum):
    """Pooling over the patches covered by a detected object."""

    MAX = "max"
    MEAN = "mean"
    ROI = "roi"


class TrainingStrategy(StrEnum):
    """Multimodal training strategy."""

    JOINT = "joint"
    TEXT_THEN_IMAGE = "text_then_image"
    IMAGE_THEN_TEXT = "image_then_text"
    IMAGE_LOCKED = "image_locked"


class MatchPolicy(StrEnum):
    """How a predicted text span is compared with a gold span."""

    EXACT = "exact"
    HEAD = "head"


class SourceFormat(StrEnum):
    """On-disk format of a corpus source."""

    JSONL = "jsonl"  # normalized EventInstance records
    SYNTHETIC = "synthetic"  # SyntheticSpec YAML
    M2E2 = "m2e2"
    ACE_LIKE = "ace_like"
    SWIG_LIKE = "swig_like"
    FRAMENET_LIKE = "framenet_like"


class PyEventFillConfig(BaseModel):
    """Global numeric defaults for pyeventfill.

    Attributes:
        text_threshold: Default matching threshold for textual candidates.
        visual_threshold: Default matching threshold for visual candidates.
        logit_clamp: Logits are clamped to +/- this value inside the loss.
        iou_threshold: Minimum IoU for a visual argument to count as correct.
        mapping_hidden_factor: Hidden width of mapping networks as a multiple of H.
        mapping_dropout: Dropout probability inside mapping networks.
        score_epsilon: Smallest probability passed to the logit function.
    """

    text_threshold: float = Field(default=0.5, gt=0, lt=1, description="Text tau")
    visual_threshold: float = Field(default=0.5, gt=0, lt=1, description="Vision tau")
    logit_clamp: float = Field(default=30.0, gt=0, description="Logit clamp")
    iou_threshold: float = Field(default=0.5, gt=0, le=1, description="Visual IoU criterion")
    mapping_hidden_factor: int = Field(default=4, ge=1, description="Hidden units per H")
    mapping_dropout: float = Field(default=0.4, ge=0, lt=1, description="Mapping dropout")
    score_epsilon: float = Field(default=1e-15, gt=0, lt=0.5, description="Score clamp")

    model_config = ConfigDict(validate_assignment=True)


# Process-wide defaults, created on first access
_config: PyEventFillConfig | None = None


def get_config() -> PyEventFillConfig:
    """Snapshot of the thresholds, clamps and mapping defaults in force.

    Modules read their defaults from here whenever a caller leaves a value
    unset, e.g. ``MappingNetwork`` takes its dropout and ``forward_event`` its
    tau. Mutating the snapshot changes nothing; go through ``set_config`` or
    ``update_config``.

    Returns:
        A deep copy of the active PyEventFillConfig.
    """
    global _config
    if _config is None:
        _config = PyEventFillConfig()
    return deepcopy(_config)


def set_config(config: PyEventFillConfig) -> None:
    """Install a complete set of defaults, e.g. one restored from a run.

    Args:
        config: Defaults to apply; stored as a copy.
    """
    global _config
    _config = deepcopy(config)


def reset_config() -> None:
    """Return to tau 0.5, logit clamp 30 and the other shipped defaults."""
    global _config
    _config = PyEventFillConfig()


def update_config(**kwargs: float | int) -> None:
    """Override individual defaults, validating each value on assignment.

    Args:
        **kwargs: Field names of PyEventFillConfig and their new values.

    Raises:
        pydantic.ValidationError: If a value is out of range, e.g. a tau
            outside (0, 1).

    Example:
        >>> update_config(text_threshold=0.2)
        >>> get_config().text_threshold
        0.2
    """
    global _config
    if _config is None:
        _config = PyEventFillConfig()
    for key, value in kwargs.items():
        setattr(_config, key, value)


class BackendConfig(BaseModel, frozen=True):
    """One encoder or query backend.

    ``name`` is either ``synthetic`` or a pretrained model identifier
    (``google-t5/t5-base``, ``openai/clip-vit-base-patch16`` ...). The size
    fields only apply to the synthetic backend; pretrained backends report
    their own widths.
    """

    name: str = "synthetic"
    family: BackendFamily = BackendFamily.ENCODER_DECODER_TEXT
    weights_path: Path | None = Field(default=None, description="Local weights directory")
    hidden_size: int = Field(default=64, ge=1)
    max_length: int = Field(default=128, ge=1, description="Maximum subword tokens")
    subword_chars: int = Field(default=4, ge=1)
    image_size: int = Field(default=224, ge=1)
    patch_size: int = Field(default=16, ge=1)
    num_heads: int = Field(default=4, ge=1)
    cross_attention: bool = Field(default=True, description="Query model attends to context")
    seed: int = 0

    @property
    def is_synthetic(self) -> bool:
        """Whether this is the deterministic desk-scale backend."""
        return self.name == "synthetic"


class PromptConfig(BaseModel, frozen=True):
    """Prompt rendering options."""

    variant: PromptVariant = PromptVariant.STANDARD
    event_type_prefix: bool = False


class AblationConfig(BaseModel, frozen=True):
    """Component ablations.

    Attributes:
        no_cross_attention: Decode queries without attending to the context.
        joint_prompts: One query model for both modalities (False = one each).
        use_prototypes: Replace prompt queries with trainable role prototypes.
    """

    no_cross_attention: bool = False
    joint_prompts: bool = True
    use_prototypes: bool = False


class ModelConfig(BaseModel, frozen=True):
    """Architecture of a template filling model.

    Either modality backend may be omitted; a model without a vision backend
    rejects image events.
    """

    text_backend: BackendConfig | None = Field(
        default_factory=lambda: BackendConfig(family=BackendFamily.ENCODER_DECODER_TEXT)
    )
    vision_backend: BackendConfig | None = Field(
        default_factory=lambda: BackendConfig(family=BackendFamily.VISION)
    )
    query_backend: BackendConfig = Field(
        default_factory=lambda: BackendConfig(family=BackendFamily.ENCODER_DECODER_TEXT)
    )
    hidden_size: int = Field(default=64, ge=1, description="Matching space width H")
    dropout: float = Field(default=0.4, ge=0, lt=1)
    pooling: PoolingMode = PoolingMode.MAX
    prompt: PromptConfig = Field(default_factory=PromptConfig)
    ablations: AblationConfig = Field(default_factory=AblationConfig)
    seed: int = 0
    device: str = "cpu"


class TrainingConfig(BaseModel, frozen=True):
    """Optimisation schedule.

    Defaults are 25 textual and 5 visual epochs with batches of 32 and 16,
    AdamW at 3e-5 with weight decay 1e-3 and a linear decay schedule.
    """

    strategy: TrainingStrategy = TrainingStrategy.JOINT
    text_epochs: int = Field(default=25, ge=1)
    visual_epochs: int = Field(default=5, ge=1)
    text_batch: int = Field(default=32, ge=1)
    visual_batch: int = Field(default=16, ge=1)
    learning_rate: float = Field(default=3e-5, gt=0)
    weight_decay: float = Field(default=1e-3, ge=0)
    schedule: Literal["linear"] = "linear"
    warmup_steps: int = Field(default=0, ge=0)
    max_steps: int | None = Field(default=None, ge=1, description="Cap on steps per stage")
    eval_interval: int | None = Field(
        default=None, ge=1, description="Steps between selection evaluations"
    )
    checkpoint_metric: Literal["argument_f1"] = "argument_f1"
    max_grad_norm: float | None = Field(default=None, gt=0)
    mixed_precision: bool = False
    seed: int = 0
    progress: bool = True


class InferenceConfig(BaseModel, frozen=True):
    """Thresholds and scoring policy used at prediction time."""

    text_threshold: float = Field(default=0.5, gt=0, lt=1)
    visual_threshold: float = Field(default=0.5, gt=0, lt=1)
    iou_threshold: float = Field(default=0.5, gt=0, le=1)
    match_policy: MatchPolicy = MatchPolicy.EXACT
    confidence_floor: float | None = Field(default=None, ge=0, le=1)


class CorpusSource(BaseModel, frozen=True):
    """A corpus on disk plus the mapping that aligns it with the active ontology."""

    path: Path
    format: SourceFormat = SourceFormat.JSONL
    mapping: Path | None = None
    strict: bool = True
    detections: Path | None = None
    image_root: Path | None = None

    @classmethod
    def infer(cls, path: Path) -> "CorpusSource":
        """Build a source from a bare path: ``.jsonl`` is normalized, else a synthetic spec."""
        fmt = SourceFormat.JSONL if path.suffix == ".jsonl" else SourceFormat.SYNTHETIC
        return cls(path=path, format=fmt)


class DataConfig(BaseModel, frozen=True):
    """Data sources of a run.

    Attributes:
        ontology: Built-in ontology name or path to an ontology YAML file.
        train: Training corpora, concatenated.
        selection: Held-out split used for checkpoint selection.
        evaluation: Gold corpus for predict/eval/sweep.
        triggers: Predicted event mentions for ``pred_triggers`` mode.
    """

    ontology: str = "m2e2"
    train: list[CorpusSource] = Field(default_factory=list)
    selection: CorpusSource | None = None
    evaluation: CorpusSource | None = None
    triggers: Path | None = None


class RunConfig(BaseModel, frozen=True):
    """Merged view of a configuration file and command-line overrides."""

    model: ModelConfig = Field(default_factory=ModelConfig)
    training: TrainingConfig = Field(default_factory=TrainingConfig)
    inference: InferenceConfig = Field(default_factory=InferenceConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    output_dir: Path = Path("runs/default")
    overwrite: bool = False


def _set_dotted(tree: dict[str, Any], dotted_key: str, value: Any) -> None:
    node = tree
    *parents, leaf = dotted_key.split(".")
    for part in parents:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigurationError(f"Cannot override '{dotted_key}': '{part}' is not a section")
        node = child
    node[leaf] = value


def load_run_config(
    path: Path | None,
    overrides: Mapping[str, str] | None = None,
) -> RunConfig:
    """Load a run configuration from YAML and apply overrides.

    Override values are parsed as YAML scalars, so ``"1e-2"`` becomes a float
    and ``"true"`` a bool. When ``PYEVENTFILL_OUTPUT_ROOT`` is set, the run
    directory is re-rooted under it.

    Args:
        path: YAML file, or None for defaults.
        overrides: Dotted keys (``training.strategy``) mapped to raw values.

    Returns:
        Validated RunConfig.

    Raises:
        ConfigurationError: If the file is unreadable or fails validation.
    """
    raw: dict[str, Any] = {}
    if path is not None:
        try:
            loaded = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigurationError(f"Cannot read run config {path}: {exc}") from exc
        if loaded is not None and not isinstance(loaded, dict):
            raise ConfigurationError(f"Run config {path} must be a mapping")
        raw = loaded or {}

    for key, value in (overrides or {}).items():
        _set_dotted(raw, key, yaml.safe_load(value))

    output_root = os.environ.get(OUTPUT_ROOT_ENV)
    if output_root:
        run_name = Path(raw.get("output_dir", "runs/default")).name
        raw["output_dir"] = str(Path(output_root) / run_name)

    try:
        return RunConfig.model_validate(raw)
    except pydantic.ValidationError as exc:
        raise ConfigurationError(f"Invalid run config: {exc}") from exc
