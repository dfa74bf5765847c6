"""Joint and sequential multimodal training.

Strategies:

joint
    Text and image batches are interleaved. Each step picks a modality with
    probability proportional to its remaining step budget, so both budgets
    (text epochs x text batches, visual epochs x visual batches) run out
    together.
image_locked
    Joint training with the vision encoder frozen.
text_then_image / image_then_text
    Two stages. The first trains on one modality; the second trains on the
    other with the first modality's encoder, candidate mapping and query path
    frozen.

Each stage uses AdamW with a linear decay schedule (optional warmup) and keeps
the checkpoint with the best pooled argument F1 on the selection split.
"""

import copy
import hashlib
import json
import logging
import math
from collections.abc import Sequence
from pathlib import Path
from typing import Any, Literal

import torch
from pydantic import BaseModel, ConfigDict, Field, computed_field
from tqdm import tqdm

from pyeventfill.config import Modality, TrainingConfig, TrainingStrategy
from pyeventfill.corpus.records import EventInstance, fingerprint_instances, instance_statistics
from pyeventfill.evaluation.runner import evaluate
from pyeventfill.exceptions import ConfigurationError, LeakageError, TrainingAbortedError
from pyeventfill.matching.model import TemplateFillingModel, candidate_labels
from pyeventfill.matching.scoring import bce_loss
from pyeventfill.ontology.ontology import Ontology
from pyeventfill.utils.reproducibility import set_seed

logger = logging.getLogger(__name__)


class TrainingData(BaseModel, frozen=True):
    """Training and selection splits.

    Attributes:
        text: Textual training events.
        image: Visual training events.
        selection: Held-out events for checkpoint selection.
    """

    text: tuple[EventInstance, ...] = ()
    image: tuple[EventInstance, ...] = ()
    selection: tuple[EventInstance, ...] = ()

    def fingerprints(self) -> dict[str, str]:
        """SHA-256 of each non-empty split."""
        splits = {"text": self.text, "image": self.image, "selection": self.selection}
        return {name: fingerprint_instances(split) for name, split in splits.items() if split}

    def statistics(self) -> dict[str, dict[str, int]]:
        """Event counts of each non-empty split."""
        splits = {"text": self.text, "image": self.image, "selection": self.selection}
        return {name: instance_statistics(split) for name, split in splits.items() if split}

    def for_modality(self, modality: Modality) -> tuple[EventInstance, ...]:
        """Training events of one modality."""
        return self.text if modality is Modality.TEXT else self.image


class StepPlan(BaseModel, frozen=True):
    """Optimisation steps each modality gets."""

    text_steps: int = 0
    visual_steps: int = 0

    @property
    def total(self) -> int:
        """All steps."""
        return self.text_steps + self.visual_steps


def plan_steps(text_count: int, image_count: int, config: TrainingConfig) -> StepPlan:
    """Epochs times batches per epoch, per modality.

    Example:
        >>> plan_steps(64, 64, TrainingConfig())
        StepPlan(text_steps=50, visual_steps=20)
    """
    return StepPlan(
        text_steps=config.text_epochs * math.ceil(text_count / config.text_batch),
        visual_steps=config.visual_epochs * math.ceil(image_count / config.visual_batch),
    )


class StageRecord(BaseModel):
    """One training stage as it happened."""

    name: str
    modalities: list[Modality]
    planned: StepPlan
    steps: int = 0
    frozen: list[str] = Field(default_factory=list)
    trainable: list[str] = Field(default_factory=list)
    fingerprints_before: dict[str, str] = Field(default_factory=dict)
    fingerprints_after: dict[str, str] = Field(default_factory=dict)
    selected_step: int | None = None

    @computed_field  # type: ignore[prop-decorator]
    @property
    def frozen_unchanged(self) -> dict[str, bool]:
        """Whether each frozen component kept its parameters bit for bit."""
        return {
            name: self.fingerprints_before.get(name) == self.fingerprints_after.get(name)
            for name in self.frozen
        }


class EvaluationRecord(BaseModel, frozen=True):
    """Selection metrics at one step."""

    stage: str
    step: int
    mean_loss: float
    argument_f1: float
    text_argument_f1: float
    image_argument_f1: float


class RunManifest(BaseModel):
    """Everything needed to audit and repeat a run.

    Attributes:
        command: CLI subcommand or API entry point that produced the run.
        run_id: Stable id derived from the resolved config and data fingerprints.
        config: Resolved configuration.
        backends: Backend identities.
        dataset_fingerprints: SHA-256 per split.
        dataset_statistics: Document, sentence, image and event counts per
            split.
        strategy: Training strategy.
        stages: Stage records with parameter fingerprints.
        evaluations: Selection metrics over time.
        selected_checkpoint: ``stage:step`` of the kept weights.
        final_metrics: Metrics of the kept weights on the selection split.
        status: ``completed`` or ``aborted``.
        abort_reason: Why the run stopped early.
    """

    command: str = "train"
    run_id: str = ""
    config: dict[str, Any] = Field(default_factory=dict)
    backends: dict[str, dict[str, str | int]] = Field(default_factory=dict)
    dataset_fingerprints: dict[str, str] = Field(default_factory=dict)
    dataset_statistics: dict[str, dict[str, int]] = Field(default_factory=dict)
    strategy: TrainingStrategy = TrainingStrategy.JOINT
    stages: list[StageRecord] = Field(default_factory=list)
    evaluations: list[EvaluationRecord] = Field(default_factory=list)
    selected_checkpoint: str | None = None
    final_metrics: dict[str, float] = Field(default_factory=dict)
    status: Literal["running", "completed", "aborted"] = "running"
    abort_reason: str | None = None

    def frozen_unchanged(self) -> dict[str, bool]:
        """Frozen-component checks of every stage, keyed ``stage:component``."""
        return {
            f"{stage.name}:{name}": unchanged
            for stage in self.stages
            for name, unchanged in stage.frozen_unchanged.items()
        }

    def write(self, path: Path | str) -> Path:
        """Write the manifest as indented JSON."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = self.model_dump_json(indent=2)
        path.write_text(payload + "\n", encoding="utf-8")
        return path


class TrainResult(BaseModel):
    """Trained model, run manifest and the loss of every step."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    model: TemplateFillingModel
    manifest: RunManifest
    step_losses: list[float]


class _BatchStream:
    """Seeded epoch-wise shuffled batches of one modality."""

    def __init__(
        self,
        instances: Sequence[EventInstance],
        batch_size: int,
        steps: int,
        generator: torch.Generator,
    ) -> None:
        self.instances = list(instances)
        self.batch_size = batch_size
        self.remaining = steps if self.instances else 0
        self.generator = generator
        self._pending: list[list[int]] = []

    def next_batch(self) -> list[EventInstance]:
        if not self._pending:
            order = torch.randperm(len(self.instances), generator=self.generator).tolist()
            self._pending = [
                order[i : i + self.batch_size] for i in range(0, len(order), self.batch_size)
            ]
        self.remaining -= 1
        return [self.instances[i] for i in self._pending.pop(0)]


def _stage_plan(strategy: TrainingStrategy) -> list[tuple[str, tuple[Modality, ...]]]:
    match strategy:
        case TrainingStrategy.JOINT | TrainingStrategy.IMAGE_LOCKED:
            return [("joint", (Modality.TEXT, Modality.IMAGE))]
        case TrainingStrategy.TEXT_THEN_IMAGE:
            return [("text", (Modality.TEXT,)), ("image", (Modality.IMAGE,))]
        case TrainingStrategy.IMAGE_THEN_TEXT:
            return [("image", (Modality.IMAGE,)), ("text", (Modality.TEXT,))]


def _linear_schedule(total_steps: int, warmup_steps: int) -> Any:
    def lr_lambda(step: int) -> float:
        if step < warmup_steps:
            return float(step + 1) / float(max(1, warmup_steps))
        progress = (step - warmup_steps) / max(1, total_steps - warmup_steps)
        return max(0.0, 1.0 - progress)

    return lr_lambda


def batch_loss(model: TemplateFillingModel, batch: Sequence[EventInstance]) -> torch.Tensor | None:
    """Mean per-event loss over the events of a batch that have candidates."""
    losses: list[torch.Tensor] = []
    for instance in batch:
        if instance.candidate_count == 0:
            continue
        logits = model.score_event(instance)
        roles = model.ontology.get_event_type(instance.event_type).roles
        labels = candidate_labels(instance, roles).to(logits.device)
        losses.append(bce_loss(logits.float(), labels, from_logits=True))
    if not losses:
        return None
    return torch.stack(losses).mean()


def _abort(
    manifest: RunManifest,
    reason: str,
    output_dir: Path | None,
) -> TrainingAbortedError:
    manifest.status = "aborted"
    manifest.abort_reason = reason
    manifest_path = manifest.write(output_dir / "manifest.json") if output_dir else None
    logger.error("Training aborted: %s", reason)
    return TrainingAbortedError(reason, manifest_path)


def _selection_report(
    model: TemplateFillingModel,
    selection: Sequence[EventInstance],
    stage: str,
    step: int,
    mean_loss: float,
) -> EvaluationRecord:
    report = evaluate(model, selection)
    return EvaluationRecord(
        stage=stage,
        step=step,
        mean_loss=mean_loss,
        argument_f1=report.argument_f1,
        text_argument_f1=report.task("text").argument.f1,
        image_argument_f1=report.task("image").argument.f1,
    )


def _run_stage(
    model: TemplateFillingModel,
    data: TrainingData,
    config: TrainingConfig,
    record: StageRecord,
    manifest: RunManifest,
    step_losses: list[float],
    output_dir: Path | None,
) -> None:
    generator = torch.Generator().manual_seed(config.seed + len(manifest.stages))
    streams = {
        Modality.TEXT: _BatchStream(
            data.text if Modality.TEXT in record.modalities else (),
            config.text_batch,
            record.planned.text_steps,
            generator,
        ),
        Modality.IMAGE: _BatchStream(
            data.image if Modality.IMAGE in record.modalities else (),
            config.visual_batch,
            record.planned.visual_steps,
            generator,
        ),
    }
    total = record.planned.total
    if config.max_steps is not None:
        total = min(total, config.max_steps)

    parameters = [p for p in model.parameters() if p.requires_grad]
    if not parameters:
        raise ConfigurationError(f"Stage {record.name} has no trainable parameters")
    optimizer = torch.optim.AdamW(
        parameters, lr=config.learning_rate, weight_decay=config.weight_decay
    )
    scheduler = torch.optim.lr_scheduler.LambdaLR(
        optimizer, lr_lambda=_linear_schedule(total, config.warmup_steps)
    )

    text_batches = math.ceil(len(data.text) / config.text_batch) if data.text else 0
    default_interval = text_batches or math.ceil(len(data.image) / config.visual_batch) or 1
    interval = config.eval_interval or default_interval
    selection = [i for i in data.selection if i.modality in record.modalities]
    best_f1 = -1.0
    best_state: dict[str, torch.Tensor] | None = None
    window: list[float] = []

    def consider_checkpoint(step: int) -> None:
        nonlocal best_f1, best_state
        if not selection:
            return
        mean_loss = sum(window) / len(window) if window else float("nan")
        evaluation = _selection_report(model, selection, record.name, step, mean_loss)
        manifest.evaluations.append(evaluation)
        window.clear()
        logger.info(
            "%s step %d: loss %.4f, selection argument F1 %.4f",
            record.name,
            step,
            mean_loss,
            evaluation.argument_f1,
        )
        if evaluation.argument_f1 > best_f1:
            best_f1 = evaluation.argument_f1
            best_state = copy.deepcopy(model.state_dict())
            record.selected_step = step

    device_type = model.device.type
    model.train()
    progress = tqdm(total=total, desc=f"train:{record.name}", disable=not config.progress)
    for step in range(1, total + 1):
        remaining_text = streams[Modality.TEXT].remaining
        remaining_image = streams[Modality.IMAGE].remaining
        if remaining_text + remaining_image <= 0:
            break
        draw = float(torch.rand(1, generator=generator)) * (remaining_text + remaining_image)
        modality = Modality.TEXT if draw < remaining_text else Modality.IMAGE
        batch = streams[modality].next_batch()

        with torch.autocast(
            device_type=device_type, dtype=torch.bfloat16, enabled=config.mixed_precision
        ):
            loss = batch_loss(model, batch)
        record.steps = step
        if loss is not None:
            if not torch.isfinite(loss):
                progress.close()
                raise _abort(
                    manifest, f"Non-finite loss at {record.name} step {step}", output_dir
                )
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            if config.max_grad_norm is not None:
                torch.nn.utils.clip_grad_norm_(parameters, config.max_grad_norm)
            optimizer.step()
            value = float(loss.detach())
            step_losses.append(value)
            window.append(value)
            progress.set_postfix(loss=f"{value:.4f}", modality=modality.value)
        scheduler.step()
        progress.update(1)
        if step % interval == 0:
            consider_checkpoint(step)
    progress.close()

    if record.steps % interval != 0:
        consider_checkpoint(record.steps)
    if best_state is not None:
        model.load_state_dict(best_state)
        manifest.selected_checkpoint = f"{record.name}:{record.selected_step}"


def compute_run_id(config: dict[str, Any], fingerprints: dict[str, str]) -> str:
    payload = json.dumps({"config": config, "data": fingerprints}, sort_keys=True, default=str)
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


def train(
    model: TemplateFillingModel,
    data: TrainingData,
    config: TrainingConfig,
    output_dir: Path | None = None,
    resolved_config: dict[str, Any] | None = None,
) -> TrainResult:
    """Train a model under the configured strategy.

    Args:
        model: Freshly built (or pre-trained) model.
        data: Training and selection splits.
        config: Optimisation schedule and strategy.
        output_dir: Where a diagnostic manifest is written if training aborts.
        resolved_config: Full run configuration to record in the manifest.

    Returns:
        TrainResult holding the model with the selected weights loaded.

    Raises:
        ConfigurationError: If there is no training data, or the model lacks an
            encoder for a modality present in the data.
        TrainingAbortedError: If the loss becomes NaN or infinite.
    """
    if not data.text and not data.image:
        raise ConfigurationError("Training data is empty")
    for modality in Modality:
        if data.for_modality(modality) and modality not in model.modalities:
            raise ConfigurationError(
                f"Training data has {modality} events but the model has no {modality} encoder"
            )

    set_seed(config.seed)
    config_dump = resolved_config or {
        "model": model.config.model_dump(mode="json"),
        "training": config.model_dump(mode="json"),
    }
    fingerprints = data.fingerprints()
    manifest = RunManifest(
        run_id=compute_run_id(config_dump, fingerprints),
        config=config_dump,
        backends=model.describe(),
        dataset_fingerprints=fingerprints,
        dataset_statistics=data.statistics(),
        strategy=config.strategy,
    )
    step_losses: list[float] = []

    for name, modalities in _stage_plan(config.strategy):
        present = tuple(m for m in modalities if data.for_modality(m))
        if not present:
            logger.warning("Skipping stage %s: no %s training data", name, "/".join(modalities))
            continue
        if config.strategy is TrainingStrategy.IMAGE_LOCKED:
            frozen = ["vision_encoder"]
        elif len(modalities) == 1:
            frozen = [
                component
                for stage in manifest.stages
                for modality in stage.modalities
                for component in model.modality_components(modality)
            ]
        else:
            frozen = []
        trainable = [
            component
            for modality in present
            for component in model.modality_components(modality)
            if component not in frozen
        ]
        model.set_trainable(list(model.component_modules()), False)
        model.set_trainable(trainable, True)

        plan = plan_steps(
            len(data.text) if Modality.TEXT in present else 0,
            len(data.image) if Modality.IMAGE in present else 0,
            config,
        )
        record = StageRecord(
            name=name,
            modalities=list(present),
            planned=plan,
            frozen=sorted(set(frozen)),
            trainable=sorted(set(trainable)),
            fingerprints_before=model.fingerprints(),
        )
        manifest.stages.append(record)
        logger.info(
            "Stage %s: %d text + %d visual steps, frozen %s",
            name,
            plan.text_steps,
            plan.visual_steps,
            record.frozen or "none",
        )
        _run_stage(model, data, config, record, manifest, step_losses, output_dir)
        record.fingerprints_after = model.fingerprints()

    model.set_trainable(list(model.component_modules()), True)
    model.eval()
    if data.selection:
        final = evaluate(model, data.selection)
        manifest.final_metrics = {
            "argument_f1": final.argument_f1,
            "text_argument_f1": final.task("text").argument.f1,
            "image_argument_f1": final.task("image").argument.f1,
            "multimedia_argument_f1": final.task("multimedia").argument.f1,
        }
    manifest.status = "completed"
    logger.info(
        "Training finished after %d steps; kept %s",
        len(step_losses),
        manifest.selected_checkpoint,
    )
    return TrainResult(model=model, manifest=manifest, step_losses=step_losses)


def check_leakage(data: TrainingData, source: Ontology, target: Ontology) -> None:
    """Refuse target-ontology events in the training or selection stream.

    Raises:
        LeakageError: Naming the first leaked event.
    """
    if target.name == source.name:
        return
    for instance in (*data.text, *data.image, *data.selection):
        if instance.ontology != source.name:
            raise LeakageError(
                f"Event {instance.instance_id} is labeled in ontology '{instance.ontology}', "
                f"but transfer training may only see '{source.name}'"
            )


def transfer_train(
    model: TemplateFillingModel,
    data: TrainingData,
    config: TrainingConfig,
    target: Ontology,
    output_dir: Path | None = None,
    resolved_config: dict[str, Any] | None = None,
) -> TrainResult:
    """Train on a source ontology only, for zero-shot use on ``target``.

    The model keeps its source ontology; switch it with
    ``model.use_ontology(target)`` at prediction time.

    Raises:
        LeakageError: If any event is labeled in another ontology than the
            model's source ontology.
    """
    check_leakage(data, model.ontology, target)
    result = train(model, data, config, output_dir, resolved_config)
    result.manifest.config.setdefault("transfer", {})["target_ontology"] = target.name
    return result

