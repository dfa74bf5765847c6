"""Command-line interface.

Subcommands::

    pyeventfill train   --data synth.yaml [--selection held_out.jsonl]
    pyeventfill predict --checkpoint runs/x/checkpoint --data test.jsonl
    pyeventfill eval    --checkpoint runs/x/checkpoint --data test.jsonl --mode gold_triggers
    pyeventfill sweep   --checkpoint runs/x/checkpoint --data test.jsonl --grid 0.1,0.2,...
    pyeventfill ablate  --data synth.yaml --suite no_cross_attention,no_prompts
    pyeventfill synth   --spec synth.yaml

Every subcommand writes ``manifest.json`` to its output directory and refuses
to overwrite existing outputs unless ``--overwrite`` is given.
"""

import argparse
import logging
import sys
from collections.abc import Callable, Sequence
from enum import IntEnum
from pathlib import Path

import yaml

from pyeventfill import __version__
from pyeventfill.config import (
    CorpusSource,
    Modality,
    RunConfig,
    SourceFormat,
    load_run_config,
)
from pyeventfill.corpus.records import (
    EventInstance,
    fingerprint_instances,
    instance_statistics,
    write_jsonl,
)
from pyeventfill.corpus.sources import load_source, source_ontology
from pyeventfill.corpus.synthetic import (
    SyntheticSpec,
    generate_synthetic,
    load_synthetic_spec,
    oracle_f1,
)
from pyeventfill.evaluation.metrics import MetricReport
from pyeventfill.evaluation.runner import (
    EvaluationData,
    EvaluationMode,
    evaluate_modes,
    predict_events,
    sweep_thresholds,
)
from pyeventfill.exceptions import (
    ConfigurationError,
    DataError,
    OntologyError,
    TrainingAbortedError,
    ValidationError,
)
from pyeventfill.matching.model import TemplateFillingModel, build_model
from pyeventfill.ontology.ontology import Ontology, dump_ontology, resolve_ontology
from pyeventfill.training.ablation import parse_suite, run_ablation_suite, write_ablation_table
from pyeventfill.training.checkpoint import load_checkpoint, save_checkpoint
from pyeventfill.training.trainer import RunManifest, TrainingData, compute_run_id, train

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DEFAULT_GRID = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9"


class ExitCode(IntEnum):
    """Process exit codes."""

    OK = 0
    USAGE = 2
    DATA = 3
    NUMERIC = 4


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="Run configuration YAML")
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a config value, e.g. training.learning_rate=1e-4 (repeatable)",
    )
    common.add_argument("--output-dir", default=None, help="Run output directory")
    common.add_argument(
        "--overwrite", action="store_true", help="Replace outputs of an earlier run"
    )
    common.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging verbosity",
    )
    return common


def _threshold_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--text-threshold", type=float, default=None, help="tau for text")
    parser.add_argument("--visual-threshold", type=float, default=None, help="tau for images")


def _evaluation_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--checkpoint", type=Path, required=True, help="Checkpoint directory")
    parser.add_argument("--data", type=Path, default=None, help="Annotated events to run on")
    parser.add_argument(
        "--ontology",
        default=None,
        help="Evaluate in another ontology than the one the checkpoint was trained on",
    )
    parser.add_argument(
        "--mode",
        type=EvaluationMode,
        choices=list(EvaluationMode),
        default=EvaluationMode.GOLD_TRIGGERS,
        help="Event mentions and candidates to use",
    )
    parser.add_argument(
        "--triggers", type=Path, default=None, help="Predicted event mentions (pred_triggers)"
    )


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with all subcommands."""
    parser = argparse.ArgumentParser(
        prog="pyeventfill",
        description="Multimodal event argument extraction by template filling",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = _common_options()
    commands = parser.add_subparsers(dest="command", required=True)

    train_parser = commands.add_parser("train", parents=[common], help="Train a model")
    train_parser.add_argument(
        "--data", type=Path, action="append", default=[], help="Training corpus (repeatable)"
    )
    train_parser.add_argument("--selection", type=Path, default=None, help="Selection split")
    train_parser.add_argument("--strategy", default=None, help="Training strategy")
    train_parser.add_argument("--seed", type=int, default=None, help="Model and training seed")

    predict_parser = commands.add_parser(
        "predict", parents=[common], help="Write predicted arguments"
    )
    _evaluation_options(predict_parser)
    _threshold_options(predict_parser)

    eval_parser = commands.add_parser("eval", parents=[common], help="Score predictions")
    _evaluation_options(eval_parser)
    _threshold_options(eval_parser)

    sweep_parser = commands.add_parser("sweep", parents=[common], help="Sweep thresholds")
    _evaluation_options(sweep_parser)
    sweep_parser.add_argument("--grid", default=DEFAULT_GRID, help="Comma-separated text taus")
    sweep_parser.add_argument(
        "--visual-grid", default=None, help="Comma-separated image taus (default: --grid)"
    )

    ablate_parser = commands.add_parser("ablate", parents=[common], help="Run ablations")
    ablate_parser.add_argument(
        "--data", type=Path, action="append", default=[], help="Training corpus (repeatable)"
    )
    ablate_parser.add_argument("--selection", type=Path, default=None, help="Selection split")
    ablate_parser.add_argument("--evaluation", type=Path, default=None, help="Comparison split")
    ablate_parser.add_argument(
        "--suite",
        default="no_cross_attention,no_joint_prompts,no_prompts",
        help="Comma-separated ablation variants",
    )
    ablate_parser.add_argument("--seed", type=int, default=None, help="Model and training seed")

    synth_parser = commands.add_parser("synth", parents=[common], help="Generate synthetic data")
    synth_parser.add_argument("--spec", type=Path, default=None, help="SyntheticSpec YAML")
    synth_parser.add_argument("--seed", type=int, default=None, help="Generator seed")
    synth_parser.add_argument(
        "--splits", default="train,selection,test", help="Comma-separated split names"
    )
    return parser


def _parse_overrides(pairs: Sequence[str]) -> dict[str, str]:
    overrides: dict[str, str] = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise ConfigurationError(f"Override '{pair}' is not KEY=VALUE")
        overrides[key.strip()] = value
    return overrides


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Merge the config file, ``--set`` overrides and dedicated flags."""
    overrides = _parse_overrides(args.overrides)
    if args.output_dir is not None:
        overrides["output_dir"] = args.output_dir
    if args.overwrite:
        overrides["overwrite"] = "true"
    if getattr(args, "strategy", None) is not None:
        overrides["training.strategy"] = args.strategy
    if getattr(args, "seed", None) is not None and args.command != "synth":
        overrides["model.seed"] = str(args.seed)
        overrides["training.seed"] = str(args.seed)
    if getattr(args, "text_threshold", None) is not None:
        overrides["inference.text_threshold"] = str(args.text_threshold)
    if getattr(args, "visual_threshold", None) is not None:
        overrides["inference.visual_threshold"] = str(args.visual_threshold)
    config = load_run_config(args.config, overrides)

    data = config.data
    updates: dict[str, object] = {}
    if getattr(args, "data", None):
        if isinstance(args.data, list):
            updates["train"] = [CorpusSource.infer(path) for path in args.data]
        else:
            updates["evaluation"] = CorpusSource.infer(args.data)
    if getattr(args, "selection", None) is not None:
        updates["selection"] = CorpusSource.infer(args.selection)
    if getattr(args, "evaluation", None) is not None:
        updates["evaluation"] = CorpusSource.infer(args.evaluation)
    if getattr(args, "triggers", None) is not None:
        updates["triggers"] = args.triggers
    if updates:
        config = config.model_copy(update={"data": data.model_copy(update=updates)})
    return config


def prepare_output(config: RunConfig) -> Path:
    """Create the run directory, refusing to reuse a non-empty one without overwrite.

    Raises:
        ConfigurationError: If the directory holds outputs and overwrite is off.
    """
    output = config.output_dir
    if output.exists() and any(output.iterdir()) and not config.overwrite:
        raise ConfigurationError(
            f"{output} already holds outputs; pass --overwrite to replace them"
        )
    output.mkdir(parents=True, exist_ok=True)
    return output


def _manifest(
    command: str,
    config: RunConfig,
    datasets: dict[str, Sequence[EventInstance]],
    model: TemplateFillingModel | None = None,
) -> RunManifest:
    resolved = config.model_dump(mode="json")
    fingerprints = {name: fingerprint_instances(events) for name, events in datasets.items()}
    return RunManifest(
        command=command,
        run_id=compute_run_id(resolved, fingerprints),
        config=resolved,
        backends=model.describe() if model is not None else {},
        dataset_fingerprints=fingerprints,
        dataset_statistics={
            name: instance_statistics(events) for name, events in datasets.items()
        },
        strategy=config.training.strategy,
        status="completed",
    )


def _training_ontology(config: RunConfig, sources: Sequence[CorpusSource]) -> Ontology:
    for source in sources:
        generated = source_ontology(source)
        if generated is not None:
            return generated
    return resolve_ontology(config.data.ontology)


def _image_root(sources: Sequence[CorpusSource | None]) -> Path | None:
    for source in sources:
        if source is not None and source.image_root is not None:
            return source.image_root
    return None


def _training_data(config: RunConfig, ontology: Ontology) -> TrainingData:
    sources = config.data.train
    if not sources:
        raise ConfigurationError("No training data; pass --data or set data.train")
    instances = [event for source in sources for event in load_source(source, ontology)]
    if config.data.selection is not None:
        selection = load_source(config.data.selection, ontology)
    elif sources[0].format is SourceFormat.SYNTHETIC:
        selection = load_source(sources[0], ontology, split="selection")
    else:
        selection = []
        logger.warning("No selection split; the last checkpoint of each stage is kept")
    return TrainingData(
        text=tuple(e for e in instances if e.modality is Modality.TEXT),
        image=tuple(e for e in instances if e.modality is Modality.IMAGE),
        selection=tuple(selection),
    )


def _print_report(report: MetricReport) -> None:
    print(f"{'task':<12}{'P':>8}{'R':>8}{'F1':>8}   event F1")
    for task in ("text", "image", "multimedia"):
        metrics = report.task(task)
        counts = metrics.argument
        print(
            f"{task:<12}{counts.precision:>8.4f}{counts.recall:>8.4f}{counts.f1:>8.4f}"
            f"   {metrics.event.f1:.4f}"
        )


def cmd_train(config: RunConfig, args: argparse.Namespace) -> ExitCode:
    """Train, save the selected checkpoint and the run manifest."""
    ontology = _training_ontology(config, config.data.train)
    data = _training_data(config, ontology)
    output = prepare_output(config)
    model = build_model(config.model, ontology)
    model.image_root = _image_root([*config.data.train, config.data.selection])
    result = train(
        model,
        data,
        config.training,
        output_dir=output,
        resolved_config=config.model_dump(mode="json"),
    )
    save_checkpoint(result.model, output / "checkpoint", result.manifest)
    result.manifest.write(output / "manifest.json")
    for key, unchanged in result.manifest.frozen_unchanged().items():
        print(f"frozen {key}: {'unchanged' if unchanged else 'CHANGED'}")
    for name, value in sorted(result.manifest.final_metrics.items()):
        print(f"final {name}: {value:.4f}")
    return ExitCode.OK


def _evaluation_inputs(
    config: RunConfig, model: TemplateFillingModel
) -> tuple[list[EventInstance], list[EventInstance] | None]:
    if config.data.evaluation is None:
        raise ConfigurationError("No evaluation data; pass --data or set data.evaluation")
    gold = load_source(config.data.evaluation, model.ontology)
    triggers = None
    if config.data.triggers is not None:
        triggers = load_source(CorpusSource(path=config.data.triggers), model.ontology)
    for instance in [*gold, *(triggers or [])]:
        if instance.modality not in model.modalities:
            raise ConfigurationError(
                f"Event {instance.instance_id} is {instance.modality}, "
                "which the checkpoint cannot encode"
            )
    model.image_root = _image_root([config.data.evaluation])
    return gold, triggers


def _load_model(args: argparse.Namespace, config: RunConfig) -> TemplateFillingModel:
    model = load_checkpoint(args.checkpoint, device=config.model.device)
    if args.ontology is not None:
        model.use_ontology(resolve_ontology(args.ontology))
    return model


def cmd_predict(config: RunConfig, args: argparse.Namespace) -> ExitCode:
    """Write one prediction record per event mention."""
    model = _load_model(args, config)
    gold, triggers = _evaluation_inputs(config, model)
    output = prepare_output(config)
    match args.mode:
        case EvaluationMode.PRED_TRIGGERS:
            if triggers is None:
                raise DataError("pred_triggers mode needs --triggers")
            inputs = triggers
        case EvaluationMode.GOLD_TRIGGERS:
            inputs = gold
        case EvaluationMode.GOLD_CANDIDATES:
            inputs = [event.with_gold_candidates() for event in gold]
    predictions = predict_events(model, inputs, config.inference)
    count = write_jsonl(predictions, output / "predictions.jsonl")
    _manifest("predict", config, {"evaluation": inputs}, model).write(output / "manifest.json")
    print(f"{count} prediction records -> {output / 'predictions.jsonl'}")
    return ExitCode.OK


def cmd_eval(config: RunConfig, args: argparse.Namespace) -> ExitCode:
    """Score the checkpoint under one evaluation mode."""
    model = _load_model(args, config)
    gold, triggers = _evaluation_inputs(config, model)
    output = prepare_output(config)
    data = EvaluationData(gold=tuple(gold), triggers=tuple(triggers) if triggers else None)
    report = evaluate_modes(model, data, args.mode, config.inference)
    (output / "metrics.json").write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    manifest = _manifest("eval", config, {"evaluation": gold}, model)
    manifest.final_metrics = {
        f"{task}_argument_f1": report.task(task).argument.f1
        for task in ("text", "image", "multimedia")
    }
    manifest.write(output / "manifest.json")
    _print_report(report)
    return ExitCode.OK


def _grid(raw: str) -> list[float]:
    try:
        return [float(value) for value in raw.split(",") if value.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"Threshold grid '{raw}' is not a list of numbers") from exc


def cmd_sweep(config: RunConfig, args: argparse.Namespace) -> ExitCode:
    """Evaluate a grid of thresholds and write the sweep table."""
    model = _load_model(args, config)
    gold, _ = _evaluation_inputs(config, model)
    if args.mode is EvaluationMode.GOLD_CANDIDATES:
        gold = [event.with_gold_candidates() for event in gold]
    output = prepare_output(config)
    visual_grid = _grid(args.visual_grid) if args.visual_grid else None
    result = sweep_thresholds(model, gold, _grid(args.grid), visual_grid, config.inference)
    table = result.write_tsv(output / "sweep.tsv")
    best_text, best_visual = result.best_thresholds()
    manifest = _manifest("sweep", config, {"evaluation": gold}, model)
    manifest.final_metrics = {
        "best_text_threshold": best_text,
        "best_visual_threshold": best_visual,
    }
    manifest.write(output / "manifest.json")
    print(f"sweep table -> {table}")
    print(f"best tau_text={best_text:g} tau_vis={best_visual:g}")
    return ExitCode.OK


def cmd_ablate(config: RunConfig, args: argparse.Namespace) -> ExitCode:
    """Train and compare the baseline and each ablation variant."""
    variants = parse_suite(name for name in args.suite.split(",") if name.strip())
    ontology = _training_ontology(config, config.data.train)
    data = _training_data(config, ontology)
    if config.data.evaluation is not None:
        evaluation = load_source(config.data.evaluation, ontology)
    elif config.data.train[0].format is SourceFormat.SYNTHETIC:
        evaluation = load_source(config.data.train[0], ontology, split="test")
    else:
        evaluation = list(data.selection)
    output = prepare_output(config)
    rows = run_ablation_suite(
        config.model, config.training, ontology, data, evaluation, variants, output_dir=output
    )
    table = write_ablation_table(rows, output / "ablation.tsv")
    manifest = _manifest(
        "ablate",
        config,
        {"text": data.text, "image": data.image, "evaluation": evaluation},
    )
    manifest.final_metrics = {
        f"{row.variant.value}_argument_f1": row.report.argument_f1 for row in rows
    }
    manifest.write(output / "manifest.json")
    for row in rows:
        print(f"{row.variant.value:<20} argument F1 {row.report.argument_f1:.4f}")
    print(f"ablation table -> {table}")
    return ExitCode.OK


def cmd_synth(config: RunConfig, args: argparse.Namespace) -> ExitCode:
    """Generate synthetic splits as normalized JSON lines plus their ontology."""
    spec = load_synthetic_spec(args.spec) if args.spec is not None else SyntheticSpec()
    if args.seed is not None:
        spec = spec.model_copy(update={"seed": args.seed})
    splits = [name.strip() for name in args.splits.split(",") if name.strip()]
    if not splits:
        raise ConfigurationError("No split names given")
    output = prepare_output(config)
    datasets: dict[str, Sequence[EventInstance]] = {}
    for split in splits:
        corpus = generate_synthetic(spec.for_split(split))
        write_jsonl(corpus.instances, output / f"{split}.jsonl")
        datasets[split] = corpus.instances
        logger.info(
            "%s: oracle argument F1 %.4f",
            split,
            oracle_f1(list(corpus.instances), corpus.ontology, spec.seed),
        )
        print(f"{split}: {len(corpus.text)} text + {len(corpus.image)} image events")
    dump_ontology(corpus.ontology, output / "ontology.yaml")
    (output / "spec.yaml").write_text(
        yaml.safe_dump(spec.model_dump(mode="json"), sort_keys=False), encoding="utf-8"
    )
    _manifest("synth", config, datasets).write(output / "manifest.json")
    return ExitCode.OK


COMMANDS: dict[str, Callable[[RunConfig, argparse.Namespace], ExitCode]] = {
    "train": cmd_train,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "ablate": cmd_ablate,
    "synth": cmd_synth,
}


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point of the ``pyeventfill`` console script.

    Returns:
        0 on success, 2 for usage and configuration errors, 3 for data errors,
        4 when training aborts on a non-finite loss.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return ExitCode.OK if exc.code == 0 else ExitCode.USAGE
    logging.basicConfig(level=args.log_level, format=LOG_FORMAT)

    try:
        config = resolve_config(args)
        return COMMANDS[args.command](config, args)
    except TrainingAbortedError as exc:
        logger.error("%s (manifest: %s)", exc, exc.manifest_path)
        return ExitCode.NUMERIC
    except (ConfigurationError, OntologyError) as exc:
        logger.error("%s", exc)
        return ExitCode.USAGE
    except (DataError, ValidationError) as exc:
        logger.error("%s", exc)
        return ExitCode.DATA


if __name__ == "__main__":
    sys.exit(main())
