"""Saving and restoring trained models.

A checkpoint is a directory::

    model.pt             state dict
    model_config.json    ModelConfig
    ontology.yaml        ontology the model was trained on
    manifest.json        RunManifest of the training run
"""

import logging
from pathlib import Path

import pydantic
import torch

from pyeventfill.config import ModelConfig
from pyeventfill.exceptions import IngestionError
from pyeventfill.matching.model import TemplateFillingModel, build_model
from pyeventfill.ontology.ontology import dump_ontology, load_ontology
from pyeventfill.training.trainer import RunManifest

logger = logging.getLogger(__name__)

WEIGHTS_FILE = "model.pt"
MODEL_CONFIG_FILE = "model_config.json"
ONTOLOGY_FILE = "ontology.yaml"
MANIFEST_FILE = "manifest.json"


def save_checkpoint(
    model: TemplateFillingModel,
    directory: Path | str,
    manifest: RunManifest | None = None,
) -> Path:
    """Write a model, its configuration and ontology, and optionally a manifest.

    Returns:
        The checkpoint directory.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    torch.save(model.state_dict(), directory / WEIGHTS_FILE)
    (directory / MODEL_CONFIG_FILE).write_text(
        model.config.model_dump_json(indent=2) + "\n", encoding="utf-8"
    )
    dump_ontology(model.ontology, directory / ONTOLOGY_FILE)
    if manifest is not None:
        manifest.write(directory / MANIFEST_FILE)
    logger.info("Saved checkpoint to %s", directory)
    return directory


def load_checkpoint(
    directory: Path | str,
    device: str | None = None,
) -> TemplateFillingModel:
    """Rebuild a model from a checkpoint directory.

    Args:
        directory: Directory written by ``save_checkpoint``.
        device: Target device; defaults to the device in the saved config.

    Raises:
        IngestionError: If a file is missing or unreadable.
    """
    directory = Path(directory)
    for name in (WEIGHTS_FILE, MODEL_CONFIG_FILE, ONTOLOGY_FILE):
        if not (directory / name).is_file():
            raise IngestionError("Incomplete checkpoint", directory / name)

    try:
        config = ModelConfig.model_validate_json(
            (directory / MODEL_CONFIG_FILE).read_text(encoding="utf-8")
        )
    except (OSError, pydantic.ValidationError) as exc:
        config_path = directory / MODEL_CONFIG_FILE
        raise IngestionError(f"Invalid model config ({exc})", config_path) from exc
    if device is not None:
        config = config.model_copy(update={"device": device})

    model = build_model(config, load_ontology(directory / ONTOLOGY_FILE))
    try:
        state = torch.load(directory / WEIGHTS_FILE, map_location=config.device, weights_only=True)
        model.load_state_dict(state)
    except (OSError, RuntimeError) as exc:
        raise IngestionError(f"Cannot restore weights ({exc})", directory / WEIGHTS_FILE) from exc
    model.eval()
    logger.info("Loaded checkpoint from %s", directory)
    return model


def load_manifest(directory: Path | str) -> RunManifest:
    """Read the manifest stored next to a checkpoint.

    Raises:
        IngestionError: If there is no readable manifest.
    """
    path = Path(directory) / MANIFEST_FILE
    try:
        return RunManifest.model_validate_json(path.read_text(encoding="utf-8"))
    except (OSError, pydantic.ValidationError) as exc:
        raise IngestionError(f"Cannot read manifest ({exc})", path) from exc
