"""Shared fixtures for pyeventfill tests."""

import os

import numpy as np
import pytest
from hypothesis import settings

from pyeventfill.config import (
    BackendConfig,
    BackendFamily,
    ModelConfig,
    TrainingConfig,
    reset_config,
)
from pyeventfill.corpus.synthetic import SyntheticSpec, generate_synthetic
from pyeventfill.matching.model import build_model
from pyeventfill.ontology.ontology import get_builtin_ontology
from pyeventfill.training.trainer import TrainingData, train

settings.register_profile("fast", max_examples=5)
settings.register_profile("debugger", report_multiple_bugs=False)
settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "fast"))

np.seterr(all="warn")


@pytest.fixture(autouse=True)
def fresh_config():
    """Every test starts from the default global configuration."""
    reset_config()
    yield
    reset_config()


@pytest.fixture(scope="session")
def m2e2_ontology():
    """Built-in M2E2 ontology."""
    return get_builtin_ontology("m2e2")


@pytest.fixture(scope="session")
def small_spec():
    """A corpus spec small enough to train on in a test."""
    return SyntheticSpec(seed=3, num_documents=2, events_per_document=2, num_event_types=3)


@pytest.fixture(scope="session")
def small_corpus(small_spec):
    """Four text and four image events."""
    return generate_synthetic(small_spec)


@pytest.fixture
def small_model_config():
    """Synthetic backends of width 32."""
    return ModelConfig(
        text_backend=BackendConfig(family=BackendFamily.ENCODER_DECODER_TEXT, hidden_size=32),
        vision_backend=BackendConfig(family=BackendFamily.VISION, hidden_size=32),
        query_backend=BackendConfig(family=BackendFamily.ENCODER_DECODER_TEXT, hidden_size=32),
        hidden_size=32,
    )


@pytest.fixture
def quick_training():
    """One epoch per modality, no progress bar."""
    return TrainingConfig(
        text_epochs=1,
        visual_epochs=1,
        text_batch=2,
        visual_batch=2,
        learning_rate=1e-3,
        progress=False,
    )


@pytest.fixture(scope="session")
def overfit_spec():
    """Eight event types of two to five roles, 64 events per modality."""
    return SyntheticSpec(
        seed=11,
        num_event_types=8,
        min_roles=2,
        max_roles=5,
        num_documents=16,
        events_per_document=4,
        signal_strength=1.0,
    )


@pytest.fixture(scope="session")
def overfit_corpus(overfit_spec):
    """Training split of the overfit spec."""
    return generate_synthetic(overfit_spec)


@pytest.fixture(scope="session")
def overfit_run(overfit_corpus):
    """Joint training for exactly 200 steps on the overfit corpus."""
    model = build_model(ModelConfig(dropout=0.1), overfit_corpus.ontology)
    config = TrainingConfig(
        text_epochs=50,
        visual_epochs=50,
        text_batch=32,
        visual_batch=32,
        learning_rate=2e-3,
        weight_decay=0.0,
        max_grad_norm=1.0,
        progress=False,
    )
    data = TrainingData(text=overfit_corpus.text, image=overfit_corpus.image)
    return train(model, data, config)
