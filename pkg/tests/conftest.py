from __future__ import annotations

import numpy as np
import pytest

from cartal.classifier import TrainConfig
from cartal.experiment import ExperimentConfig, TestSetSpec
from cartal.pool import SyntheticSourceSpec


def three_source_specs(n=120, d=2, flip_source="gamma", flip=0.3, scale=3.0):
    """Three Gaussian sources with shared geometry; one carries label noise."""
    rng = np.random.default_rng(1234)
    base = rng.standard_normal((3, d))
    centroids = tuple(tuple(float(v) for v in scale * row / np.linalg.norm(row)) for row in base)
    specs = []
    for name in ("alpha", "beta", "gamma"):
        specs.append(SyntheticSourceSpec(
            name=name, n=n, class_centroids=centroids, noise_scale=1.0,
            label_flip_rate=flip if name == flip_source else 0.0,
        ))
    return specs


def tiny_config(**overrides) -> ExperimentConfig:
    """Small, fast experiment config for unit tests (seconds, not minutes)."""
    defaults = dict(
        synthetic_sources=tuple(three_source_specs(n=120)),
        per_source_cap=1000,
        val_fraction=0.1,
        data_seed=5,
        test_sets=(TestSetSpec("clean", synthetic_sources=tuple(three_source_specs(n=60, flip=0.0))),),
        seed_size=20,
        k=10,
        rounds=2,
        strategies=("random", "mcme"),
        seeds=(1, 2),
        hidden_dims=(8,),
        dropout_rate=0.3,
        training=TrainConfig(max_epochs=5, patience=3, rng_seed=0),
        cartography_training=TrainConfig(max_epochs=3, patience=3, eval_interval=0.5),
        mc_samples=4,
    )
    defaults.update(overrides)
    return ExperimentConfig(**defaults)


@pytest.fixture
def small_config():
    return tiny_config()
