import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

TINY = dict(train_scenes=2, train_arrays_per_scene=2, train_array_pool=3, val_scenes=1, val_arrays_per_scene=2,
            eval_scenes=2, eval_arrays_per_scene=2, synthetic_clips=10, synthetic_seconds=2.5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """A five-scene dataset (dry and wet, one and two sources) shared by the pipeline tests."""
    from ambinet.dataset import DatasetConfig, build_dataset
    root = tmp_path_factory.mktemp("tiny")
    manifest = build_dataset(root, DatasetConfig(**TINY), seed=3)
    return root, manifest
