"""Shared fixtures."""

import numpy as np
import pytest

from depthkit.config import ModelConfig
from depthkit.tensor import precision


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    """Tests never see the developer's DEPTHNET_* overrides."""
    for name in ("DEPTHNET_PRECISION", "DEPTHNET_DEBUG", "DEPTHNET_LOG_LEVEL"):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def float64():
    """Build tensors and parameters in 64-bit inside the test."""
    with precision(64):
        yield


@pytest.fixture
def tiny_config():
    return ModelConfig(base_channels=4, n_bins=8)


@pytest.fixture
def small_config():
    return ModelConfig(base_channels=8, n_bins=16)
