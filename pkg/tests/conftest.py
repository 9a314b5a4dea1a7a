"""
Pytest configuration and shared fixtures for INVSEG tests.

This module provides common test fixtures for:
- Seeded random generators
- Toy model specs (float64, two levels)
- Small synthetic datasets
"""
import pytest
import numpy as np
from pathlib import Path

# Add project root to Python path for imports
import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.data import SyntheticConfig, generate_synthetic
from src.models import Architecture, ModelSpec
from src.tensor import Precision


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="Run slow training checks")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


# ============================================
# Random Fixtures
# ============================================

@pytest.fixture
def rng():
    """Fresh generator with a fixed seed for every test."""
    return np.random.default_rng(1234)


# ============================================
# Model Fixtures
# ============================================

@pytest.fixture
def toy_spec():
    """
    Factory for small float64 specs: 2 input channels, 3 classes, 16^3 patches.
    """
    def make(arch: Architecture = Architecture.FULLY_INVRES, **overrides) -> ModelSpec:
        fields = dict(
            arch=arch,
            in_channels=2,
            num_classes=3,
            levels=2,
            base_width=4,
            blocks_per_level=1,
            patch_size=16,
            zero_init=False,
            precision=Precision.F64,
        )
        fields.update(overrides)
        return ModelSpec(**fields)

    return make


# ============================================
# Data Fixtures
# ============================================

@pytest.fixture
def small_config():
    """16^3 volumes, 3 classes, 2 modalities."""
    return SyntheticConfig(size=16, num_classes=3, num_modalities=2)


@pytest.fixture
def small_dataset(small_config):
    """Three deterministic synthetic volumes."""
    return generate_synthetic(seed=7, num_volumes=3, config=small_config)
