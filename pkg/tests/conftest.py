"""Shared fixtures and strategies for the test suite."""

import numpy as np
import pytest

from mmlppca import SimConfig, generate_dataset


@pytest.fixture
def strong_factor_data():
    """Deterministic 200x5 dataset with one well-separated planted factor."""
    cfg = SimConfig(n_samples=200, k=5, true_rank=1, replications=1, true_alphas=(3.0,))
    return generate_dataset(cfg, 0)


@pytest.fixture
def strong_factor_csv(tmp_path, strong_factor_data):
    path = tmp_path / "strong.csv"
    np.savetxt(path, strong_factor_data, delimiter=",")
    return str(path)
