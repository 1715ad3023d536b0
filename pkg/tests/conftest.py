"""Shared fixtures: grids and small synthetic datasets reused across tests."""

import numpy as np
import pytest

from cloudresp import dataset as dsmod
from cloudresp import grid as gridmod
from cloudresp import pipeline as pipemod
from cloudresp import training as trainmod


@pytest.fixture(scope="session")
def grid0():
    return gridmod.get_grid(0)


@pytest.fixture(scope="session")
def grid1():
    return gridmod.get_grid(1)


@pytest.fixture(scope="session")
def grid2():
    return gridmod.get_grid(2)


@pytest.fixture(scope="session")
def grid3():
    return gridmod.get_grid(3)


@pytest.fixture(scope="session")
def raw_l1():
    """Small raw synthetic dataset at level 1 (default structure, 480 months)."""
    spec = dsmod.default_synthetic_spec(grid_level=1, n_months=480, seed=42)
    return dsmod.generate_synthetic(spec)


@pytest.fixture(scope="session")
def anomaly_l1(raw_l1):
    return pipemod.compute_anomalies(raw_l1.dataset)


def high_snr_spec(grid_level=1, n_months=2400, seed=11, lag=2):
    """Synthetic spec with a strong, recoverable planted operator at one lag."""
    sigma = dict(zip(dsmod.ALL_IDS, (4, 2.5, 3, 2, 1.5, 1.5, 8.0, 0.06, 0.08)))
    gains = {lag: {"tas": {"sw_cre_toa": -0.6}, "pr": {"lw_cre_toa": 0.3},
                   "psl": {"sw_cre_toa": 30.0}}}
    return dsmod.default_synthetic_spec(
        grid_level=grid_level, n_months=n_months, seed=seed,
        planted_gains=gains, noise_sigma=sigma)


def recovery_train_config(**overrides):
    """Training configuration tuned for planted-operator recovery at toy widths."""
    kw = dict(epochs=30, initial_lr=1e-2, batch_size=8,
              hidden_sizes=(128, 128), seed=3)
    kw.update(overrides)
    return trainmod.TrainConfig(**kw)


@pytest.fixture(scope="session")
def linear_suite_l1(grid1):
    """Suite of two identical single-layer linear models (identity, no LN)."""
    from cloudresp.mlp import init_model

    rng = np.random.default_rng(7)
    n_v = grid1.n_vertices
    base = init_model(1, 1, hidden_sizes=(), seed=7,
                      activation="identity", use_layer_norm=False)
    A = rng.standard_normal((3 * n_v, 6 * n_v)) * 0.01
    base.weights = [A.copy()]
    base.biases = [np.zeros(3 * n_v)]
    other = init_model(2, 1, hidden_sizes=(), seed=7,
                       activation="identity", use_layer_norm=False)
    other.weights = [A.copy()]
    other.biases = [np.zeros(3 * n_v)]
    return trainmod.LagSuite(models={1: base, 2: other}, grid_level=1), A
