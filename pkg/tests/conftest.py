#!/usr/bin/env python3
"""
Pytest configuration and shared fixtures
Fixtures defined here are automatically available to all test files.
"""

import sys
import os
import pytest

# Add project root to sys.path FIRST - this must happen before any imports
# that depend on the project structure (like config.config)
project_root = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
if project_root not in sys.path:
    sys.path.insert(0, project_root)

import numpy as np

RUN_SLOW_ENV = 'SPARSEGP_RUN_SLOW'


def pytest_configure(config):
    config.addinivalue_line('markers', f'slow: long-running reproduction, set {RUN_SLOW_ENV}=1 to run')


def pytest_collection_modifyitems(config, items):
    if os.getenv(RUN_SLOW_ENV) == '1':
        return
    skip_slow = pytest.mark.skip(reason=f'slow test; set {RUN_SLOW_ENV}=1 to run')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def tight_jitter():
    """Jitter ladder starting far below the default, for exact-identity checks"""
    from sparsegp.kernels import JitterPolicy
    return JitterPolicy(initial_jitter=1e-10, escalation_factor=10.0, max_jitter=1e-2)


@pytest.fixture
def make_problem():
    """Factory for small random (dataset, hyperparameters, inducing set) triples"""
    from sparsegp.data import make_rng
    from sparsegp.kernels import Hyperparameters
    from sparsegp.models import Dataset, InducingSet

    def _make(seed=0, N=8, M=4, d=2, noise_variance=None):
        rng = make_rng(seed)
        X = rng.uniform(-2.0, 2.0, size=(N, d))
        y = np.sin(X.sum(axis=1)) + 0.1 * rng.standard_normal(N)
        hyper = Hyperparameters.create(
            float(rng.uniform(0.5, 2.0)),
            rng.uniform(0.5, 2.0, size=d),
            float(rng.uniform(0.05, 0.5)) if noise_variance is None else noise_variance,
        )
        Z = rng.uniform(-2.0, 2.0, size=(M, d))
        return Dataset(X, y), hyper, InducingSet(Z)

    return _make


@pytest.fixture
def sine_dataset():
    """60 noisy samples of a 1-D sine, spread over [-3, 3]"""
    from sparsegp.data import make_rng
    from sparsegp.models import Dataset
    rng = make_rng(7)
    X = np.sort(rng.uniform(-3.0, 3.0, size=60))[:, None]
    y = np.sin(2.0 * X[:, 0]) + 0.1 * rng.standard_normal(60)
    return Dataset(X, y)


@pytest.fixture
def xy_file(tmp_path):
    """Two-column text file with a comment and a blank line"""
    path = tmp_path / 'data.txt'
    path.write_text('# x y\n0.0 1.0\n1.0 2.5\n\n2.0 0.5\n3.0 -1.0\n')
    return str(path)


@pytest.fixture(scope='session')
def snelson_dataset():
    """The 200-point Snelson training set; skips when SNELSON_DATA_DIR is not set"""
    from sparsegp.data import DataSource, load_xy
    data_dir = os.getenv('SNELSON_DATA_DIR')
    if not data_dir:
        pytest.skip('SNELSON_DATA_DIR is not set')
    inputs = os.path.join(data_dir, 'train_inputs')
    outputs = os.path.join(data_dir, 'train_outputs')
    if not (os.path.isfile(inputs) and os.path.isfile(outputs)):
        pytest.skip(f'Snelson files not found in {data_dir}')
    return load_xy(DataSource.snelson(inputs, outputs))


@pytest.fixture
def isolated_output(tmp_path, monkeypatch):
    """Points SPARSEGP_OUTPUT_DIR at a temporary directory"""
    out = tmp_path / 'results'
    monkeypatch.setenv('SPARSEGP_OUTPUT_DIR', str(out))
    return str(out)
