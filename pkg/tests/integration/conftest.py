#!/usr/bin/env python3
"""
Pytest configuration and shared fixtures for integration tests
Fixtures defined here are automatically available to all integration test files.
"""

import sys
import os
import pytest

# Add project root to sys.path FIRST - this must happen before any imports
# that depend on the project structure
project_root = os.path.abspath(os.path.join(os.path.dirname(__file__), '..', '..'))
if project_root not in sys.path:
    sys.path.insert(0, project_root)


@pytest.fixture
def run_study(tmp_path):
    """Runs a named study from the shipped defaults plus overrides, writing under tmp_path"""
    from pipelines.experiment_config import load_experiment_config
    from pipelines.studies import run

    def _run(name, write=False, **overrides):
        overrides.setdefault('output_dir', str(tmp_path / 'results'))
        config = load_experiment_config(name, overrides=overrides)
        return config, run(config, write=write)

    return _run


@pytest.fixture
def snelson_study(snelson_dataset, run_study):
    """run_study for the Snelson registry entry; skips when the data is absent"""
    return run_study


@pytest.fixture
def pumadyn_study(run_study):
    """run_study for pumadyn32nm; skips when PUMADYN_DATA_PATH is not set"""
    path = os.getenv('PUMADYN_DATA_PATH')
    if not path or not os.path.isfile(path):
        pytest.skip('PUMADYN_DATA_PATH is not set or does not point at a file')
    return run_study


def synthetic_source(dim, n_train, n_test, seed=0, lengthscale=1.5, noise_variance=0.01):
    """Inline synthetic data block matching the synthetic-4d registry entry"""
    return {
        'dataset': None,
        'source': {'kind': 'synthetic', 'dim': dim, 'n_train': n_train, 'n_test': n_test, 'seed': seed,
                   'signal_variance': 1.0, 'lengthscale': lengthscale, 'noise_variance': noise_variance,
                   'input_distribution': 'GAUSSIAN', 'input_scale': 1.0},
    }


@pytest.fixture
def synthetic_data():
    """Factory for inline synthetic data blocks"""
    return synthetic_source
