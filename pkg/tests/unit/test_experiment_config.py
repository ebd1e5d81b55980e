#!/usr/bin/env python3
"""
Unit tests for experiment configuration loading and validation
"""

import pytest
import yaml


def write_config(tmp_path, content):
    path = tmp_path / 'user.yaml'
    path.write_text(yaml.safe_dump(content))
    return str(path)


class TestDeepMerge:
    """Test deep_merge"""

    def test_nested_override(self):
        """Test nested dicts merge and scalars replace without mutating the base"""
        from pipelines.experiment_config import deep_merge

        base = {'optimizer': {'restarts': 1, 'memory': 10}, 'seed': 0}
        merged = deep_merge(base, {'optimizer': {'restarts': 4}, 'seed': 9})

        assert merged == {'optimizer': {'restarts': 4, 'memory': 10}, 'seed': 9}
        assert base['optimizer']['restarts'] == 1


class TestLoadExperimentConfig:
    """Test load_experiment_config against the shipped YAML defaults"""

    def test_defaults_for_sweep(self, isolated_output):
        """Test the sweep-add defaults resolve"""
        from pipelines.experiment_config import load_experiment_config
        from sparsegp.models import Method

        config = load_experiment_config('sweep-add')

        assert config.methods == (Method.VFE, Method.FITC)
        assert config.num_inducing == (7,)
        assert config.options == {'grid_points': 200, 'include_inducing': True}
        assert config.jitter.initial_jitter == pytest.approx(1e-6)
        assert config.output_dir == isolated_output

    def test_fit_requires_num_inducing(self, isolated_output):
        """Test a missing M is a UsageError naming the field"""
        from pipelines.experiment_config import load_experiment_config
        from sparsegp.errors import UsageError

        with pytest.raises(UsageError) as excinfo:
            load_experiment_config('fit')

        assert excinfo.value.field == 'num_inducing'

    def test_user_file_and_overrides(self, tmp_path, isolated_output):
        """Test a user file merges over defaults and overrides win last"""
        from pipelines.experiment_config import load_experiment_config

        path = write_config(tmp_path, {'num_inducing': 12, 'optimizer': {'restarts': 3}, 'seed': 4})
        config = load_experiment_config('fit', path, overrides={'seed': 8, 'jobs': 2})

        assert config.num_inducing == (12,)
        assert config.optimizer.restarts == 3
        assert config.optimizer.max_iterations == 1000
        assert config.seed == 8
        assert config.optimizer.seed == 8
        assert config.jobs == 2
        assert config.to_dict()['experiment'] == 'fit'

    def test_missing_user_file(self, tmp_path, isolated_output):
        """Test an absent --config file is a usage error"""
        from pipelines.experiment_config import load_experiment_config
        from sparsegp.errors import UsageError

        with pytest.raises(UsageError) as excinfo:
            load_experiment_config('fit', str(tmp_path / 'nope.yaml'))

        assert excinfo.value.field == 'config'

    def test_unknown_experiment(self):
        """Test an unknown experiment name is rejected"""
        from pipelines.experiment_config import load_experiment_config
        from sparsegp.errors import UsageError

        with pytest.raises(UsageError, match='experiment'):
            load_experiment_config('predict-everything')

    def test_regime_ladder(self, isolated_output):
        """Test the regime-study ladder and NESTED init"""
        from pipelines.experiment_config import load_experiment_config

        config = load_experiment_config('regime-study')

        assert config.num_inducing == (16, 32, 64, 128, 256, 512, 1024)
        assert config.init == 'NESTED'

    def test_output_dir_override(self, tmp_path, isolated_output):
        """Test an explicit output_dir override beats the environment"""
        from pipelines.experiment_config import load_experiment_config

        config = load_experiment_config('sweep-add', overrides={'output_dir': str(tmp_path / 'elsewhere')})

        assert config.output_dir == str(tmp_path / 'elsewhere')


class TestBuildExperimentConfig:
    """Test field-level validation in build_experiment_config"""

    def _merged(self, **overrides):
        merged = {'data': {'dataset': 'snelson'}, 'methods': ['FULL', 'VFE'], 'num_inducing': 5}
        merged.update(overrides)
        return merged

    @pytest.mark.parametrize('overrides,field', [
        ({'restarts': 2}, 'restarts'),
        ({'methods': ['VFE', 'SVGP']}, 'methods[1]'),
        ({'methods': []}, 'methods'),
        ({'num_inducing': 0}, 'num_inducing'),
        ({'num_inducing': 2.5}, 'num_inducing'),
        ({'init': 'NESTED'}, 'init'),
        ({'init': 'GRID'}, 'init'),
        ({'jobs': 0}, 'jobs'),
        ({'seed': -1}, 'seed'),
        ({'logging': {'level': 'LOUD'}}, 'logging.level'),
        ({'optimizer': {'restarts': 0}}, 'optimizer.restarts'),
        ({'optimizer': {'line_search': 'wolfe'}}, 'optimizer.line_search'),
        ({'optimizer': {'objective_tolerance': -1.0}}, 'optimizer.objective_tolerance'),
        ({'jitter': {'initial_jitter': 0}}, 'jitter.initial_jitter'),
        ({'jitter': {'ladder': 1.0}}, 'jitter.ladder'),
        ({'data': {'dataset': 'mnist'}}, 'data.dataset'),
        ({'data': {'dataset': 'snelson', 'source': {'kind': 'xy', 'path': 'a'}}}, 'data'),
        ({'data': {'source': {'path': 'a'}}}, 'data.source'),
        ({'data': {'dataset': 'snelson', 'shuffle': True}}, 'data.shuffle'),
        ({'data': {'dataset': 'snelson', 'subset': {'n': 10, 'rule': 'LAST'}}}, 'data.subset.rule'),
        ({'data': {'dataset': 'snelson', 'subset': {'rule': 'FIRST'}}}, 'data.subset'),
    ])
    def test_invalid_fields(self, overrides, field):
        """Test each invalid setting raises a UsageError naming its dotted path"""
        from pipelines.experiment_config import build_experiment_config
        from sparsegp.errors import UsageError

        with pytest.raises(UsageError) as excinfo:
            build_experiment_config('fit', self._merged(**overrides))

        assert excinfo.value.field == field
        assert str(excinfo.value).startswith(f'{field}: ')

    def test_experiment_specific_keys(self):
        """Test options allowed for one experiment are rejected by another"""
        from pipelines.experiment_config import build_experiment_config
        from sparsegp.errors import UsageError

        with pytest.raises(UsageError) as excinfo:
            build_experiment_config('fit', self._merged(grid_points=50))

        assert excinfo.value.field == 'grid_points'

    def test_sweep_rejects_full(self):
        """Test sweep-add needs sparse methods"""
        from pipelines.experiment_config import build_experiment_config
        from sparsegp.errors import UsageError

        with pytest.raises(UsageError, match='sparse'):
            build_experiment_config('sweep-add', self._merged())

    def test_recover_zx_needs_no_inducing_count(self):
        """Test recover-zx places Z at X and takes no num_inducing"""
        from pipelines.experiment_config import build_experiment_config

        merged = self._merged()
        del merged['num_inducing']
        config = build_experiment_config('recover-zx', merged)

        assert config.num_inducing == ()
        assert config.single_num_inducing is None

    def test_ard_options(self):
        """Test ard-study parses its subset and counts"""
        from pipelines.experiment_config import build_experiment_config
        from sparsegp.data import SubsetRule

        config = build_experiment_config('ard-study', self._merged(
            full_subset={'n': 64, 'rule': 'seeded_random', 'seed': 2}, frozen_iterations=5, top_lengthscales=3))

        assert config.options['full_subset'].n == 64
        assert config.options['full_subset'].rule is SubsetRule.SEEDED_RANDOM
        assert config.options['frozen_iterations'] == 5

    def test_inline_source(self):
        """Test an inline data source with standardization"""
        from pipelines.experiment_config import build_experiment_config

        config = build_experiment_config('fit', self._merged(
            data={'source': {'kind': 'xy', 'path': 'data.txt'}, 'standardize': True}))

        assert config.data.dataset is None
        assert config.data.source == {'kind': 'xy', 'path': 'data.txt'}
        assert config.data.standardize is True
