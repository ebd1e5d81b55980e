#!/usr/bin/env python3
"""
Unit tests for data loading and the experiment studies on small synthetic problems
"""

import os

import numpy as np
import pytest


def synthetic_source(dim=1, n_train=30, n_test=15, **extra):
    source = {'kind': 'synthetic', 'dim': dim, 'n_train': n_train, 'n_test': n_test,
              'lengthscale': 1.0, 'noise_variance': 0.01, 'seed': 3}
    source.update(extra)
    return source


@pytest.fixture
def study_config(tmp_path):
    """Factory for validated experiment configs writing under tmp_path"""
    from pipelines.experiment_config import build_experiment_config

    def _make(name, source=None, **settings):
        merged = {
            'data': {'source': source or synthetic_source()},
            'methods': ['FULL', 'FITC', 'VFE'],
            'num_inducing': 5,
            'optimizer': {'max_iterations': 25},
            'output_dir': str(tmp_path / 'results'),
        }
        merged.update(settings)
        return build_experiment_config(name, merged)

    return _make


class TestLoadData:
    """Test load_data"""

    def test_synthetic_description(self, study_config):
        """Test synthetic draws record their true hyperparameters and content hash"""
        from pipelines.studies import load_data
        from sparsegp.data import content_hash

        data = load_data(study_config('fit'))

        assert data.train.num_points == 30
        assert data.test.num_points == 15
        assert data.description['content_hash'] == content_hash(data.train)
        assert data.description['true_hyperparameters'] is not None
        assert data.description['standardized'] is False

    def test_xy_standardized_with_test_file(self, study_config, xy_file):
        """Test the training transform is applied to the test set"""
        from pipelines.studies import load_data

        config = study_config('fit', data={'source': {'kind': 'xy', 'path': xy_file}, 'standardize': True,
                                           'test': {'kind': 'xy', 'path': xy_file}})
        data = load_data(config)

        assert data.train.y.mean() == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(data.test.y, data.train.y)
        assert data.description['transform']['y_std'] > 0

    def test_file_order_split(self, study_config, xy_file):
        """Test n_train/n_test split a single file in file order"""
        from pipelines.studies import load_data

        data = load_data(study_config('fit', source={'kind': 'xy', 'path': xy_file, 'n_train': 2, 'n_test': 2}))

        np.testing.assert_array_equal(data.train.X[:, 0], [0.0, 1.0])
        np.testing.assert_array_equal(data.test.X[:, 0], [2.0, 3.0])

    def test_subset_too_large(self, study_config):
        """Test a subset larger than the data is a usage error"""
        from pipelines.studies import load_data
        from sparsegp.errors import UsageError

        config = study_config('fit', data={'source': synthetic_source(), 'subset': {'n': 500}})

        with pytest.raises(UsageError) as excinfo:
            load_data(config)
        assert excinfo.value.field == 'data.subset.n'

    def test_missing_registry_location(self, study_config, monkeypatch):
        """Test a registry dataset without its environment variable is a data error"""
        from pipelines.studies import load_data
        from sparsegp.errors import DataIngestionError

        monkeypatch.delenv('SNELSON_DATA_DIR', raising=False)

        with pytest.raises(DataIngestionError, match='SNELSON_DATA_DIR'):
            load_data(study_config('fit', data={'dataset': 'snelson'}))

    def test_missing_source_field(self, study_config):
        """Test a source entry without its path names the field"""
        from pipelines.studies import load_data
        from sparsegp.errors import UsageError

        with pytest.raises(UsageError) as excinfo:
            load_data(study_config('fit', source={'kind': 'xy'}))
        assert excinfo.value.field == 'data.source.path'

    def test_constant_targets_rejected(self, study_config, tmp_path):
        """Test unusable training data is a data error"""
        from pipelines.studies import load_data
        from sparsegp.errors import DataIngestionError

        path = tmp_path / 'flat.txt'
        path.write_text('0 1\n1 1\n2 1\n')

        with pytest.raises(DataIngestionError, match='constant targets'):
            load_data(study_config('fit', source={'kind': 'xy', 'path': str(path)}))


class TestFitStudy:
    """Test the fit study end to end"""

    def test_manifest_and_files(self, study_config):
        """Test every method trains, reports metrics and is written to disk"""
        from pipelines.results_writer import run_directory
        from pipelines.studies import run

        config = study_config('fit')
        manifest = run(config)

        assert manifest.status == 'complete'
        assert [r['name'] for r in manifest.runs] == ['FULL', 'FITC', 'VFE']
        for record in manifest.runs:
            assert record['metrics']['evaluated_on'] == 'test'
            assert np.isfinite(record['metrics']['smse'])
            assert record['trace']['final_objective'] <= record['trace']['initial_objective']
        assert manifest.run('VFE')['num_inducing'] == 5
        assert {'bands_FULL', 'bands_VFE', 'inducing_VFE', 'training_data'} <= set(manifest.series)
        assert set(manifest.reports['noise_bias']['noise_std']) == {'FULL', 'FITC', 'VFE'}

        out_dir = run_directory(config.output_dir, 'fit', config.seed)
        assert os.path.isfile(os.path.join(out_dir, 'manifest.yaml'))
        assert os.path.isfile(os.path.join(out_dir, 'runs', 'VFE.yaml'))

    def test_inducing_ladder_names(self, study_config):
        """Test several M values give one run per size"""
        from pipelines.studies import run

        manifest = run(study_config('fit', methods=['VFE'], num_inducing=[3, 6]), write=False)

        assert [r['name'] for r in manifest.runs] == ['VFE-M3', 'VFE-M6']

    def test_failures_are_recorded(self, study_config, mocker):
        """Test a failing training run is recorded and the manifest is partial"""
        from pipelines.studies import run
        from sparsegp.errors import TrainingError

        mocker.patch('pipelines.studies.optimize_multistart', side_effect=TrainingError('all 1 VFE restarts failed'))
        manifest = run(study_config('fit', methods=['VFE']), write=False)

        assert manifest.status == 'partial'
        assert manifest.runs[0]['status'] == 'failed'
        assert 'TrainingError' in manifest.runs[0]['error']

    def test_same_seed_same_manifest(self, study_config):
        """Test two runs with the same seed give identical objectives"""
        from pipelines.studies import run

        config = study_config('fit', methods=['VFE'])
        first = run(config, write=False)
        second = run(config, write=False)

        assert first.runs[0]['breakdown'] == second.runs[0]['breakdown']
        assert first.runs[0]['inducing_inputs'] == second.runs[0]['inducing_inputs']


class TestSweepAddStudy:
    """Test the sweep-add study"""

    def test_sweep_series(self, study_config):
        """Test each method gets a sweep over the grid plus its inducing inputs"""
        from pipelines.studies import run

        config = study_config('sweep-add', methods=['VFE', 'FITC'], num_inducing=4, grid_points=20)
        manifest = run(config, write=False)

        for name in ('VFE', 'FITC'):
            record = manifest.run(name)
            assert record['sweep']['grid_points'] == 24
            assert len(manifest.series[f'sweep_{name}']['delta_total']) == 24
        assert manifest.run('VFE')['sweep']['min_delta_total'] < 0


class TestClumpStudy:
    """Test the clump study"""

    def test_clump_reports(self, study_config):
        """Test sparse runs report clusters and the noise-bias report is made"""
        from pipelines.studies import run

        manifest = run(study_config('clump-study', methods=['FULL', 'VFE'], num_inducing=6), write=False)
        clumps = manifest.run('VFE')['clumps']

        assert 1 <= clumps['effective_count'] <= 6
        assert sorted(i for cluster in clumps['clusters'] for i in cluster) == list(range(6))
        assert 'clumps' not in manifest.run('FULL')
        assert 'noise_bias' in manifest.reports


class TestRecoverZXStudy:
    """Test the recover-zx study"""

    def test_traces_from_full_hyperparameters(self, study_config):
        """Test sparse runs start at Z = X and never end above their start"""
        from pipelines.studies import run

        config = study_config('recover-zx', source=synthetic_source(n_train=15, n_test=5),
                              methods=['FULL', 'VFE', 'FITC'], num_inducing=None)
        manifest = run(config, write=False)

        assert manifest.run('FULL')['status'] == 'ok'
        assert manifest.run('VFE')['status'] == 'ok'
        assert manifest.run('VFE')['num_inducing'] == 15
        assert {'trace_FULL', 'trace_VFE', 'recover_zx'} <= set(manifest.series)
        for record in manifest.runs[1:]:
            if record['status'] == 'ok':
                assert record['final_objective'] <= record['initial_objective']
                assert record['full_objective'] == manifest.run('FULL')['breakdown']['total']

    def test_full_failure_fails_sparse_runs(self, study_config, mocker):
        """Test sparse runs are marked failed when the full reference fails"""
        from pipelines.studies import run
        from sparsegp.errors import TrainingError

        mocker.patch('pipelines.studies.optimize_multistart', side_effect=TrainingError('all 1 FULL restarts failed'))
        config = study_config('recover-zx', source=synthetic_source(n_train=10, n_test=5),
                              methods=['VFE'], num_inducing=None)
        manifest = run(config, write=False)

        assert [r['status'] for r in manifest.runs] == ['failed', 'failed']
        assert 'recover_zx' not in manifest.series


class TestRegimeStudy:
    """Test the regime study"""

    def test_ladder_rows(self, study_config, caplog):
        """Test nested ladder runs, the FULL row at M = N and skipping of M > N"""
        from pipelines.studies import run

        config = study_config('regime-study', source=synthetic_source(dim=2, n_train=30, n_test=15),
                              num_inducing=[4, 8, 100], init='NESTED')
        with caplog.at_level('WARNING', logger='pipelines.studies'):
            manifest = run(config, write=False)

        assert 'Skipping ladder entries [100]' in caplog.text
        assert [r['name'] for r in manifest.runs] == ['FULL', 'FITC-M4', 'FITC-M8', 'VFE-M4', 'VFE-M8']
        regime = manifest.series['regime']
        assert set(regime) == {'method', 'num_inducing', 'nlml_per_datum', 'noise_std', 'nlpp', 'smse'}
        assert regime['num_inducing'][regime['method'].index('FULL')] == 30
        assert len(regime['method']) == sum(r['status'] == 'ok' for r in manifest.runs)

    def test_empty_ladder(self, study_config):
        """Test a ladder with every entry above N is a usage error"""
        from pipelines.studies import run
        from sparsegp.errors import UsageError

        config = study_config('regime-study', num_inducing=[64], init='NESTED')

        with pytest.raises(UsageError, match='ladder'):
            run(config, write=False)


class TestArdStudy:
    """Test the ARD study"""

    def test_protocol_rows(self, study_config):
        """Test the five protocol rows and the inverse-lengthscale table"""
        from pipelines.studies import run

        config = study_config(
            'ard-study', source=synthetic_source(dim=6, n_train=40, n_test=10), init='KMEANS',
            optimizer={'max_iterations': 10}, full_subset={'n': 20, 'rule': 'SEEDED_RANDOM'},
            frozen_iterations=3, top_lengthscales=3,
        )
        manifest = run(config, write=False)

        names = ['GP (SoD)', 'FITC', 'VFE', 'VFE (frozen)', 'VFE (init FITC)']
        assert [r['name'] for r in manifest.runs] == names
        ok = [r['name'] for r in manifest.runs if r['status'] == 'ok']
        assert manifest.series['ard_table']['row'] == ok
        assert len(manifest.series['ard_lengthscales']['rank']) == 3 * len(ok)
        assert manifest.run('GP (SoD)')['num_inducing'] == 0
        assert len(manifest.run('VFE')['inverse_lengthscales']['dimensions']) == 3
