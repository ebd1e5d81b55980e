#!/usr/bin/env python3
"""
Unit tests for plot-data and plotting-script emission
"""

import os

import numpy as np
import pandas as pd
import pytest


def sweep_series(n=5):
    x = np.linspace(-1, 1, n)
    return {'x0': x.tolist(), 'delta_total': (-x ** 2).tolist(), 'delta_data_fit': (-2 * x ** 2).tolist(),
            'delta_complexity': (x ** 2).tolist(), 'delta_trace': [0.0] * n, 'applied_jitter': [1e-6] * n}


def regime_series():
    return {
        'method': ['FULL', 'FITC', 'FITC', 'VFE', 'VFE'],
        'num_inducing': [64, 16, 32, 16, 32],
        'nlml_per_datum': [0.1, 0.5, 0.3, 0.6, 0.2],
        'noise_std': [0.1, 0.05, 0.08, 0.2, 0.12],
        'nlpp': [0.0, 0.4, 0.2, 0.5, 0.1],
        'smse': [0.01, 0.1, 0.05, 0.2, 0.03],
    }


def make_manifest(experiment, series=None, runs=None):
    from pipelines.results_writer import RunManifest
    return RunManifest(experiment=experiment, config={}, dataset={}, toolkit_version='0.1.0',
                       runs=runs if runs is not None else [{'name': 'VFE', 'status': 'ok'}],
                       series=series or {})


class TestResolveFigures:
    """Test resolve_figures"""

    def test_sweep_figures(self):
        """Test the sweep figure collects every sweep and the optional fits figure its extras"""
        from pipelines.plot_emitter import resolve_figures

        manifest = make_manifest('sweep-add', {
            'sweep_VFE': sweep_series(), 'sweep_FITC': sweep_series(),
            'bands_VFE': {'x': [0.0], 'mean': [0.0], 'lower': [-1.0], 'upper': [1.0]},
            'inducing_VFE': {'x0': [0.0]}, 'training_data': {'x': [0.0], 'y': [0.0]},
        })
        figures = resolve_figures(manifest)

        assert figures['addition_sweep'][1] == ['sweep_FITC', 'sweep_VFE']
        assert figures['fits'][1] == ['bands_VFE', 'inducing_VFE', 'training_data']

    def test_optional_figure_skipped(self):
        """Test non-1-D fits without bands still emit the sweep figure"""
        from pipelines.plot_emitter import resolve_figures

        figures = resolve_figures(make_manifest('sweep-add', {'sweep_VFE': sweep_series()}))

        assert list(figures) == ['addition_sweep']

    @pytest.mark.parametrize('experiment,series,message', [
        ('fit', {}, 'nothing to plot'),
        ('regime-study', {'training_data': {'x': [0.0], 'y': [1.0]}}, "missing series 'regime'"),
        ('fit', {'training_data': {'x': [0.0], 'y': [1.0]}}, 'no plottable series'),
        ('predict', {'regime': regime_series()}, 'No figures defined'),
    ])
    def test_unplottable_manifests(self, experiment, series, message):
        """Test empty, incomplete and unknown manifests are rejected"""
        from pipelines.plot_emitter import resolve_figures

        runs = [] if not series else None
        with pytest.raises(ValueError, match=message):
            resolve_figures(make_manifest(experiment, series, runs))


class TestEmitPlots:
    """Test emit_plots"""

    def test_empty_manifest_writes_nothing(self, tmp_path):
        """Test an empty manifest raises before any file is created"""
        from pipelines.plot_emitter import emit_plots

        with pytest.raises(ValueError):
            emit_plots(make_manifest('fit', {}, []), str(tmp_path))

        assert os.listdir(tmp_path) == []

    def test_malformed_series_writes_nothing(self, tmp_path):
        """Test ragged series are rejected before writing"""
        from pipelines.plot_emitter import emit_plots

        manifest = make_manifest('regime-study', {'regime': {'method': ['FULL', 'VFE'], 'num_inducing': [1]}})

        with pytest.raises(ValueError, match='malformed'):
            emit_plots(manifest, str(tmp_path))
        assert not os.path.exists(tmp_path / 'plots')

    def test_sweep_data_and_script(self, tmp_path):
        """Test the sweep CSV carries all four delta columns and the script reads it"""
        from pipelines.plot_emitter import emit_plots

        written = emit_plots(make_manifest('sweep-add', {'sweep_VFE': sweep_series()}), str(tmp_path))

        frame = pd.read_csv(tmp_path / 'plots' / 'sweep_VFE.csv')
        for column in ['delta_total', 'delta_data_fit', 'delta_complexity', 'delta_trace']:
            assert column in frame.columns
        script = (tmp_path / 'plots' / 'addition_sweep.py').read_text()
        assert "SERIES = ['sweep_VFE']" in script
        assert "addition_sweep.png" in script
        compile(script, 'addition_sweep.py', 'exec')
        assert written['figures'] == []

    def test_regime_script_has_four_panels(self, tmp_path):
        """Test the regime script plots the four panel columns"""
        from pipelines.plot_emitter import emit_plots

        emit_plots(make_manifest('regime-study', {'regime': regime_series()}), str(tmp_path))
        script = (tmp_path / 'plots' / 'regime.py').read_text()

        for column in ['nlml_per_datum', 'noise_std', 'nlpp', 'smse']:
            assert f"'{column}'" in script

    def test_render_delegates(self, tmp_path, mocker):
        """Test render=True passes every figure's frames to the renderer"""
        from pipelines.plot_emitter import emit_plots

        render = mocker.patch('pipelines.plot_emitter.render_figure', side_effect=lambda figure, frames, path: path)
        written = emit_plots(make_manifest('recover-zx', {
            'trace_FULL': {'iteration': [0, 1], 'objective': [3.0, 2.0]},
            'trace_VFE': {'iteration': [0, 1], 'objective': [4.0, 2.5]},
        }), str(tmp_path), render=True)

        render.assert_called_once()
        figure, frames, path = render.call_args[0]
        assert figure == 'traces'
        assert sorted(frames) == ['trace_FULL', 'trace_VFE']
        assert written['figures'] == [path]

    def test_render_failure_is_logged(self, tmp_path, mocker, caplog):
        """Test a renderer returning no path is reported and skipped"""
        from pipelines.plot_emitter import emit_plots

        mocker.patch('pipelines.plot_emitter.render_figure', return_value='')
        with caplog.at_level('WARNING', logger='pipelines.plot_emitter'):
            written = emit_plots(make_manifest('regime-study', {'regime': regime_series()}), str(tmp_path),
                                 render=True)

        assert written['figures'] == []
        assert 'could not be rendered' in caplog.text

    def test_real_render(self, tmp_path):
        """Test the regime figure renders to a PNG"""
        from pipelines.plot_emitter import emit_plots

        written = emit_plots(make_manifest('regime-study', {'regime': regime_series()}), str(tmp_path), render=True)

        assert written['figures'] == [os.path.join(str(tmp_path), 'plots', 'regime.png')]
        assert os.path.getsize(written['figures'][0]) > 0
