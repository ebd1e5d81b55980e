#!/usr/bin/env python3
"""
End-to-end test: run a study, reload its manifest and emit rendered plots
"""

import os

import pandas as pd


class TestStudyToPlots:
    """Test the study -> manifest -> plots round trip on synthetic data"""

    def test_sweep_add_round_trip(self, run_study, synthetic_data):
        """Test a written sweep-add run reloads and renders both figures"""
        from pipelines.plot_emitter import emit_plots
        from pipelines.results_writer import load_manifest, run_directory

        config, manifest = run_study('sweep-add', write=True, data=synthetic_data(1, 40, 20, lengthscale=1.0),
                                     num_inducing=5, grid_points=30, optimizer={'max_iterations': 40})
        run_dir = run_directory(config.output_dir, 'sweep-add', config.seed)
        loaded = load_manifest(run_dir)

        assert loaded.status == manifest.status
        assert loaded.dataset['content_hash'] == manifest.dataset['content_hash']
        assert sorted(loaded.series) == sorted(manifest.series)

        written = emit_plots(loaded, run_dir, render=True)
        plots = os.path.join(run_dir, 'plots')
        assert sorted(os.path.basename(p) for p in written['scripts']) == ['addition_sweep.py', 'fits.py']
        assert sorted(os.path.basename(p) for p in written['figures']) == ['addition_sweep.png', 'fits.png']
        sweep = pd.read_csv(os.path.join(plots, 'sweep_VFE.csv'))
        assert len(sweep) == 35

        series = pd.read_csv(os.path.join(run_dir, 'series', 'sweep_VFE.csv'), float_precision='round_trip')
        assert series['delta_total'].tolist() == loaded.series['sweep_VFE']['delta_total']

    def test_regime_reduced_ladder(self, run_study, synthetic_data):
        """Test a short regime ladder in parallel writes one row per successful run"""
        _, manifest = run_study('regime-study', data=synthetic_data(2, 48, 16), num_inducing=[4, 12],
                                optimizer={'max_iterations': 30}, jobs=2)

        regime = manifest.series['regime']
        assert len(regime['method']) == sum(r['status'] == 'ok' for r in manifest.runs)
        assert sorted(set(regime['num_inducing'])) == [4, 12, 48]
