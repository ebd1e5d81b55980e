#!/usr/bin/env python3
"""
Integration test for the regime study at reduced scale (N = 512, d = 4)
"""

import pytest

LADDER = [16, 32, 64, 128, 256, 512]


def rows_for(regime, method):
    rows = [
        {column: values[i] for column, values in regime.items()}
        for i in range(len(regime['method'])) if regime['method'][i] == method
    ]
    return sorted(rows, key=lambda row: row['num_inducing'])


@pytest.mark.slow
class TestRegimeStudy:
    """Test FITC and VFE behaviour along the inducing ladder"""

    def test_ladder_properties(self, run_study, synthetic_data):
        """Test VFE improves monotonically, FITC overfits mid-ladder and matches FULL at M = N"""
        _, manifest = run_study('regime-study', data=synthetic_data(4, 512, 512), num_inducing=LADDER,
                                optimizer={'restarts': 3}, jobs=-1)
        regime = manifest.series['regime']
        full = rows_for(regime, 'FULL')[0]
        fitc = rows_for(regime, 'FITC')
        vfe = rows_for(regime, 'VFE')

        assert [row['num_inducing'] for row in vfe] == LADDER
        assert [row['num_inducing'] for row in fitc] == LADDER
        for smaller, larger in zip(vfe, vfe[1:]):
            assert larger['nlml_per_datum'] <= smaller['nlml_per_datum'] + 1e-3
        assert vfe[0]['noise_std'] >= full['noise_std']

        overfit = [row for row in fitc[1:-1]
                   if row['nlml_per_datum'] < full['nlml_per_datum'] and row['noise_std'] <= 0.5 * full['noise_std']]
        assert overfit

        assert fitc[-1]['nlml_per_datum'] == pytest.approx(full['nlml_per_datum'], rel=0.05)
