import csv
import dataclasses
import io
import math

import numpy as np
import pytest

from ofdm_ranging.campaign import (STATS_COLUMNS, SWEEP_COLUMNS, TARGET2_COLUMNS, Cell, run_campaign, simulate_cell,
                                   stats_csv, sweep_csv, sweep_threshold)
from ofdm_ranging.config import CampaignSpec, NoiseModel, Settings


def small(**kw):
    base = dict(bandwidths=(20e6,), target1_ranges=(10.0, 30.0), rcs_values=(1.0,), iterations=40, seed=9)
    base.update(kw)
    return CampaignSpec(**base)


def test_deterministic_and_cell_independent():
    s = Settings()
    a = run_campaign(small(), s)
    b = run_campaign(small(), s)
    assert stats_csv(a) == stats_csv(b)
    only = run_campaign(small(target1_ranges=(30.0,)), s)
    cell = Cell(20e6, 1.0, 30.0)
    assert np.array_equal(a.trials[cell].eps_min, only.trials[cell].eps_min)


def test_workers_match_serial():
    s = Settings()
    assert stats_csv(run_campaign(small(), s, workers=2)) == stats_csv(run_campaign(small(), s))


def test_stats_schema_and_values():
    st = run_campaign(small(), Settings())
    rows = list(csv.reader(io.StringIO(stats_csv(st))))
    assert tuple(rows[0]) == STATS_COLUMNS
    assert len(rows) == 3
    r = st.row(20e6, 1.0, 30.0)
    assert r.trials == 40
    assert 0 <= r.p_d <= 1 and r.p_fa == st.p_fa(20e6)
    assert r.detected == round(r.p_d * r.trials)


def test_two_target_columns():
    st = run_campaign(small(target2_range=25.0, iterations=10), Settings())
    header = stats_csv(st).splitlines()[0].split(",")
    assert tuple(header) == STATS_COLUMNS + TARGET2_COLUMNS
    assert all(r.target2 == (25.0, 1.0) for r in st.rows)


def test_noiseless_no_target_always_fires():
    s = dataclasses.replace(Settings(), noise=NoiseModel(enabled=False))
    ct = simulate_cell(Cell(20e6, 0.0, None), s, 5, 0, False)
    # a flat metric has zero residual at every candidate
    assert np.all(ct.eps_min == 0.0)
    assert np.all(ct.rho_best == 5.0)


def test_sweep_threshold_extremes():
    st = run_campaign(small(), Settings())
    rows = sweep_threshold(st, [0.0, 1e9])
    low = [r for r in rows if r.epsilon_t == 0.0]
    high = [r for r in rows if r.epsilon_t == 1e9]
    assert all(r.p_d == 0.0 and r.p_fa == 0.0 for r in low)
    assert all(r.p_d == 1.0 and r.p_fa == 1.0 for r in high)
    assert tuple(sweep_csv(rows).splitlines()[0].split(",")) == SWEEP_COLUMNS
    with pytest.raises(ValueError):
        sweep_threshold(st, [])


def test_sweep_monotone():
    st = run_campaign(small(), Settings())
    eps = np.linspace(0, 60, 13)
    rows = sweep_threshold(st, eps)
    p = [r.p_d for r in rows if r.range_m == 30.0]
    assert p == sorted(p)


def test_full_phy_runs_and_agrees_in_bulk():
    s = Settings()
    fast = simulate_cell(Cell(20e6, 1.0, 20.0), s, 60, 1, False)
    phy = simulate_cell(Cell(20e6, 1.0, 20.0), s, 60, 1, True)
    assert phy.eps_min.shape == (60,)
    assert np.mean(phy.rho_best == 20.0) > 0.9
    assert np.mean(fast.rho_best == 20.0) > 0.9


def test_cell_stream_differs():
    assert Cell(20e6, 1.0, 10.0).stream != Cell(20e6, 1.0, 15.0).stream
    assert Cell(20e6, 1.0, 10.0).stream != Cell(10e6, 1.0, 10.0).stream


def test_rms_nan_without_detections():
    st = run_campaign(small(iterations=5), Settings())
    rows = sweep_threshold(st, [0.0])
    assert all(r.p_d == 0.0 for r in rows)
    ct = st.trials[Cell(20e6, 1.0, 10.0)]
    assert math.isnan(ct.rms_error(0.0, [10.0]))
