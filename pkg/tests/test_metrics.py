import numpy as np
import pytest

from flexgrid.domain import HORIZON, DimensionMismatch, Plan
from flexgrid.metrics import (
    PEAK_WINDOW, RunMetrics, ZeroBaselinePeak, avg_discomfort, global_cost, peak_shift, unfairness,
)


def test_global_cost_of_single_spike():
    v = np.zeros(HORIZON)
    v[700] = 1440.0
    assert global_cost(v) == pytest.approx(1439.0)
    assert global_cost(np.full(HORIZON, 5.0)) == 0.0
    with pytest.raises(DimensionMismatch):
        global_cost(np.zeros(10))


def test_discomfort_measures():
    assert unfairness([0.0, 1.0]) == 0.5
    assert avg_discomfort([0.0, 1.0]) == 0.5
    assert unfairness([0.3] * 51) == 0.0
    plans = [Plan(np.zeros(HORIZON), d) for d in (0.0, 0.0, 0.6)]
    assert avg_discomfort(plans) == pytest.approx(0.2)
    assert unfairness(plans) == pytest.approx(np.sqrt((0.04 + 0.04 + 0.16) / 3))
    with pytest.raises(ValueError):
        avg_discomfort([])


def test_peak_shift():
    assert PEAK_WINDOW == (1020, 1260)
    base = np.zeros(HORIZON)
    base[1100:1110] = 100.0
    moved = base.copy()
    moved[1100:1105] = 0.0
    moved[900:905] = 100.0
    assert peak_shift(base, moved) == pytest.approx(0.5)
    assert peak_shift(base, base) == 0.0
    with pytest.raises(ZeroBaselinePeak):
        peak_shift(np.zeros(HORIZON), base)
    with pytest.raises(ValueError):
        peak_shift(base, base, (10, 5))


def test_run_metrics_rows():
    m = RunMetrics()
    agg = np.zeros(HORIZON)
    m.record(agg, [0.0, 1.0])
    m.record(agg, [0.5, 0.5])
    assert m.iterations == 1
    assert m.final() == {"global_variance": 0.0, "avg_discomfort": 0.5, "unfairness": 0.0}
    rows = list(m.rows())
    assert rows[0] == {"iteration": 0, "global_variance": 0.0, "avg_discomfort": 0.5,
                       "unfairness": 0.5}
