import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rcwa2d import IncidentWave, InsufficientPoints, devices, fit_rate, run_h_sweep, run_m_sweep
from rcwa2d.convergence import CSV_COLUMNS, MODES, THICKNESS, ReferenceSpec
from rcwa2d.fields import PlaneWaveField


def test_exact_power_law():
    M = np.arange(1, 51)
    fit = fit_rate(M, 3.0 * M**-2.0)
    assert fit.slope == pytest.approx(-2.0, abs=1e-12)
    assert fit.stderr < 1e-12


def test_saturated_points_are_excluded():
    h = np.geomspace(1e-3, 1.0, 20)
    fit = fit_rate(h, np.maximum(2.0 * h, 1e-4))
    assert fit.slope == pytest.approx(1.0, abs=0.05)
    assert fit.floor == pytest.approx(2e-3)
    assert all(h[i] < 1e-2 for i in fit.excluded)


def test_explicit_floor_and_no_cut():
    x = np.array([1.0, 2.0, 4.0, 8.0])
    e = x**1.5
    assert fit_rate(x, e, floor_policy="none").slope == pytest.approx(1.5)
    fit = fit_rate(x, e, floor_policy=0.2)
    assert fit.excluded == (0,)


def test_two_points_are_insufficient():
    with pytest.raises(InsufficientPoints):
        fit_rate([1.0, 2.0], [1.0, 0.25])


def test_failed_points_are_ignored():
    fit = fit_rate([1, 2, 3, 4, 5], [1.0, math.nan, 1 / 9, 1 / 16, 1 / 25], floor_policy="none")
    assert fit.slope == pytest.approx(-2.0)
    assert fit.excluded == (1,)


@given(st.floats(-4, 4).filter(lambda p: abs(p) > 0.05), st.floats(1e-3, 1e3))
def test_power_law_recovery(p, c):
    x = np.geomspace(1, 64, 7)
    fit = fit_rate(x, c * x**p, floor_policy="none")
    assert fit.slope == pytest.approx(p, abs=1e-9)


def test_slab_m_sweep_is_saturated(incident):
    report = run_m_sweep(devices.slab_device(), incident, 25.0, [0, 2, 4], ReferenceSpec(8, 12.5))
    assert report.sweep_kind == MODES
    assert report.saturated
    assert max(r.err_l2_rel for r in report.records) < 1e-12


def test_lamellar_h_sweep_is_h_independent(incident):
    report = run_h_sweep(devices.lamellar_grating(), incident, 6, [25.0, 50.0, 100.0], ReferenceSpec(6, 10.0))
    assert report.sweep_kind == THICKNESS
    assert max(r.err_l2_rel for r in report.records) < 1e-12
    assert report.saturated


def test_sweep_records_and_csv(incident, symmetric):
    report = run_h_sweep(symmetric, incident, 6, [50.0, 10.0, 25.0], ReferenceSpec(6, 5.0), floor_policy="none")
    assert [r.h for r in report.records] == [10.0, 25.0, 50.0]
    assert report.fitted_slope > 1.0
    assert not report.saturated
    lines = report.to_csv().split("\n")
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert lines[1].startswith("thickness,6,10,")
    assert lines[-1] == ""
    summary = report.summary()
    assert summary["fitted_slope"] == report.fitted_slope
    assert summary["reference"] == {"M": 6, "h": 5.0}


def test_threaded_sweep_is_deterministic(incident, symmetric):
    args = (symmetric, incident, 4, [10.0, 25.0, 50.0], ReferenceSpec(4, 5.0))
    a = run_h_sweep(*args)
    b = run_h_sweep(*args, threads=3)
    assert a.to_csv().split("wall")[0] == b.to_csv().split("wall")[0]
    assert [r.err_l2_rel for r in a.records] == [r.err_l2_rel for r in b.records]


def test_reference_must_be_finer(incident, symmetric):
    with pytest.raises(ValueError):
        run_m_sweep(symmetric, incident, 5.0, [4, 8], ReferenceSpec(10, 2.5))
    with pytest.raises(ValueError):
        run_m_sweep(symmetric, incident, 5.0, [4, 8], ReferenceSpec(12, 5.0))
    with pytest.raises(ValueError):
        run_h_sweep(symmetric, incident, 4, [5.0, 10.0], ReferenceSpec(4, 4.0))


def test_failing_points_are_recorded():
    # lambda = L makes orders +-1 grazing, so only M = 0 can be solved.
    inc = IncidentWave(500.0)
    reference = PlaneWaveField(inc, 500.0)
    report = run_m_sweep(devices.lamellar_grating(), inc, 50.0, [0, 1, 2], reference)
    assert [r.ok for r in report.records] == [True, False, False]
    assert "RayleighAnomaly" in report.records[1].status
    assert report.records[1].excluded
    assert len(report.summary()["failed_points"]) == 2
