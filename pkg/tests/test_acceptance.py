"""Acceptance checks, one test per criterion, each printing a verdict line."""

import math
import time

import numpy as np
import pytest
from conftest import random_stack, record_criterion, relative

from rcwa2d import (
    IncidentWave,
    InsufficientPoints,
    apriori_constant,
    build_slicing,
    check_nontrapping,
    devices,
    diffraction_efficiencies,
    fit_rate,
    multilayer_solution,
    run_h_sweep,
    run_m_sweep,
    sesquilinear_residual,
    solve_device,
    solve_scattering,
    stairstep_error_norm,
    stairstep_permittivity,
)
from rcwa2d.convergence import ReferenceSpec


def _slope(fit_fn):
    try:
        return fit_fn().slope
    except InsufficientPoints:
        return math.nan


def test_criterion_1_oracle_equivalence():
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        stack = random_stack(rng)
        inc = IncidentWave(600.0, math.radians(float(rng.uniform(-60, 60))))
        device = stack.to_device(500.0)
        slicing = build_slicing(device, 2 * device.half_height)
        for M in (0, 3, 10):
            sol = solve_scattering(device, slicing, inc, M)
            for i, alpha in enumerate(sol.basis.alphas):
                oracle = multilayer_solution(stack, inc.kappa, alpha)
                worst = max(
                    worst,
                    relative(sol.smatrix.S11[i, i], oracle.r),
                    relative(sol.smatrix.S21[i, i], oracle.t),
                )
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and elapsed <= 10.0
    record_criterion(1, ok, f"max relative error {worst:.2e} (<= 1e-10), {elapsed:.2f} s (<= 10 s)")
    assert ok


def test_criterion_2_energy_conservation():
    device = devices.lamellar_grating(eps_ridge=2.25, duty=0.5)
    t0 = time.perf_counter()
    sol = solve_device(device, devices.paper_incident(), 40, 100.0)
    eff = diffraction_efficiencies(sol)
    elapsed = time.perf_counter() - t0
    defect = abs(1 - eff.total_reflected - eff.total_transmitted)
    ok = defect <= 1e-8 and elapsed <= 5.0
    record_criterion(2, ok, f"|1 - sum R - sum T| = {defect:.2e} (<= 1e-8), {elapsed:.2f} s (<= 5 s)")
    assert ok


@pytest.mark.slow
def test_criterion_3_m_rate(nonsymmetric, incident):
    t0 = time.perf_counter()
    report = run_m_sweep(
        nonsymmetric, incident, 1.0, [4, 6, 8, 11, 16, 22, 32], ReferenceSpec(64, 0.5), threads=4
    )
    elapsed = time.perf_counter() - t0
    M = report.variable()
    l2 = _slope(lambda: fit_rate(M, [r.err_l2_rel for r in report.records]))
    h1 = _slope(lambda: fit_rate(M, [r.err_h1_rel for r in report.records]))
    ok = -2.3 <= l2 <= -1.7 and -1.3 <= h1 <= -0.7 and elapsed <= 300.0
    errs = ", ".join(f"{r.err_l2_rel:.1e}" for r in report.records)
    record_criterion(
        3,
        ok,
        f"L2 slope {l2:.3f} (in [-2.3, -1.7]), H1 slope {h1:.3f} (in [-1.3, -0.7]), "
        f"L2 errors [{errs}], {elapsed:.1f} s",
    )
    assert ok


@pytest.mark.slow
@pytest.mark.parametrize("name", ["nonsymmetric", "symmetric"])
def test_criterion_4_h_rate(name, incident, request):
    device = request.getfixturevalue(name)
    t0 = time.perf_counter()
    report = run_h_sweep(device, incident, 50, [1, 1.25, 2, 5, 10, 25, 50], ReferenceSpec(50, 0.5), threads=4)
    elapsed = time.perf_counter() - t0
    slope = _slope(lambda: fit_rate(report.variable(), [r.err_l2_rel for r in report.records]))
    ok = slope >= 1.0 and elapsed <= 600.0
    line = f"{name} L2 slope {slope:.3f} (>= 1.0), {elapsed:.1f} s"
    prev = test_criterion_4_h_rate.__dict__.setdefault("lines", {})
    prev[name] = (ok, line)
    if len(prev) == 2:
        record_criterion(4, all(v[0] for v in prev.values()), "; ".join(v[1] for v in prev.values()))
    assert ok


def test_criterion_5_galerkin_certification(nonsymmetric, incident):
    worst = {}
    lamellar = solve_device(devices.lamellar_grating(), incident, 40, 100.0)
    worst["lamellar M=40"] = sesquilinear_residual(lamellar).max_relative()
    grating = solve_device(nonsymmetric, incident, 16, 1.0)
    worst["non-symmetric M=16 h=1"] = sesquilinear_residual(grating).max_relative()
    ok = max(worst.values()) <= 1e-6
    record_criterion(5, ok, ", ".join(f"{k}: {v:.2e}" for k, v in worst.items()) + " (<= 1e-6)")
    assert ok


def test_criterion_6_theory_diagnostics(nonsymmetric, symmetric, incident):
    parts, ok = [], True
    for name, device in (("non-symmetric", nonsymmetric), ("symmetric", symmetric)):
        trapping = check_nontrapping(device)
        sol = solve_device(device, incident, 10, 5.0)
        exact = apriori_constant(device, incident, sol)
        stair = [
            apriori_constant(device, incident, stairstep=stairstep_permittivity(device, build_slicing(device, h)))
            for h in (1.0, 5.0, 25.0)
        ]
        monotone = all(s.C_theorem1 <= exact.C_theorem1 for s in stair)
        ok &= trapping.satisfied and exact.bound_holds and monotone
        parts.append(
            f"{name}: nontrapping={trapping.satisfied}, bound holds={exact.bound_holds} "
            f"(ratio {exact.measured_ratio:.3g} <= {exact.bound_kappa3:.3g}), C_h <= C for h in 1,5,25: {monotone}"
        )
    record_criterion(6, ok, "; ".join(parts))
    assert ok


def test_criterion_7_stairstep_norm_scaling():
    device = devices.sinusoidal_device()
    hs = [25.0, 12.5, 6.25, 3.125]
    errs = [stairstep_error_norm(device, build_slicing(device, h), 1.0) for h in hs]
    # Four points spanning a factor of 8 cannot survive the 10x floor cut, and
    # the data have no floor, so the plain least-squares fit is used.
    slope = fit_rate(hs, errs, floor_policy="none").slope
    ok = 0.85 <= slope <= 1.15
    record_criterion(7, ok, f"L1 slope {slope:.3f} (in [0.85, 1.15])")
    assert ok


def test_criterion_8_stability():
    device = devices.evanescent_stack(slices=40)
    sol = solve_scattering(device, build_slicing(device, 30.0), devices.paper_incident(), 15)
    finite = bool(np.all(np.isfinite(sol.r)) and np.all(np.isfinite(sol.t)))
    residual = sol.continuity_residual()
    ok = finite and sol.max_exponential <= 1.0 and residual <= 1e-9 and len(sol.layers) == 40
    record_criterion(
        8,
        ok,
        f"{len(sol.layers)} slices, finite={finite}, max |exp| {sol.max_exponential:.3f} (<= 1), "
        f"continuity residual {residual:.1e} (<= 1e-9)",
    )
    assert ok
