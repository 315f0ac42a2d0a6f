import math

import numpy as np
import pytest

from rcwa2d import devices, evaluate_field, field_norm, norm_error, norm_errors, solve_device
from rcwa2d.fields import (
    PlaneWaveField,
    ScatteredField,
    diffraction_efficiencies,
    evaluate_gradient,
    field_grid,
    field_samples,
    quadrature_nodes,
)


@pytest.fixture(scope="module")
def grating_solution():
    return solve_device(devices.symmetric_grating(), devices.paper_incident(), 6, 10.0)


def test_plane_wave_norms(oblique):
    H, L = 120.0, 500.0
    pw = PlaneWaveField(oblique, L)
    area = 2 * H * L
    assert field_norm(pw, H, L, "L2") == pytest.approx(math.sqrt(area), rel=1e-13)
    # |grad u|^2 = kappa^2 |u|^2 for a unit plane wave.
    assert field_norm(pw, H, L, "H1", length_scale=1.0) == pytest.approx(
        math.sqrt(area * (1 + oblique.kappa**2)), rel=1e-13
    )
    assert field_norm(pw, H, L, "H1") == pytest.approx(math.sqrt(2 * area), rel=1e-13)
    with pytest.raises(ValueError):
        field_norm(pw, H, L, "H2")


def test_lossy_plane_wave_norm_closed_form(incident):
    H, L, eps = 50.0, 500.0, 2.0 + 0.5j
    pw = PlaneWaveField(incident, L, eps)
    b = pw.beta.imag
    expected = L * (math.exp(2 * b * H) - math.exp(-2 * b * H)) / (2 * b)
    assert field_norm(pw, H, L) ** 2 == pytest.approx(expected, rel=1e-12)


def test_norm_error_identities(grating_solution):
    H, L = grating_solution.device.half_height, grating_solution.device.period
    errs = norm_errors(grating_solution, grating_solution, H, L)
    assert errs == {"L2": 0.0, "H1": 0.0}
    with pytest.raises(ValueError):
        norm_error(grating_solution, grating_solution, H, L, "max")


def test_norm_error_of_zero_reference_raises(incident):
    from rcwa2d import IncidentWave

    zero = PlaneWaveField(IncidentWave(600.0, 0.0, 0.0), 500.0)
    with pytest.raises(ValueError):
        norm_errors(PlaneWaveField(incident, 500.0), zero, 100.0, 500.0)


def test_quadrature_order_doubling(grating_solution):
    H, L = grating_solution.device.half_height, grating_solution.device.period
    for norm in ("L2", "H1"):
        a = field_norm(grating_solution, H, L, norm, order=8)
        b = field_norm(grating_solution, H, L, norm, order=16)
        assert abs(a - b) < 1e-9 * b


def test_quadrature_nodes_integrate_polynomials():
    x, w = quadrature_nodes([0.3, 0.7], 0.0, 1.0, 5.0)
    assert np.sum(w) == pytest.approx(1.0, abs=1e-15)
    assert w @ x**9 == pytest.approx(0.1, abs=1e-14)
    assert np.all((x > 0) & (x < 1))


def test_field_above_device_is_incident_plus_reflected(grating_solution):
    sol = grating_solution
    H = sol.device.half_height
    x1 = np.array([10.0, 250.0, 400.0])
    x2 = np.full(3, H + 30.0)
    beta = sol.basis.betas_plus
    expected = np.exp(-1j * beta[sol.M] * x2)
    phase = np.exp(1j * np.outer(x1, sol.alphas))
    expected = expected + phase @ (sol.refl * np.exp(1j * beta * 30.0))
    assert np.allclose(evaluate_field(sol, x1, x2), expected, atol=1e-13)


def test_scattered_field_is_outgoing(grating_solution):
    sol = grating_solution
    H = sol.device.half_height
    scat = ScatteredField(sol, sol.incident)
    u, du = scat.modal_values(np.array([H + 5.0]))
    assert np.allclose(du[0], 1j * sol.basis.betas_plus * u[0], atol=1e-13)


def test_gradient_by_finite_differences(grating_solution):
    sol = grating_solution
    x1, x2, d = 123.0, -700.0, 1e-4
    d1, d2 = evaluate_gradient(sol, x1, x2)
    fd1 = (evaluate_field(sol, x1 + d, x2) - evaluate_field(sol, x1 - d, x2)) / (2 * d)
    fd2 = (evaluate_field(sol, x1, x2 + d) - evaluate_field(sol, x1, x2 - d)) / (2 * d)
    assert abs(d1 - fd1) < 1e-7
    assert abs(d2 - fd2) < 1e-7


def test_field_grid_and_samples(grating_solution):
    sol = grating_solution
    grid = field_grid(sol, 500.0, sol.device.half_height, nx=4, nz=5)
    assert grid.shape == (20, 4)
    u = evaluate_field(sol, grid[:, 0], grid[:, 1])
    assert np.array_equal(grid[:, 2], u.real) and np.array_equal(grid[:, 3], u.imag)
    samples = field_samples(sol, grid[:3, :2])
    assert samples[1].value == u[1]


def test_quasi_periodicity(oblique):
    sol = solve_device(devices.sinusoidal_device(), oblique, 5, 10.0)
    x2 = np.array([-20.0, 0.0, 40.0])
    a = evaluate_field(sol, 30.0, x2)
    b = evaluate_field(sol, 530.0, x2)
    assert np.allclose(b, a * np.exp(1j * oblique.alpha * 500.0), atol=1e-13)


def test_efficiency_table(oblique):
    sol = solve_device(devices.lamellar_grating(), oblique, 8, 50.0)
    eff = diffraction_efficiencies(sol)
    assert set(eff.orders_reflected) <= {-1, 0}
    assert eff.total_reflected + eff.total_transmitted == pytest.approx(1.0, abs=1e-11)
    d = eff.to_dict()
    assert d["reflected"][0] == pytest.approx(eff.R[list(eff.orders_reflected).index(0)])
