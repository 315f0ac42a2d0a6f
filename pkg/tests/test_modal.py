import cmath
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from rcwa2d import IncidentWave, RayleighAnomaly, devices, dtn_apply, mode_basis, permittivity_fourier_coeffs
from rcwa2d import toeplitz_matrix, truncate
from rcwa2d.geometry import DeviceSpec, GradedPermittivity, slice_profile
from rcwa2d.modal import branch_sqrt, make_basis, slice_toeplitz

finite = st.floats(-1e3, 1e3, allow_nan=False)


@given(finite, finite)
def test_branch_sqrt_branch(re, im):
    z = complex(re, im)
    w = complex(branch_sqrt(z))
    assert w.imag >= 0
    assert abs(w * w - z) <= 1e-12 * max(1.0, abs(z))
    if w.imag == 0:
        assert w.real >= 0


def test_incident_wave(incident):
    assert incident.kappa == pytest.approx(2 * math.pi / 600)
    assert incident.alpha == 0.0
    oblique = IncidentWave(600.0, math.radians(30))
    assert oblique.alpha == pytest.approx(0.5 * oblique.kappa)
    with pytest.raises(ValueError):
        IncidentWave(-1.0)
    with pytest.raises(ValueError):
        IncidentWave(600.0, math.radians(95))


def test_basis_orders(oblique):
    device = devices.slab_device()
    basis = mode_basis(oblique, device, 3)
    assert basis.size == 7
    assert list(basis.indices) == [-3, -2, -1, 0, 1, 2, 3]
    assert basis.alphas[3] == pytest.approx(oblique.alpha)
    assert np.allclose(np.diff(basis.alphas), 2 * math.pi / 500)
    # Order 0 propagates, |n| >= 2 are evanescent at lambda = 600, L = 500.
    assert basis.propagating("+")[3]
    assert not basis.propagating("+")[0]
    assert basis.beta0 == pytest.approx(oblique.kappa * math.cos(oblique.theta))


def test_alpha_ignores_cover_permittivity():
    # The horizontal wavenumber is kappa sin(theta) whatever eps_plus is.
    inc = IncidentWave(600.0, math.radians(20))
    basis = make_basis(inc.kappa, inc.alpha, 500.0, 2.25, 1.0, 1)
    assert basis.alpha == pytest.approx(inc.kappa * math.sin(math.radians(20)))


def test_rayleigh_anomaly():
    # lambda = L at normal incidence makes orders +-1 grazing.
    with pytest.raises(RayleighAnomaly):
        mode_basis(IncidentWave(500.0), devices.empty_device(), 1)
    mode_basis(IncidentWave(500.0), devices.empty_device(), 0)


def test_basis_rejects_negative_m(incident):
    with pytest.raises(ValueError):
        mode_basis(incident, devices.empty_device(), -1)


def _quad_coeff(func, a, b, n, L=500.0):
    re = quad(lambda x: (func(x) * cmath.exp(-2j * math.pi * n * x / L)).real, a, b, epsabs=1e-11, epsrel=1e-12, limit=200)[0]
    im = quad(lambda x: (func(x) * cmath.exp(-2j * math.pi * n * x / L)).imag, a, b, epsabs=1e-11, epsrel=1e-12, limit=200)[0]
    return complex(re, im) / L


def test_lamellar_coefficients_against_quad():
    device = devices.lamellar_grating()
    prof = slice_profile(device, 0.0)
    c = permittivity_fourier_coeffs(prof, 6)
    for n in range(-6, 7):
        expected = sum(
            _quad_coeff(lambda x, v=v: complex(v), a, b, n)
            for a, b, v in zip(prof.breakpoints[:-1], prof.breakpoints[1:], prof.values)
        )
        assert abs(c[n + 6] - expected) < 1e-13


def test_triangle_slice_coefficients(nonsymmetric):
    prof = slice_profile(nonsymmetric, -700.0)
    c = permittivity_fourier_coeffs(prof, 4)
    eps = devices.METAL_EPS
    # Metal occupies [156.25, 406.25]: c_0 is the duty-weighted mean.
    assert c[4] == pytest.approx(1 + (eps - 1) * 0.5, abs=1e-14)
    expected = _quad_coeff(lambda x: eps - 1, 156.25, 406.25, 1)
    assert abs(c[5] - expected) < 1e-13


def test_graded_coefficients_against_quad():
    grad = GradedPermittivity(lambda x1, x2: 2.0 + 0.5 * np.cos(2 * np.pi * x1 / 500.0) ** 3, lambda x1, x2: 0 * x1)
    device = DeviceSpec(500.0, 50.0, (), (grad,), 1.0, 1.0)
    prof = slice_profile(device, 0.0)
    c = permittivity_fourier_coeffs(prof, 5)
    for n in range(-5, 6):
        expected = _quad_coeff(lambda x: 2.0 + 0.5 * math.cos(2 * math.pi * x / 500.0) ** 3, 0.0, 500.0, n)
        assert abs(c[n + 5] - expected) < 1e-13
    # cos^3 = (3 cos + cos 3x) / 4
    assert c[5 + 1] == pytest.approx(0.5 * 3 / 8, abs=1e-14)
    assert c[5 + 3] == pytest.approx(0.5 / 8, abs=1e-14)


def test_homogeneous_slice_is_exactly_diagonal():
    prof = slice_profile(devices.slab_device(), 0.0)
    E = slice_toeplitz(prof, 5)
    assert np.array_equal(E, 2.25 * np.eye(11))


@given(st.integers(0, 6), st.integers(0, 10_000))
def test_toeplitz_structure(M, seed):
    rng = np.random.default_rng(seed)
    P = 2 * M + int(rng.integers(0, 3))
    c = rng.normal(size=2 * P + 1) + 1j * rng.normal(size=2 * P + 1)
    E = toeplitz_matrix(c, M)
    for n in range(-M, M + 1):
        for m in range(-M, M + 1):
            assert E[n + M, m + M] == c[P + n - m]


@given(st.floats(0.05, 0.95), st.floats(1.0, 6.0))
def test_toeplitz_hermitian_for_real_profiles(duty, eps):
    device = devices.lamellar_grating(eps_ridge=eps, duty=duty)
    E = slice_toeplitz(slice_profile(device, 0.0), 4)
    assert np.allclose(E, E.conj().T, atol=1e-14)


def test_toeplitz_rejects_short_coefficients():
    with pytest.raises(ValueError):
        toeplitz_matrix(np.ones(5), 2)
    with pytest.raises(ValueError):
        toeplitz_matrix(np.ones(4), 1)


def test_truncate():
    assert truncate({-3: 1, -1: 2, 0: 3, 2: 4}, 1) == {-1: 2, 0: 3}


def test_dtn_apply(incident):
    basis = mode_basis(incident, devices.empty_device(), 2)
    phi = np.arange(5) + 1j
    assert np.allclose(dtn_apply(basis, "+", phi), 1j * basis.betas_plus * phi)
    with pytest.raises(ValueError):
        dtn_apply(basis, "+", np.ones(3))
    with pytest.raises(ValueError):
        basis.betas("up")
