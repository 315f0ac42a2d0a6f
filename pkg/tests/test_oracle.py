import cmath
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rcwa2d import IncidentWave, LayerStack, multilayer_scattering, multilayer_solution
from rcwa2d.oracle import homogeneous_field


def test_slab_reflectance_closed_form(incident):
    # Slab: R = (0.4/1.04)^2 for eps = 2.25, d = 100 nm at 600 nm.
    r, t = multilayer_scattering(LayerStack(((2.25, 100.0),)), incident, 0, 500.0)
    assert abs(r) ** 2 == pytest.approx((0.4 / 1.04) ** 2, rel=1e-12)
    assert abs(r) ** 2 + abs(t) ** 2 == pytest.approx(1.0, abs=1e-14)


def test_fabry_perot_formula(oblique):
    eps, d = 3.1 + 0.2j, 137.0
    k0 = oblique.kappa * math.cos(oblique.theta)
    k1 = cmath.sqrt(oblique.kappa**2 * eps - oblique.alpha**2)
    r01 = (k0 - k1) / (k0 + k1)
    ph = cmath.exp(2j * k1 * d)
    expected_r = r01 * (1 - ph) / (1 - r01**2 * ph)
    expected_t = (1 - r01**2) * cmath.exp(1j * k1 * d) / (1 - r01**2 * ph)
    r, t = multilayer_scattering(LayerStack(((eps, d),)), oblique, 0, 500.0)
    assert abs(r - expected_r) < 1e-14
    assert abs(t - expected_t) < 1e-14


def test_single_interface_fresnel(incident):
    # A layer of the substrate material is the same as a bare interface, up to phase.
    stack = LayerStack(((2.25, 80.0),), 1.0, 2.25)
    r, t = multilayer_scattering(stack, incident, 0, 500.0)
    assert abs(r) == pytest.approx(0.5 / 2.5, rel=1e-13)
    assert abs(t) == pytest.approx(2 / 2.5, rel=1e-13)


def test_thick_metal_is_stable(incident):
    stack = LayerStack(((-15 + 4j, 5000.0), (1 + 4j, 5000.0)))
    sol = multilayer_solution(stack, incident.kappa, 3.0)
    assert np.all(np.isfinite(sol.down)) and np.all(np.isfinite(sol.up))
    assert abs(sol.t) < 1e-100


def test_field_continuity_across_faces(oblique):
    stack = LayerStack(((2.0, 40.0), (-10 + 2j, 25.0), (3 + 1j, 60.0)), 1.0, 1.7)
    sol = multilayer_solution(stack, oblique.kappa, oblique.alpha)
    for z in sol.faces:
        u_up, du_up = sol.modal_value([z + 1e-9])
        u_dn, du_dn = sol.modal_value([z - 1e-9])
        assert abs(u_up[0] - u_dn[0]) < 1e-7
        assert abs(du_up[0] - du_dn[0]) < 1e-7


@given(st.integers(0, 10_000))
def test_lossless_stacks_conserve_energy(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 6))
    layers = tuple((float(rng.uniform(1, 6)), float(rng.uniform(5, 300))) for _ in range(n))
    eps_minus = float(rng.uniform(1, 4))
    inc = IncidentWave(600.0, math.radians(float(rng.uniform(-70, 70))))
    sol = multilayer_solution(LayerStack(layers, 1.0, eps_minus), inc.kappa, inc.alpha)
    k0, kN = sol.k[0].real, sol.k[-1].real
    assert abs(sol.r) ** 2 + kN / k0 * abs(sol.t) ** 2 == pytest.approx(1.0, abs=1e-12)


def test_stack_validation():
    with pytest.raises(ValueError):
        LayerStack(((2.0, 0.0),))
    with pytest.raises(ValueError):
        LayerStack(((-2.0, 10.0),))
    with pytest.raises(ValueError):
        LayerStack(((2.0, 10.0),), eps_minus=-1.0)


def test_to_device_padding():
    stack = LayerStack(((2.0, 40.0), (3.0, 60.0)))
    device = stack.to_device(500.0, half_height=80.0)
    assert device.half_height == 80.0
    assert device.permittivity(0.0, 70.0) == 1.0
    assert device.permittivity(0.0, 30.0) == 2.0
    assert device.permittivity(0.0, -30.0) == 3.0
    with pytest.raises(ValueError):
        stack.to_device(500.0, half_height=20.0)


def test_homogeneous_field(oblique):
    f = homogeneous_field(oblique)
    u, d1, d2 = f(np.array([0.0, 10.0]), np.array([0.0, -5.0]))
    beta = oblique.kappa * math.cos(oblique.theta)
    assert u[0] == 1.0
    assert u[1] == pytest.approx(cmath.exp(1j * (oblique.alpha * 10.0 + beta * 5.0)))
    assert d1[1] == pytest.approx(1j * oblique.alpha * u[1])
    assert d2[1] == pytest.approx(-1j * beta * u[1])
