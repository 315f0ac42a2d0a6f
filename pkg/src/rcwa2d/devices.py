"""Ready-made devices: the metal gratings used for the convergence studies and test fixtures.

Lengths are in nanometres.
"""

from __future__ import annotations

import numpy as np

from .geometry import DeviceSpec, InterfaceProfile
from .modal import IncidentWave

METAL_EPS = -15 + 4j
PERIOD = 500.0
WAVELENGTH = 600.0
AIR_THICKNESS = 1500.0
BACKING = 50.0


def paper_incident() -> IncidentWave:
    """Normal incidence at 600 nm."""
    return IncidentWave(WAVELENGTH, 0.0)


def metal_grating(
    height: float,
    peak_offset: float,
    backing: float = BACKING,
    air: float = AIR_THICKNESS,
    period: float = PERIOD,
    eps_metal: complex = METAL_EPS,
) -> DeviceSpec:
    """Triangular metal tooth on a metal backing layer under an air layer.

    The backing fills ``[-H, -H + backing]``; the tooth rises from the top of
    the backing to ``height`` above it, peaking at ``period/2 + peak_offset``.
    The air layer spans from the top of the backing to ``x2 = H``.
    """
    H = 0.5 * (backing + air)
    base = -H + backing
    tooth = InterfaceProfile.triangle(period, base, base + height, 0.5 * period + peak_offset)
    return DeviceSpec(period, H, (tooth,), (eps_metal, 1.0), 1.0, 1.0)


def nonsymmetric_grating(**kwargs) -> DeviceSpec:
    """50 nm tooth with its peak 62.5 nm right of centre, on 50 nm of metal."""
    return metal_grating(50.0, 62.5, **kwargs)


def symmetric_grating(**kwargs) -> DeviceSpec:
    """100 nm tooth centred in the period, on 50 nm of metal."""
    return metal_grating(100.0, 0.0, **kwargs)


def lamellar_grating(
    eps_ridge: complex = 2.25,
    eps_cover: complex = 1.0,
    ridge_height: float = 200.0,
    duty: float = 0.5,
    period: float = PERIOD,
    clearance: float = 100.0,
) -> DeviceSpec:
    """Rectangular ridges standing on a half-space of the ridge material.

    Ridges of width ``duty * period`` are centred in the period and span
    ``x2`` in ``[-ridge_height/2, ridge_height/2]``; the cover fills the grooves.
    """
    H = 0.5 * ridge_height + clearance
    lo, hi = -0.5 * ridge_height, 0.5 * ridge_height
    x0 = 0.5 * period * (1 - duty)
    ridge = InterfaceProfile.lamellar(period, lo, hi, x0, x0 + duty * period)
    return DeviceSpec(period, H, (ridge,), (eps_ridge, eps_cover), eps_cover, eps_ridge)


def slab_device(eps: complex = 2.25, thickness: float = 100.0, period: float = PERIOD, clearance: float = 50.0) -> DeviceSpec:
    """A homogeneous slab centred on ``x2 = 0`` with air around it."""
    H = 0.5 * thickness + clearance
    interfaces = (
        InterfaceProfile.flat(-0.5 * thickness, period),
        InterfaceProfile.flat(0.5 * thickness, period),
    )
    return DeviceSpec(period, H, interfaces, (1.0, eps, 1.0), 1.0, 1.0)


def empty_device(period: float = PERIOD, half_height: float = 100.0) -> DeviceSpec:
    return DeviceSpec(period, half_height, (), (1.0,), 1.0, 1.0)


def sinusoidal_device(
    amplitude: float = 50.0,
    eps_below: complex = 2.25,
    eps_above: complex = 1.0,
    period: float = PERIOD,
    half_height: float = 150.0,
) -> DeviceSpec:
    """One sinusoidal interface ``amplitude * sin(2 pi x1 / period)`` between two media."""
    iface = InterfaceProfile.sine(period, 0.0, amplitude)
    return DeviceSpec(period, half_height, (iface,), (eps_below, eps_above), eps_above, eps_below)


def evanescent_stack(
    slices: int = 40,
    wavelength: float = WAVELENGTH,
    eps: complex = 1 + 4j,
    period: float = PERIOD,
    modulation: float = 0.5,
) -> DeviceSpec:
    """``slices`` lossy layers filling a total thickness of two wavelengths.

    Layers alternate between ``eps`` and ``eps + modulation`` so every face is
    a genuine interface; the stack sits between air half-spaces.
    """
    H = wavelength
    heights = np.linspace(-H, H, slices + 1)[1:-1]
    interfaces = tuple(InterfaceProfile.flat(float(y), period) for y in heights)
    regions = tuple(eps + (modulation if k % 2 else 0.0) for k in range(slices))
    return DeviceSpec(period, H, interfaces, regions, 1.0, 1.0)
