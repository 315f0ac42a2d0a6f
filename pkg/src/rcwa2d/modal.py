"""Quasi-periodic Fourier machinery: orders, vertical wavenumbers, Toeplitz blocks."""

from __future__ import annotations

import dataclasses
import math
from typing import Mapping

import numpy as np
from scipy.linalg import toeplitz

from .errors import RayleighAnomaly
from .geometry import DeviceSpec, SliceProfile

ANOMALY_TOL = 1e-12


@dataclasses.dataclass(frozen=True)
class IncidentWave:
    """Plane wave ``amplitude * exp(i(alpha x1 - beta_0 x2))`` arriving from above.

    Attributes:
        wavelength: Free-space wavelength, same length unit as the device.
        theta: Angle of incidence in radians, measured from the downward normal.
        amplitude: Complex amplitude of the incident wave.
    """

    wavelength: float
    theta: float = 0.0
    amplitude: complex = 1.0

    def __post_init__(self):
        if not self.wavelength > 0:
            raise ValueError(f"wavelength must be positive, got {self.wavelength}")
        if not abs(self.theta) < math.pi / 2:
            raise ValueError(f"|theta| must be below pi/2, got {self.theta}")
        object.__setattr__(self, "amplitude", complex(self.amplitude))

    @property
    def kappa(self) -> float:
        return 2 * math.pi / self.wavelength

    @property
    def alpha(self) -> float:
        """Horizontal wavenumber ``kappa * sin(theta)``."""
        return self.kappa * math.sin(self.theta)

    def rayleigh_coefficients(self, M: int) -> np.ndarray:
        out = np.zeros(2 * M + 1, dtype=complex)
        out[M] = self.amplitude
        return out


def branch_sqrt(z) -> np.ndarray:
    """Square root with ``Im >= 0``, and ``Re >= 0`` when the result is real."""
    root = np.sqrt(np.asarray(z, dtype=complex))
    flip = (root.imag < 0) | ((root.imag == 0) & (root.real < 0))
    return np.where(flip, -root, root)


@dataclasses.dataclass(frozen=True, eq=False)
class ModeBasis:
    """Retained Rayleigh orders ``n = -M..M`` and their wavenumbers."""

    M: int
    kappa: float
    alpha: float
    period: float
    eps_plus: complex
    eps_minus: complex
    alphas: np.ndarray
    betas_plus: np.ndarray
    betas_minus: np.ndarray

    @property
    def size(self) -> int:
        return 2 * self.M + 1

    @property
    def indices(self) -> np.ndarray:
        return np.arange(-self.M, self.M + 1)

    @property
    def beta0(self) -> complex:
        return self.betas_plus[self.M]

    def betas(self, side: str) -> np.ndarray:
        if side in ("+", "plus"):
            return self.betas_plus
        if side in ("-", "minus"):
            return self.betas_minus
        raise ValueError(f"side must be '+' or '-', got {side!r}")

    def propagating(self, side: str) -> np.ndarray:
        """Mask of orders carrying power away in the given half-space."""
        b = self.betas(side)
        return np.abs(b.imag) <= 1e-14 * np.abs(b)


def make_basis(kappa: float, alpha: float, period: float, eps_plus: complex, eps_minus: complex, M: int) -> ModeBasis:
    if M < 0 or int(M) != M:
        raise ValueError(f"M must be a non-negative integer, got {M}")
    M = int(M)
    n = np.arange(-M, M + 1)
    alphas = alpha + 2 * np.pi * n / period
    betas = []
    for name, eps in (("eps_plus", eps_plus), ("eps_minus", eps_minus)):
        gap = kappa**2 * complex(eps) - alphas**2
        bad = np.abs(gap) < ANOMALY_TOL * kappa**2
        if np.any(bad):
            raise RayleighAnomaly(
                f"order(s) {list(n[bad])} are grazing in {name} (alpha_n^2 = kappa^2 * eps)"
            )
        betas.append(branch_sqrt(gap))
    return ModeBasis(M, kappa, alpha, period, complex(eps_plus), complex(eps_minus), alphas, betas[0], betas[1])


def mode_basis(incident: IncidentWave, device: DeviceSpec, M: int) -> ModeBasis:
    """Build the mode basis for ``incident`` on ``device`` with ``2M+1`` orders.

    Raises:
        RayleighAnomaly: If some retained order is grazing in either half-space.
    """
    return make_basis(
        incident.kappa,
        incident.alpha,
        device.period,
        device.eps_plus,
        device.eps_minus,
        M,
    )


# ---------------------------------------------------------------------------
# Fourier coefficients
# ---------------------------------------------------------------------------


def _interval_transform(a: float, b: float, n: np.ndarray, period: float) -> np.ndarray:
    """``(1/L) int_a^b exp(-2 pi i n x / L) dx`` for integer ``n``."""
    out = np.empty(n.shape, dtype=complex)
    zero = n == 0
    out[zero] = (b - a) / period
    k = 2 * np.pi * n[~zero] / period
    out[~zero] = (np.exp(-1j * k * b) - np.exp(-1j * k * a)) / (-1j * k * period)
    return out


def permittivity_fourier_coeffs(profile: SliceProfile, order: int) -> np.ndarray:
    """Fourier coefficients ``c_n, n = -order..order`` of one slice profile.

    Constant pieces are integrated in closed form; graded pieces use composite
    Gauss-Legendre panels fine enough to resolve ``exp(-2 pi i n x / L)``.
    """
    if order < 0:
        raise ValueError("order must be non-negative")
    L = profile.period
    n = np.arange(-order, order + 1)
    coeffs = np.zeros(n.shape, dtype=complex)
    if len(profile.values) == 1 and not callable(profile.values[0]):
        # Homogeneous slice: exact zeros off the mean, not round-off.
        coeffs[order] = complex(profile.values[0])
        return coeffs
    nodes, weights = np.polynomial.legendre.leggauss(24)
    for p, value in enumerate(profile.values):
        a, b = float(profile.breakpoints[p]), float(profile.breakpoints[p + 1])
        if not callable(value):
            coeffs += complex(value) * _interval_transform(a, b, n, L)
            continue
        panels = max(1, int(math.ceil((order + 8) * (b - a) / L)))
        edges = np.linspace(a, b, panels + 1)
        for lo, hi in zip(edges[:-1], edges[1:]):
            xs = lo + 0.5 * (hi - lo) * (nodes + 1)
            fx = np.asarray(value(xs), dtype=complex)
            phase = np.exp(-2j * np.pi * np.outer(n, xs) / L)
            coeffs += 0.5 * (hi - lo) / L * (phase @ (weights * fx))
    return coeffs


def toeplitz_matrix(coeffs: np.ndarray, M: int) -> np.ndarray:
    """Convolution matrix ``E[n, m] = c[n - m]`` for ``n, m = -M..M``.

    Args:
        coeffs: Coefficients indexed ``-P..P`` (length ``2P+1``) with ``P >= 2M``.
        M: Truncation order.
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    if coeffs.ndim != 1 or len(coeffs) % 2 != 1:
        raise ValueError("coefficients must be a 1-D sequence of odd length indexed -P..P")
    P = len(coeffs) // 2
    if P < 2 * M:
        raise ValueError(f"need coefficients up to |n| = {2 * M}, got {P}")
    column = coeffs[P : P + 2 * M + 1]
    row = coeffs[P - 2 * M : P + 1][::-1]
    return toeplitz(column, row)


def slice_toeplitz(profile: SliceProfile, M: int) -> np.ndarray:
    return toeplitz_matrix(permittivity_fourier_coeffs(profile, 2 * M), M)


# ---------------------------------------------------------------------------
# Truncation and Dirichlet-to-Neumann map
# ---------------------------------------------------------------------------


def truncate(expansion: Mapping[int, object], M: int) -> dict:
    """Keep the orders ``|n| <= M`` of a coefficient map."""
    return {n: v for n, v in expansion.items() if -M <= n <= M}


def dtn_apply(basis: ModeBasis, side: str, trace_coeffs) -> np.ndarray:
    """Apply the discrete Dirichlet-to-Neumann operator: ``phi_n -> i beta_n phi_n``."""
    phi = np.asarray(trace_coeffs, dtype=complex)
    if phi.shape[0] != basis.size:
        raise ValueError(f"expected {basis.size} coefficients, got {phi.shape[0]}")
    beta = basis.betas(side)
    return 1j * (beta.reshape((-1,) + (1,) * (phi.ndim - 1))) * phi
