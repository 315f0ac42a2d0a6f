"""Closed-form reference solutions for layered media and free space."""

from __future__ import annotations

import dataclasses

import numpy as np

from .errors import RayleighAnomaly
from .geometry import DeviceSpec, InterfaceProfile, admissible_class
from .modal import ANOMALY_TOL, IncidentWave, branch_sqrt


@dataclasses.dataclass(frozen=True)
class LayerStack:
    """Homogeneous layers listed from top to bottom between two half-spaces.

    Attributes:
        layers: ``(eps, thickness)`` pairs, top layer first.
        eps_plus: Cover permittivity (above).
        eps_minus: Substrate permittivity (below).
    """

    layers: tuple[tuple[complex, float], ...]
    eps_plus: complex = 1.0
    eps_minus: complex = 1.0

    def __post_init__(self):
        layers = tuple((complex(e), float(d)) for e, d in self.layers)
        object.__setattr__(self, "layers", layers)
        for eps, d in layers:
            if not d > 0:
                raise ValueError(f"layer thickness must be positive, got {d}")
            if admissible_class(eps) is None:
                raise ValueError(f"layer permittivity {eps} is not admissible")
        for eps in (self.eps_plus, self.eps_minus):
            if admissible_class(eps) is None:
                raise ValueError(f"half-space permittivity {eps} is not admissible")

    @property
    def thickness(self) -> float:
        return sum(d for _, d in self.layers)

    def to_device(self, period: float, half_height: float | None = None) -> DeviceSpec:
        """The equivalent flat-interface device, centred on ``x2 = 0``.

        If ``half_height`` exceeds half the stack thickness, the extra height
        is filled with the cover medium above and the substrate below.
        """
        total = self.thickness
        H = total / 2 if half_height is None else half_height
        if not total / 2 <= H:
            raise ValueError("half_height is smaller than half the stack thickness")
        pad = H - total / 2
        heights = []
        top = H - pad
        regions = []
        if pad > 0:
            regions.append(complex(self.eps_plus))
            heights.append(top)
        for k, (e, d) in enumerate(self.layers):
            regions.append(e)
            top -= d
            if k < len(self.layers) - 1 or pad > 0:
                heights.append(top)
        if pad > 0:
            regions.append(complex(self.eps_minus))
        if not self.layers:
            regions = [complex(self.eps_plus)]
            heights = []
        interfaces = tuple(InterfaceProfile.flat(y, period) for y in reversed(heights))
        return DeviceSpec(period, H, interfaces, tuple(reversed(regions)), self.eps_plus, self.eps_minus)


@dataclasses.dataclass(frozen=True, eq=False)
class MultilayerSolution:
    """Wave amplitudes of one order in every medium of a layer stack.

    Media are numbered cover (0), layers (1..L) and substrate (L+1).
    ``faces`` holds the interface heights from the top down. Medium ``j``
    carries ``down_j exp(-i k_j (x2 - z)) + up_j exp(i k_j (x2 - z))`` with
    ``z`` its top face (the top of the stack for the cover).
    """

    r: complex
    t: complex
    k: np.ndarray
    faces: np.ndarray
    down: np.ndarray
    up: np.ndarray

    def modal_value(self, x2) -> tuple[np.ndarray, np.ndarray]:
        """Order amplitude ``u(x2)`` and ``du/dx2`` for a unit incident trace."""
        x2 = np.atleast_1d(np.asarray(x2, dtype=float))
        j = np.sum(self.faces[None, :] > x2[:, None], axis=1)
        ref = self.faces[np.maximum(j - 1, 0)]
        k = self.k[j]
        down = self.down[j] * np.exp(-1j * k * (x2 - ref))
        up = self.up[j] * np.exp(1j * k * (x2 - ref))
        return down + up, 1j * k * (up - down)


def _vertical(kappa: float, eps: complex, alpha: float) -> complex:
    gap = kappa**2 * complex(eps) - alpha**2
    if abs(gap) < ANOMALY_TOL * kappa**2:
        raise RayleighAnomaly("grazing order: alpha^2 = kappa^2 * eps")
    return complex(branch_sqrt(gap))


def multilayer_solution(stack: LayerStack, kappa: float, alpha: float, top: float | None = None) -> MultilayerSolution:
    """Reflection and transmission of one order by a layered medium.

    Uses the reflection-ratio recursion from the substrate upward, which only
    multiplies by decaying factors ``exp(2 i k d)``. Amplitudes refer to a unit
    downward wave at the top face of the stack, which sits at ``top``
    (default: half the stack thickness).
    """
    eps = [complex(stack.eps_plus)] + [e for e, _ in stack.layers] + [complex(stack.eps_minus)]
    d = np.array([0.0] + [t for _, t in stack.layers] + [0.0])
    k = np.array([_vertical(kappa, e, alpha) for e in eps])
    n = len(eps)
    top = stack.thickness / 2 if top is None else float(top)
    faces = top - np.cumsum(d[:-1])
    # Up/down ratios at the bottom face and the top face of every medium.
    at_top = np.zeros(n, dtype=complex)
    at_bottom = np.zeros(n, dtype=complex)
    for j in range(n - 2, -1, -1):
        Z = k[j + 1] * (1 - at_top[j + 1]) / (k[j] * (1 + at_top[j + 1]))
        at_bottom[j] = (1 - Z) / (1 + Z)
        at_top[j] = at_bottom[j] * np.exp(2j * k[j] * d[j])
    down = np.zeros(n, dtype=complex)
    down[0] = 1.0
    for j in range(n - 1):
        leaving = down[j] * np.exp(1j * k[j] * d[j])
        down[j + 1] = leaving * (1 + at_bottom[j]) / (1 + at_top[j + 1])
    up = at_top * down
    return MultilayerSolution(complex(at_top[0]), complex(down[-1]), k, faces, down, up)


def multilayer_scattering(stack: LayerStack, incident: IncidentWave, n: int, period: float) -> tuple[complex, complex]:
    """Reflection and transmission coefficients of Rayleigh order ``n``.

    Raises:
        RayleighAnomaly: If the order is grazing in the cover or substrate.
    """
    alpha = incident.alpha + 2 * np.pi * n / period
    sol = multilayer_solution(stack, incident.kappa, alpha)
    return sol.r, sol.t


def homogeneous_field(incident: IncidentWave, eps: complex = 1.0):
    """Evaluator of the free-space plane wave and its gradient.

    Returns:
        A function ``(x1, x2) -> (u, du_dx1, du_dx2)``.
    """
    kappa = incident.kappa
    alpha = incident.alpha
    beta = complex(branch_sqrt(kappa**2 * complex(eps) - alpha**2))
    amp = incident.amplitude

    def evaluate(x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        u = amp * np.exp(1j * (alpha * x1 - beta * x2))
        return u, 1j * alpha * u, -1j * beta * u

    return evaluate
