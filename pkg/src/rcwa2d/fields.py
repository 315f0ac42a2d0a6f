"""Field evaluation, diffraction efficiencies and discrete norms.

Norms over the device ``(0, L) x (-H, H)`` use Parseval in ``x1`` (the
Rayleigh orders are orthogonal) and composite Gauss-Legendre quadrature in
``x2``, split at every point where either field is not analytic.
"""

from __future__ import annotations

import dataclasses
from typing import Protocol

import numpy as np

from .modal import IncidentWave, branch_sqrt
from .oracle import LayerStack, multilayer_solution
from .solver import ScatterSolution

GL_ORDER = 8


class ModalField(Protocol):
    """Anything expressible as ``sum_n u_n(x2) exp(i alpha_n x1)``."""

    @property
    def mode_indices(self) -> np.ndarray: ...

    @property
    def alphas(self) -> np.ndarray: ...

    @property
    def breakpoints(self) -> np.ndarray: ...

    @property
    def max_wavenumber(self) -> float: ...

    def modal_values(self, x2) -> tuple[np.ndarray, np.ndarray]: ...


@dataclasses.dataclass(frozen=True)
class FieldSample:
    x1: float
    x2: float
    value: complex
    gradient: tuple[complex, complex]


# ---------------------------------------------------------------------------
# Point evaluation
# ---------------------------------------------------------------------------


def _synthesize(field: ModalField, x1, x2):
    x1, x2 = np.broadcast_arrays(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float))
    shape = x1.shape
    x1, x2 = x1.ravel(), x2.ravel()
    u_n, du_n = field.modal_values(x2)
    phase = np.exp(1j * np.outer(x1, field.alphas))
    u = np.sum(u_n * phase, axis=1)
    d1 = np.sum(1j * field.alphas * u_n * phase, axis=1)
    d2 = np.sum(du_n * phase, axis=1)
    return u.reshape(shape), d1.reshape(shape), d2.reshape(shape)


def evaluate_field(field: ModalField, x1, x2) -> np.ndarray:
    """Total field at the given points (any ``x1``; quasi-periodicity is built in)."""
    return _synthesize(field, x1, x2)[0]


def evaluate_gradient(field: ModalField, x1, x2) -> tuple[np.ndarray, np.ndarray]:
    """``(du/dx1, du/dx2)`` at the given points."""
    _, d1, d2 = _synthesize(field, x1, x2)
    return d1, d2


def field_samples(field: ModalField, points) -> list[FieldSample]:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    u, d1, d2 = _synthesize(field, pts[:, 0], pts[:, 1])
    return [FieldSample(float(p[0]), float(p[1]), complex(a), (complex(b), complex(c))) for p, a, b, c in zip(pts, u, d1, d2)]


def field_grid(field: ModalField, period: float, half_height: float, nx: int = 64, nz: int = 128) -> np.ndarray:
    """Rows ``(x1, x2, Re u, Im u)`` on a regular grid over one period."""
    x1 = (np.arange(nx) + 0.5) * period / nx
    x2 = np.linspace(-half_height, half_height, nz)
    X1, X2 = np.meshgrid(x1, x2)
    u = evaluate_field(field, X1, X2)
    return np.column_stack([X1.ravel(), X2.ravel(), u.real.ravel(), u.imag.ravel()])


# ---------------------------------------------------------------------------
# Efficiencies
# ---------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class EfficiencyTable:
    """Reflected and transmitted efficiencies of the propagating orders."""

    orders_reflected: np.ndarray
    R: np.ndarray
    orders_transmitted: np.ndarray
    T: np.ndarray
    absorbed: float

    @property
    def total_reflected(self) -> float:
        return float(np.sum(self.R))

    @property
    def total_transmitted(self) -> float:
        return float(np.sum(self.T))

    def to_dict(self) -> dict:
        return {
            "reflected": {int(n): float(v) for n, v in zip(self.orders_reflected, self.R)},
            "transmitted": {int(n): float(v) for n, v in zip(self.orders_transmitted, self.T)},
            "absorbed": self.absorbed,
        }


def diffraction_efficiencies(sol: ScatterSolution) -> EfficiencyTable:
    """Power fractions carried by the propagating orders.

    ``R_n = Re(beta_n^+)/beta_0 |r_n|^2`` and ``T_n = Re(beta_n^-)/beta_0 |t_n|^2``
    with ``r, t`` normalized by the incident trace.
    """
    basis = sol.basis
    beta0 = basis.beta0.real
    up = basis.propagating("+")
    down = basis.propagating("-")
    R = basis.betas_plus.real[up] / beta0 * np.abs(sol.r[up]) ** 2
    T = basis.betas_minus.real[down] / beta0 * np.abs(sol.t[down]) ** 2
    absorbed = float(1.0 - R.sum() - T.sum())
    return EfficiencyTable(basis.indices[up], R, basis.indices[down], T, absorbed)


# ---------------------------------------------------------------------------
# Adapters for reference fields
# ---------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True, eq=False)
class PlaneWaveField:
    """The incident plane wave, continued through all of space."""

    incident: IncidentWave
    period: float
    eps: complex = 1.0

    @property
    def mode_indices(self) -> np.ndarray:
        return np.array([0])

    @property
    def alphas(self) -> np.ndarray:
        return np.array([self.incident.alpha])

    @property
    def beta(self) -> complex:
        return complex(branch_sqrt(self.incident.kappa**2 * complex(self.eps) - self.incident.alpha**2))

    @property
    def breakpoints(self) -> np.ndarray:
        return np.array([])

    @property
    def max_wavenumber(self) -> float:
        return abs(self.beta)

    def modal_values(self, x2):
        x2 = np.atleast_1d(np.asarray(x2, dtype=float))
        u = self.incident.amplitude * np.exp(-1j * self.beta * x2)
        return u[:, None], (-1j * self.beta * u)[:, None]


@dataclasses.dataclass(frozen=True, eq=False)
class MultilayerField:
    """Exact field of a layer stack under plane-wave incidence (order 0 only)."""

    stack: LayerStack
    incident: IncidentWave
    top: float

    def __post_init__(self):
        sol = multilayer_solution(self.stack, self.incident.kappa, self.incident.alpha, self.top)
        object.__setattr__(self, "_sol", sol)
        beta0 = sol.k[0]
        object.__setattr__(self, "_scale", self.incident.amplitude * np.exp(-1j * beta0 * self.top))

    @property
    def mode_indices(self) -> np.ndarray:
        return np.array([0])

    @property
    def alphas(self) -> np.ndarray:
        return np.array([self.incident.alpha])

    @property
    def breakpoints(self) -> np.ndarray:
        return np.asarray(self._sol.faces)

    @property
    def max_wavenumber(self) -> float:
        return float(np.max(np.abs(self._sol.k)))

    def modal_values(self, x2):
        u, du = self._sol.modal_value(x2)
        return (self._scale * u)[:, None], (self._scale * du)[:, None]


@dataclasses.dataclass(frozen=True, eq=False)
class ScatteredField:
    """``total - incident``, the field that radiates away from the device."""

    total: ModalField
    incident: IncidentWave
    eps: complex = 1.0

    @property
    def mode_indices(self) -> np.ndarray:
        return self.total.mode_indices

    @property
    def alphas(self) -> np.ndarray:
        return self.total.alphas

    @property
    def breakpoints(self) -> np.ndarray:
        return self.total.breakpoints

    @property
    def max_wavenumber(self) -> float:
        return self.total.max_wavenumber

    def modal_values(self, x2):
        u, du = self.total.modal_values(x2)
        pw = PlaneWaveField(self.incident, 0.0, self.eps)
        ui, dui = pw.modal_values(x2)
        zero = int(np.flatnonzero(self.mode_indices == 0)[0])
        u = u.copy()
        du = du.copy()
        u[:, zero] -= ui[:, 0]
        du[:, zero] -= dui[:, 0]
        return u, du


# ---------------------------------------------------------------------------
# Norms
# ---------------------------------------------------------------------------


def quadrature_nodes(breaks, lo: float, hi: float, k_max: float, order: int = GL_ORDER) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes on ``[lo, hi]``.

    Panels are split at ``breaks`` and refined so that ``width * k_max <= 1``.
    """
    pts = np.unique(np.concatenate([[lo, hi], np.asarray(breaks, dtype=float)]))
    pts = pts[(pts >= lo) & (pts <= hi)]
    gx, gw = np.polynomial.legendre.leggauss(order)
    nodes, weights = [], []
    for a, b in zip(pts[:-1], pts[1:]):
        if b - a <= 1e-12 * max(abs(hi - lo), 1.0):
            continue
        panels = max(1, int(np.ceil((b - a) * k_max)))
        edges = np.linspace(a, b, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        nodes.append((mid[:, None] + half[:, None] * gx[None, :]).ravel())
        weights.append((half[:, None] * gw[None, :]).ravel())
    return np.concatenate(nodes), np.concatenate(weights)


def _aligned(field: ModalField, indices: np.ndarray, x2: np.ndarray):
    u, du = field.modal_values(x2)
    out_u = np.zeros((len(x2), len(indices)), dtype=complex)
    out_du = np.zeros_like(out_u)
    pos = np.searchsorted(indices, field.mode_indices)
    out_u[:, pos] = u
    out_du[:, pos] = du
    return out_u, out_du


def _norm_parts(fields, signs, half_height: float, period: float, order: int, chunk: int = 4096):
    """Squared L2 norm and squared gradient seminorm of ``sum(sign * field)``."""
    indices = np.unique(np.concatenate([f.mode_indices for f in fields]))
    first = fields[0]
    alpha = first.alphas[0] - 2 * np.pi * first.mode_indices[0] / period
    alphas = alpha + 2 * np.pi * indices / period
    breaks = np.concatenate([np.asarray(f.breakpoints, dtype=float) for f in fields])
    k_max = max(max(f.max_wavenumber for f in fields), float(np.max(np.abs(alphas))) if len(alphas) else 0.0)
    x2, w = quadrature_nodes(breaks, -half_height, half_height, k_max, order)
    l2 = 0.0
    grad = 0.0
    for s in range(0, len(x2), chunk):
        xs, ws = x2[s : s + chunk], w[s : s + chunk]
        u = np.zeros((len(xs), len(indices)), dtype=complex)
        du = np.zeros_like(u)
        for f, sign in zip(fields, signs):
            fu, fdu = _aligned(f, indices, xs)
            u += sign * fu
            du += sign * fdu
        au2 = np.abs(u) ** 2
        l2 += period * float(ws @ au2.sum(axis=1))
        grad += period * float(ws @ ((alphas.real**2 + alphas.imag**2) * au2 + np.abs(du) ** 2).sum(axis=1))
    return l2, grad


def _length_scale(field: ModalField, length_scale: float | None) -> float:
    if length_scale is not None:
        return float(length_scale)
    return 1.0 / field.incident.kappa


def field_norm(
    field: ModalField,
    half_height: float,
    period: float,
    norm: str = "L2",
    length_scale: float | None = None,
    order: int = GL_ORDER,
) -> float:
    """``||u||`` over the device in ``L2`` or the full ``H1`` norm.

    The H1 norm is ``(||u||^2 + l^2 ||grad u||^2)^(1/2)``; the length ``l``
    defaults to ``1/kappa`` so the result does not depend on the length unit.
    """
    if norm.upper() not in ("L2", "H1"):
        raise ValueError(f"norm must be 'L2' or 'H1', got {norm!r}")
    l2, grad = _norm_parts([field], [1.0], half_height, period, order)
    if norm.upper() == "L2":
        return float(np.sqrt(l2))
    ell = _length_scale(field, length_scale)
    return float(np.sqrt(l2 + ell**2 * grad))


def norm_errors(
    a: ModalField,
    b: ModalField,
    half_height: float,
    period: float,
    length_scale: float | None = None,
    order: int = GL_ORDER,
) -> dict:
    """Relative errors ``||a - b|| / ||b||`` in the L2 and H1 norms.

    Raises:
        ValueError: If the reference ``b`` vanishes.
    """
    ref_l2, ref_grad = _norm_parts([b], [1.0], half_height, period, order)
    if ref_l2 <= 0.0:
        raise ValueError("reference field has zero norm")
    diff_l2, diff_grad = _norm_parts([a, b], [1.0, -1.0], half_height, period, order)
    ell2 = _length_scale(b, length_scale) ** 2
    return {
        "L2": float(np.sqrt(diff_l2 / ref_l2)),
        "H1": float(np.sqrt((diff_l2 + ell2 * diff_grad) / (ref_l2 + ell2 * ref_grad))),
    }


def norm_error(
    a: ModalField,
    b: ModalField,
    half_height: float,
    period: float,
    norm: str = "L2",
    length_scale: float | None = None,
    order: int = GL_ORDER,
) -> float:
    """Relative error ``||a - b|| / ||b||`` in the ``L2`` or ``H1`` norm.

    Raises:
        ValueError: If the reference ``b`` vanishes or ``norm`` is unknown.
    """
    key = norm.upper()
    if key not in ("L2", "H1"):
        raise ValueError(f"norm must be 'L2' or 'H1', got {norm!r}")
    return norm_errors(a, b, half_height, period, length_scale, order)[key]
