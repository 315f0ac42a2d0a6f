"""Theory diagnostics: Galerkin residual and explicit a-priori constants."""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .fields import GL_ORDER, ScatteredField, field_norm
from .geometry import (
    DeviceSpec,
    GradedPermittivity,
    SlicedPermittivity,
    check_nontrapping,
    stairstep_permittivity,
)
from .modal import IncidentWave, branch_sqrt, permittivity_fourier_coeffs
from .solver import ScatterSolution

INTERFACE_SAMPLES = 1024


# ---------------------------------------------------------------------------
# Galerkin residual
# ---------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True, eq=False)
class ResidualReport:
    """Residuals against test functions ``xi_i(x2) exp(i alpha_m x1)``.

    ``values[m, i]`` pairs order ``orders[m]`` with the hat function centred
    on slice boundary ``i`` (counted from ``x2 = -H``). ``relative`` divides
    by ``||u||_E ||v||_E`` in the energy norm ``(||grad w||^2 + kappa^2 ||w||^2)^(1/2)``.
    """

    orders: np.ndarray
    nodes: np.ndarray
    values: np.ndarray
    relative: np.ndarray

    def max_relative(self, max_order: int | None = None) -> float:
        rows = np.abs(self.orders) <= (max_order if max_order is not None else np.inf)
        return float(np.max(self.relative[rows])) if np.any(rows) else 0.0


def _rect_toeplitz(coeffs: np.ndarray, test_order: int, M: int) -> np.ndarray:
    P = len(coeffs) // 2
    m = np.arange(-test_order, test_order + 1)[:, None]
    k = np.arange(-M, M + 1)[None, :]
    return coeffs[P + m - k]


def sesquilinear_residual(sol: ScatterSolution, test_order: int | None = None, order: int = GL_ORDER) -> ResidualReport:
    """Evaluate the weak form on the RCWA field for hat-times-mode test functions.

    The total-field form is used: ``b(u, v) + 2 i beta_0 L xi(H) u_inc(H)``
    for the order-0 test functions, where ``b`` carries both DtN boundary
    terms. For ``|m| <= M`` it vanishes up to quadrature and round-off
    (Galerkin orthogonality); for ``|m| > M`` it measures the neglected
    coupling to higher orders.
    """
    M = sol.M
    T = M if test_order is None else int(test_order)
    basis = sol.basis
    kappa, L = basis.kappa, basis.period
    orders = np.arange(-T, T + 1)
    alpha_t = basis.alpha + 2 * np.pi * orders / L
    bounds = sol.slicing.boundaries
    S = len(bounds) - 1
    values = np.zeros((len(orders), S + 1), dtype=complex)
    # Positions of the retained orders among the test orders (and vice versa).
    lo, hi = max(-T, -M), min(T, M)
    t_sel = slice(lo + T, hi + T + 1)
    u_sel = slice(lo + M, hi + M + 1)
    gx, gw = np.polynomial.legendre.leggauss(order)
    for layer in sol.layers:
        coeffs = permittivity_fourier_coeffs(layer.profile, T + M)
        E = _rect_toeplitz(coeffs, T, M)
        k_max = max(float(np.max(np.abs(layer.eigen.q))), float(np.max(np.abs(alpha_t))), kappa)
        for j in layer.slices:
            z0, z1 = bounds[j], bounds[j + 1]
            dz = z1 - z0
            panels = max(1, int(math.ceil(dz * k_max)))
            edges = np.linspace(z0, z1, panels + 1)
            half = 0.5 * np.diff(edges)
            x = ((0.5 * (edges[1:] + edges[:-1]))[:, None] + half[:, None] * gx).ravel()
            w = (half[:, None] * gw).ravel()
            u, du = layer.modal_values(x)
            A = -(kappa**2) * (u @ E.T)
            A[:, t_sel] += alpha_t[t_sel] ** 2 * u[:, u_sel]
            B = np.zeros_like(A)
            B[:, t_sel] = du[:, u_sel]
            phi_up = (x - z0) / dz  # hat centred on z1
            phi_down = (z1 - x) / dz  # hat centred on z0
            values[:, j] += L * ((w * phi_down) @ A - (w @ B) / dz)
            values[:, j + 1] += L * ((w * phi_up) @ A + (w @ B) / dz)
    # Dirichlet-to-Neumann terms and the incident-wave source on the top face.
    H = sol.device.half_height
    u_top, _ = sol.modal_values(np.array([H]))
    u_bot, _ = sol.modal_values(np.array([-H]))
    beta_p = branch_sqrt(kappa**2 * basis.eps_plus - alpha_t**2)
    beta_m = branch_sqrt(kappa**2 * basis.eps_minus - alpha_t**2)
    top = np.zeros(len(orders), dtype=complex)
    bot = np.zeros(len(orders), dtype=complex)
    top[t_sel] = u_top[0, u_sel]
    bot[t_sel] = u_bot[0, u_sel]
    values[:, S] -= L * 1j * beta_p * top
    values[:, 0] -= L * 1j * beta_m * bot
    values[T, S] += 2j * basis.beta0 * L * sol.incident_trace[M]

    # Normalization by energy norms of u (scattered part when non-zero) and v.
    scattered = ScatteredField(sol, sol.incident, basis.eps_plus)
    u_norm = field_norm(scattered, H, L, "H1") * kappa
    if u_norm <= 1e-14 * field_norm(sol, H, L, "H1") * kappa:
        u_norm = field_norm(sol, H, L, "H1") * kappa
    dz = np.diff(bounds)
    left = np.r_[0.0, dz]
    right = np.r_[dz, 0.0]
    mass = (left + right) / 3.0
    stiff = np.where(left > 0, 1 / np.where(left > 0, left, 1), 0) + np.where(right > 0, 1 / np.where(right > 0, right, 1), 0)
    v_norm = np.sqrt(L * ((np.abs(alpha_t[:, None]) ** 2 + kappa**2) * mass[None, :] + stiff[None, :]))
    relative = np.abs(values) / (u_norm * v_norm)
    return ResidualReport(orders, bounds.copy(), values, relative)


# ---------------------------------------------------------------------------
# A-priori constants
# ---------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class AprioriReport:
    """Explicit stability constants and a check of the bound they imply.

    ``C_lemma2`` is the geometric constant ``C``; ``C_theorem1`` is
    ``C(kappa, eps)``; ``C_regime`` is the constant of the applicable
    regime (``C(kappa, eps)``, ``C_1`` or ``C_2``).
    """

    applicable: bool
    regime: str
    C_lemma2: float
    C_theorem1: float
    C_regime: float
    rho: float
    eps_sup: float
    min_nu2: float
    min_jump_term: float
    c1: float | None = None
    measured_ratio: float | None = None
    bound_kappa3: float | None = None
    bound_holds: bool | None = None
    bound_holds_regime: bool | None = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _regime(device: DeviceSpec) -> str:
    values = []
    for region in device.regions:
        if isinstance(region, GradedPermittivity):
            x1 = np.linspace(0, device.period, 17)
            values.extend(region(x1, np.zeros_like(x1)))
        else:
            values.append(complex(region))
    values = np.asarray(values)
    if np.any(values.real <= 0):
        return "metallic"
    if np.any(values.imag > 0):
        return "lossy-positive"
    return "positive-real"


def _sup_eps(device: DeviceSpec, samples: int = 64) -> float:
    x1 = np.linspace(0, device.period, samples)
    x2 = np.linspace(-device.half_height, device.half_height, samples)
    X1, X2 = np.meshgrid(x1, x2)
    sup = float(np.max(np.abs(device.permittivity(X1, X2))))
    for region in device.regions:
        if not isinstance(region, GradedPermittivity):
            sup = max(sup, abs(complex(region)))
    return sup


def _min_im_metal(values) -> float | None:
    ims = [complex(v).imag for v in values if complex(v).real <= 0]
    return min(ims) if ims else None


def _interface_terms(device: DeviceSpec, samples: int = INTERFACE_SAMPLES) -> tuple[float, float]:
    """``min |nu_2|`` over the graph parts and ``inf (x2 + H) Re[eps]`` over the interfaces."""
    H = device.half_height
    min_nu2 = 1.0
    inf_jump = math.inf
    for k, iface in enumerate(device.interfaces):
        for seg in iface.segments:
            x = np.linspace(seg.x_start, seg.x_end, samples + 2)
            # Endpoints are evaluated from inside the segment.
            g = seg.value(x)
            slope = seg.slope(x)
            min_nu2 = min(min_nu2, float(np.min(1 / np.sqrt(1 + slope**2))))
            jump = (device.region_value(k + 1, x, g) - device.region_value(k, x, g)).real
            inf_jump = min(inf_jump, float(np.min((g + H) * jump)))
    return min_nu2, inf_jump


def _stairstep_terms(sliced: SlicedPermittivity) -> tuple[float, float]:
    """Interface terms of the stairstepped device: horizontal sections only (``|nu_2| = 1``)."""
    H = sliced.device.half_height
    bounds = sliced.slicing.boundaries
    inf_jump = math.inf
    profiles = sliced.profiles
    for j in range(len(profiles) - 1):
        below, above = profiles[j], profiles[j + 1]
        cuts = np.unique(np.concatenate([below.breakpoints, above.breakpoints]))
        mids = 0.5 * (cuts[1:] + cuts[:-1])
        changed = below.region_at(mids) != above.region_at(mids)
        if not np.any(changed):
            continue
        pts = []
        for a, b in zip(cuts[:-1][changed], cuts[1:][changed]):
            pts.append(np.linspace(a, b, 9)[1:-1])
        x = np.concatenate(pts)
        jump = (above(x) - below(x)).real
        inf_jump = min(inf_jump, float(np.min((bounds[j + 1] + H) * jump)))
    return 1.0, inf_jump


def lemma2_constant(H: float, kappa: float, min_nu2: float, inf_jump: float) -> float:
    """``C = 2H (H + 2 / (kappa^2 min|nu_2| inf((x2 + H)[eps])))``.

    Without interfaces the jump term is absent and ``C = 2 H^2``.

    Raises:
        ValueError: If the jump infimum is not positive (non-trapping violated).
    """
    if math.isinf(inf_jump):
        return 2 * H * H
    if not inf_jump > 0 or not min_nu2 > 0:
        raise ValueError("the jump term must be positive; the non-trapping conditions fail")
    return 2 * H * (H + 2 / (kappa**2 * min_nu2 * inf_jump))


def theorem1_constant(C: float, kappa: float, eps_sup: float, rho: float, H: float) -> float:
    """``C(kappa, eps) = C (1 + kappa^2) ||eps||_inf (2 rho kappa H + 4H + 1) + 1``."""
    return C * (1 + kappa**2) * eps_sup * (2 * rho * kappa * H + 4 * H + 1) + 1


def rho_constant(eps_plus: complex) -> float:
    eps_plus = complex(eps_plus)
    return 2 * math.sqrt(max(eps_plus.real, 0.0)) + math.sqrt(2) * math.sqrt(max(eps_plus.imag, 0.0))


def corollary_constant(Ck: float, kappa: float, eps_sup: float) -> float:
    """``C_1 = 2 Ck (1 + kappa^3) + 2 Ck^2 (1 + kappa^3)^2 kappa^2 ||eps||_inf``."""
    g = 1 + kappa**3
    return 2 * Ck * g + 2 * Ck**2 * g**2 * kappa**2 * eps_sup


def metallic_constant(Ck: float, kappa: float, re_sup: float, c1: float) -> float:
    """``C_2 = max(2, Ck * cal_C) * Ck * (1 + kappa^2)`` with ``cal_C = (||Re eps||_inf + 1)/sqrt(c1)``."""
    cal = (re_sup + 1) / math.sqrt(c1)
    return max(2.0, Ck * cal) * Ck * (1 + kappa**2)


def apriori_constant(
    device: DeviceSpec,
    incident: IncidentWave,
    solution: ScatterSolution | None = None,
    stairstep: SlicedPermittivity | None = None,
) -> AprioriReport:
    """Evaluate the explicit a-priori constants for ``device`` (or its stairstep).

    When ``solution`` is given, the measured ratio ``||u^s||_H1 / ||f||_L2``
    is compared with ``C(kappa, eps) (1 + kappa^3)`` and with the regime
    constant; ``f = kappa^2 (1 - eps_h) u_inc`` and the H1 norm is the plain
    one in the device's length unit, as in the theory.
    """
    kappa = incident.kappa
    H = device.half_height
    report = check_nontrapping(device)
    applicable = report.satisfied
    if stairstep is None:
        min_nu2, inf_jump = _interface_terms(device)
        sup = _sup_eps(device)
        values = [v for v in device.regions if not isinstance(v, GradedPermittivity)]
        re_sup = max(abs(complex(v).real) for v in values) if values else sup
    else:
        min_nu2, inf_jump = _stairstep_terms(stairstep)
        vals = [complex(v) for p in stairstep.profiles for v in p.values if not callable(v)]
        sup = max(abs(v) for v in vals) if vals else _sup_eps(device)
        re_sup = max(abs(v.real) for v in vals) if vals else sup
        values = vals
    regime = _regime(device)
    rho = rho_constant(device.eps_plus)
    try:
        C = lemma2_constant(H, kappa, min_nu2, inf_jump)
    except ValueError:
        applicable = False
        C = math.inf
    Ck = theorem1_constant(C, kappa, sup, rho, H)
    c1 = None
    if regime == "positive-real":
        C_reg = Ck
    elif regime == "lossy-positive":
        C_reg = corollary_constant(Ck, kappa, sup)
    else:
        c1 = _min_im_metal(values)
        C_reg = metallic_constant(Ck, kappa, re_sup, c1) if c1 and c1 > 0 else math.inf
    out = AprioriReport(applicable, regime, C, Ck, C_reg, rho, sup, min_nu2, inf_jump, c1)
    if solution is not None:
        ratio = measured_stability_ratio(solution)
        bound = Ck * (1 + kappa**3)
        out = dataclasses.replace(
            out,
            measured_ratio=ratio,
            bound_kappa3=bound,
            bound_holds=bool(ratio <= bound),
            bound_holds_regime=bool(ratio <= C_reg),
        )
    return out


def source_norm(sol: ScatterSolution, order: int = GL_ORDER) -> float:
    """``||kappa^2 (1 - eps_h) u_inc||_L2`` over the device."""
    kappa = sol.basis.kappa
    sliced = stairstep_permittivity(sol.device, sol.slicing)
    bounds = sol.slicing.boundaries
    beta = sol.basis.beta0
    amp = abs(sol.incident.amplitude)
    gx, gw = np.polynomial.legendre.leggauss(order)
    total = 0.0
    for j, profile in enumerate(sliced.profiles):
        # Exact x1 integral of |1 - eps_h|^2 for constant pieces.
        width = np.diff(profile.breakpoints)
        acc = 0.0
        for p, v in enumerate(profile.values):
            if callable(v):
                a, b = profile.breakpoints[p], profile.breakpoints[p + 1]
                xs = a + 0.5 * (b - a) * (gx + 1)
                acc += 0.5 * (b - a) * float(gw @ np.abs(1 - v(xs)) ** 2)
            else:
                acc += width[p] * abs(1 - complex(v)) ** 2
        z0, z1 = bounds[j], bounds[j + 1]
        xs = z0 + 0.5 * (z1 - z0) * (gx + 1)
        total += acc * 0.5 * (z1 - z0) * float(gw @ np.exp(2 * beta.imag * xs))
    return float(kappa**2 * amp * math.sqrt(total))


def measured_stability_ratio(sol: ScatterSolution) -> float:
    """``||u^s||_H1 / ||f||_L2`` with the unscaled H1 norm."""
    scattered = ScatteredField(sol, sol.incident, sol.basis.eps_plus)
    f = source_norm(sol)
    u = field_norm(scattered, sol.device.half_height, sol.device.period, "H1", length_scale=1.0)
    return u / f if f > 0 else 0.0
