"""Per-slice modal solutions stitched together with scattering matrices.

All scattering matrices act on modal amplitudes expressed in a common
reference basis: the Rayleigh modes of the upper half-space, i.e. plane
waves ``exp(+-i beta_n^+ x2)`` in every order. A zero-thickness gap of this
medium separates neighbouring layers, so every layer S-matrix is independent
of its neighbours and the Redheffer star product stitches them together.
"""

from __future__ import annotations

import dataclasses
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .errors import EigSolverFailure, IllConditioned, SingularInterface
from .geometry import DeviceSpec, SliceProfile, Slicing, stairstep_permittivity
from .modal import IncidentWave, ModeBasis, mode_basis, slice_toeplitz

EIG_RTOL = 1e-10
COND_WARN = 1e10
BRANCH_TOL = 1e-14


# ---------------------------------------------------------------------------
# Slice eigenproblem
# ---------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True, eq=False)
class SliceEigen:
    """Eigenmodes of ``A = kappa^2 E - diag(alpha^2)``: ``A W = W diag(q^2)``."""

    W: np.ndarray
    q: np.ndarray
    thickness: float
    residual: float = 0.0
    condition: float = 1.0

    @property
    def is_diagonal(self) -> bool:
        return self.W.shape[0] == 1 or not np.any(self.W - np.diag(np.diag(self.W)))


def branch_q(eigenvalues) -> np.ndarray:
    """Vertical wavenumbers ``q = sqrt(lambda)`` on the decaying branch."""
    # The principal root has Re q >= 0; flip only clearly growing roots so
    # that round-off never pushes a propagating mode onto Re q < 0.
    q = np.sqrt(np.asarray(eigenvalues, dtype=complex))
    return np.where(q.imag < -BRANCH_TOL * np.abs(q), -q, q)


def slice_eigenmodes(E: np.ndarray, basis: ModeBasis, thickness: float) -> SliceEigen:
    """Diagonalize the truncated modal system of one slice.

    Raises:
        EigSolverFailure: If ``A`` is not numerically diagonalizable.
    """
    E = np.asarray(E, dtype=complex)
    A = basis.kappa**2 * E - np.diag(basis.alphas**2)
    if not np.any(A - np.diag(np.diag(A))):
        return SliceEigen(np.eye(len(A), dtype=complex), branch_q(np.diag(A)), thickness)
    lam, W = np.linalg.eig(A)
    scale = max(np.linalg.norm(A, 1), 1e-300)
    residual = float(np.linalg.norm(A @ W - W * lam, 1) / scale)
    if not np.all(np.isfinite(W)) or residual > EIG_RTOL:
        raise EigSolverFailure(
            f"slice eigen-residual {residual:.2e} exceeds {EIG_RTOL:.0e}; the modal matrix may be "
            "defective. Perturbing the permittivity by ~1e-12 usually lifts the degeneracy."
        )
    cond = float(np.linalg.cond(W))
    if cond > COND_WARN:
        warnings.warn(f"slice eigenvector matrix has condition number {cond:.2e}", IllConditioned, stacklevel=2)
    return SliceEigen(W, branch_q(lam), thickness, residual, cond)


# ---------------------------------------------------------------------------
# Scattering matrices
# ---------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True, eq=False)
class ScatterMatrix:
    """``[up_out; down_out] = [[S11, S12], [S21, S22]] [down_in_top; up_in_bottom]``.

    ``S11`` reflects waves arriving from above, ``S21`` transmits them
    downward, ``S12`` transmits waves arriving from below and ``S22``
    reflects them.
    """

    S11: np.ndarray
    S12: np.ndarray
    S21: np.ndarray
    S22: np.ndarray

    @classmethod
    def identity(cls, n: int) -> "ScatterMatrix":
        z = np.zeros((n, n), dtype=complex)
        eye = np.eye(n, dtype=complex)
        return cls(z, eye, eye, z.copy())

    @property
    def size(self) -> int:
        return self.S11.shape[0]

    def block(self) -> np.ndarray:
        return np.block([[self.S11, self.S12], [self.S21, self.S22]])

    def star(self, other: "ScatterMatrix") -> "ScatterMatrix":
        return star(self, other)

    def __matmul__(self, other: "ScatterMatrix") -> "ScatterMatrix":
        return star(self, other)


def star(A: ScatterMatrix, B: ScatterMatrix) -> ScatterMatrix:
    """Redheffer star product with ``A`` stacked above ``B``."""
    n = A.size
    eye = np.eye(n, dtype=complex)
    try:
        lu_up = sla.lu_factor(eye - B.S11 @ A.S22, check_finite=False)
        lu_down = sla.lu_factor(eye - A.S22 @ B.S11, check_finite=False)
    except (ValueError, np.linalg.LinAlgError) as exc:  # pragma: no cover - defensive
        raise SingularInterface(f"star product is singular: {exc}") from exc
    up_in = sla.lu_solve(lu_up, np.hstack([B.S11 @ A.S21, B.S12]), check_finite=False)
    down_in = sla.lu_solve(lu_down, np.hstack([A.S21, A.S22 @ B.S12]), check_finite=False)
    return ScatterMatrix(
        A.S11 + A.S12 @ up_in[:, :n],
        A.S12 @ up_in[:, n:],
        B.S21 @ down_in[:, :n],
        B.S22 + B.S21 @ down_in[:, n:],
    )


def assemble_global_smatrix(slices: Sequence[ScatterMatrix]) -> ScatterMatrix:
    """Fold a top-to-bottom sequence of S-matrices with the star product."""
    slices = list(slices)
    if not slices:
        raise ValueError("need at least one scattering matrix")
    total = slices[0]
    for s in slices[1:]:
        total = star(total, s)
    return total


@dataclasses.dataclass(frozen=True, eq=False)
class LayerOperators:
    """Factorized quantities reused for the S-matrix and amplitude recovery."""

    X: np.ndarray
    X_lu: tuple
    F: np.ndarray
    P: np.ndarray
    D_lu: tuple


def _checked_lu(M: np.ndarray, what: str) -> tuple:
    lu = sla.lu_factor(M, check_finite=False)
    piv = np.abs(np.diag(lu[0]))
    if not np.all(np.isfinite(piv)) or piv.min() <= 1e-14 * max(piv.max(), 1e-300):
        raise SingularInterface(f"{what} is singular to working precision")
    return lu


def layer_operators(eigen: SliceEigen, ref_beta: np.ndarray) -> LayerOperators:
    W, q = eigen.W, eigen.q
    V = W * q[None, :]
    QgV = V / ref_beta[:, None]
    X = 0.5 * (W + QgV)
    Y = 0.5 * (W - QgV)
    X_lu = _checked_lu(X, "mode-matching matrix at a slice face")
    F = sla.lu_solve(X_lu, Y, check_finite=False)
    P = np.exp(1j * q * eigen.thickness)
    FP = F * P[None, :]
    D_lu = _checked_lu(np.eye(len(q)) - FP @ FP, "multiple-reflection operator of a slice")
    return LayerOperators(X, X_lu, F, P, D_lu)


def slice_smatrix(eigen: SliceEigen, basis: ModeBasis, ops: LayerOperators | None = None) -> ScatterMatrix:
    """S-matrix of one slice embedded between zero-thickness reference gaps.

    Only the decaying factors ``exp(i q d)`` appear, so every entry stays bounded.

    Raises:
        SingularInterface: If the slice-to-gap mode matching is singular.
    """
    if ops is None:
        ops = layer_operators(eigen, basis.betas_plus)
    F, P = ops.F, ops.P
    if eigen.is_diagonal and not np.any(F):
        z = np.zeros((len(P), len(P)), dtype=complex)
        return ScatterMatrix(z, np.diag(P), np.diag(P), z.copy())
    PFP = P[:, None] * F * P[None, :]
    FFP = (F @ F) * P[None, :]
    # S = X (...) D X^-1 with D X^-1 formed by two triangular solves.
    left_r = sla.lu_solve(ops.X_lu, np.eye(len(P)), check_finite=False)
    DXi = sla.lu_solve(ops.D_lu, left_r, check_finite=False)
    X = ops.X
    S11 = X @ (F - PFP) @ DXi
    S21 = X @ (np.diag(P) - FFP) @ DXi
    return ScatterMatrix(S11, S21, S21, S11.copy())


def interface_smatrix(W_up: np.ndarray, V_up: np.ndarray, W_low: np.ndarray, V_low: np.ndarray) -> ScatterMatrix:
    """S-matrix of a bare interface between two modal regions.

    Each region carries ``u = W (up + down)`` and ``du/dx2 = i V (up - down)``.

    Raises:
        SingularInterface: If the continuity system is singular.
    """
    n = W_up.shape[0]
    lhs = np.block([[W_up, -W_low], [V_up, V_low]])
    rhs = np.block([[-W_up, W_low], [V_up, V_low]])
    try:
        sol = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularInterface(f"interface continuity system is singular: {exc}") from exc
    return ScatterMatrix(sol[:n, :n], sol[:n, n:], sol[n:, :n], sol[n:, n:])


def halfspace_interface(beta_up: np.ndarray, beta_low: np.ndarray) -> ScatterMatrix:
    """Diagonal interface between two homogeneous media (Fresnel per order)."""
    r = (beta_up - beta_low) / (beta_up + beta_low)
    t_down = 2 * beta_up / (beta_up + beta_low)
    t_up = 2 * beta_low / (beta_up + beta_low)
    return ScatterMatrix(np.diag(r), np.diag(t_up), np.diag(t_down), np.diag(-r))


# ---------------------------------------------------------------------------
# Global solve
# ---------------------------------------------------------------------------


@dataclasses.dataclass(eq=False)
class Layer:
    """A run of consecutive slices sharing one stairstep profile."""

    z0: float
    z1: float
    slices: range
    profile: SliceProfile
    eigen: SliceEigen
    ops: LayerOperators
    smatrix: ScatterMatrix
    a: np.ndarray | None = None
    b: np.ndarray | None = None

    @property
    def thickness(self) -> float:
        return self.z1 - self.z0

    def modal_values(self, x2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-order values and ``x2``-derivatives at heights inside the layer."""
        q = self.eigen.q
        up = np.exp(1j * np.outer(x2 - self.z0, q)) * self.a
        down = np.exp(1j * np.outer(self.z1 - x2, q)) * self.b
        W = self.eigen.W
        return (up + down) @ W.T, (1j * (up - down) * q) @ W.T


@dataclasses.dataclass(eq=False)
class ScatterSolution:
    """The RCWA field ``u^{h,M}`` and the data needed to evaluate it.

    ``refl`` and ``trans`` are Rayleigh coefficients of the reflected field at
    ``x2 = H`` and of the transmitted field at ``x2 = -H``. ``incident_trace``
    holds the incident coefficients at ``x2 = H``.
    """

    device: DeviceSpec
    slicing: Slicing
    incident: IncidentWave
    basis: ModeBasis
    layers: list[Layer]
    incident_trace: np.ndarray
    refl: np.ndarray
    trans: np.ndarray
    timings: dict
    max_exponential: float
    smatrix: ScatterMatrix | None = None

    @property
    def M(self) -> int:
        return self.basis.M

    @property
    def mode_indices(self) -> np.ndarray:
        return self.basis.indices

    @property
    def alphas(self) -> np.ndarray:
        return self.basis.alphas

    @property
    def breakpoints(self) -> np.ndarray:
        return np.array([self.layers[-1].z0] + [layer.z1 for layer in reversed(self.layers)])

    @property
    def max_wavenumber(self) -> float:
        return float(max(np.max(np.abs(layer.eigen.q)) for layer in self.layers))

    @property
    def r(self) -> np.ndarray:
        """Reflection coefficients normalized by the incident trace."""
        return self.refl / self.incident_trace[self.M]

    @property
    def t(self) -> np.ndarray:
        return self.trans / self.incident_trace[self.M]

    def _layer_at(self, x2: np.ndarray) -> np.ndarray:
        tops = np.array([layer.z1 for layer in self.layers])
        # Layers are stored top to bottom; a shared face is evaluated from the layer below.
        return np.clip(np.searchsorted(-tops, -x2, side="right") - 1, 0, len(self.layers) - 1)

    def modal_values(self, x2) -> tuple[np.ndarray, np.ndarray]:
        """Total-field Rayleigh coefficients ``u_n(x2)`` and ``du_n/dx2``.

        Returns arrays of shape ``(len(x2), 2M+1)``.
        """
        x2 = np.atleast_1d(np.asarray(x2, dtype=float))
        H = self.device.half_height
        u = np.zeros((len(x2), self.basis.size), dtype=complex)
        du = np.zeros_like(u)
        above = x2 > H
        below = x2 < -H
        inside = ~(above | below)
        if np.any(above):
            bp = self.basis.betas_plus
            z = x2[above, None] - H
            down = self.incident_trace * np.exp(-1j * bp * z)
            up = self.refl * np.exp(1j * bp * z)
            u[above] = down + up
            du[above] = 1j * bp * (up - down)
        if np.any(below):
            bm = self.basis.betas_minus
            z = x2[below, None] + H
            wave = self.trans * np.exp(-1j * bm * z)
            u[below] = wave
            du[below] = -1j * bm * wave
        if np.any(inside):
            idx = np.flatnonzero(inside)
            which = self._layer_at(x2[idx])
            for k in np.unique(which):
                sel = idx[which == k]
                u[sel], du[sel] = self.layers[k].modal_values(x2[sel])
        return u, du

    def slice_amplitudes(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """Amplitudes ``(a_j, b_j)`` of slice ``j`` referenced to its own faces."""
        b = self.slicing.boundaries
        for layer in self.layers:
            if j in layer.slices:
                q = layer.eigen.q
                s0, s1 = b[j], b[j + 1]
                return (
                    np.exp(1j * q * (s0 - layer.z0)) * layer.a,
                    np.exp(1j * q * (layer.z1 - s1)) * layer.b,
                )
        raise IndexError(f"slice {j} out of range")

    def continuity_residual(self) -> float:
        """Largest jump of ``u_n`` or ``(du_n/dx2)/kappa`` across any slice boundary."""
        kappa = self.basis.kappa
        worst = 0.0
        bounds = self.slicing.boundaries
        prev_bottom = None
        for j in reversed(range(self.slicing.num_slices)):
            layer = next(layer for layer in self.layers if j in layer.slices)
            a, b = self.slice_amplitudes(j)
            q, W = layer.eigen.q, layer.eigen.W
            P = np.exp(1j * q * (bounds[j + 1] - bounds[j]))
            top = (W @ (P * a + b), W @ (1j * q * (P * a - b)))
            if prev_bottom is not None:
                worst = max(
                    worst,
                    float(np.max(np.abs(top[0] - prev_bottom[0]))),
                    float(np.max(np.abs(top[1] - prev_bottom[1]))) / kappa,
                )
            prev_bottom = (W @ (a + P * b), W @ (1j * q * (a - P * b)))
        return worst

    def boundary_residual(self) -> float:
        """Mismatch of the top and bottom radiation conditions."""
        kappa = self.basis.kappa
        H = self.device.half_height
        bp, bm = self.basis.betas_plus, self.basis.betas_minus
        u_top, du_top = self.layers[0].modal_values(np.array([H]))
        u_bot, du_bot = self.layers[-1].modal_values(np.array([-H]))
        res = [
            np.abs(u_top[0] - (self.incident_trace + self.refl)),
            np.abs(du_top[0] - 1j * bp * (self.refl - self.incident_trace)) / kappa,
            np.abs(u_bot[0] - self.trans),
            np.abs(du_bot[0] + 1j * bm * self.trans) / kappa,
        ]
        return float(max(np.max(r) for r in res))


def build_layers(profiles: Sequence[SliceProfile], slicing: Slicing) -> list[tuple[int, int]]:
    """Group consecutive slices with identical piecewise-constant profiles.

    Returns ``(first, last + 1)`` slice index pairs ordered bottom to top.
    """
    groups = []
    start = 0
    for j in range(1, len(profiles) + 1):
        if j < len(profiles):
            key_prev, key = profiles[j - 1].key(), profiles[j].key()
            if key is not None and key == key_prev:
                continue
        groups.append((start, j))
        start = j
    return groups


def solve_scattering(
    device: DeviceSpec,
    slicing: Slicing,
    incident: IncidentWave,
    M: int,
    threads: int | None = None,
) -> ScatterSolution:
    """Compute the RCWA solution for one device, slicing and truncation order.

    Args:
        device: The grating stack.
        slicing: Slice boundaries spanning ``[-H, H]``.
        incident: Incident plane wave.
        M: Truncation order; ``2M+1`` Fourier modes are retained.
        threads: Worker threads for the per-layer eigenproblems.

    Raises:
        RayleighAnomaly: If a retained order is grazing.
        EigSolverFailure: If a slice matrix is defective.
        SingularInterface: If a mode-matching system is singular.
    """
    timings = {}
    t0 = time.perf_counter()
    basis = mode_basis(incident, device, M)
    sliced = stairstep_permittivity(device, slicing)
    groups = build_layers(sliced.profiles, slicing)
    bounds = slicing.boundaries
    timings["stairstep"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    # Layers with the same profile and thickness share one eigensolve.
    jobs = {}
    keys = []
    for first, stop in reversed(groups):  # top to bottom
        profile = sliced.profiles[first]
        thickness = float(bounds[stop] - bounds[first])
        pk = profile.key()
        key = (pk, round(thickness / device.period, 13)) if pk is not None else ("graded", first)
        jobs.setdefault(key, (profile, thickness))
        keys.append((first, stop, profile, key))

    def work(job):
        profile, thickness = job
        eigen = slice_eigenmodes(slice_toeplitz(profile, M), basis, thickness)
        ops = layer_operators(eigen, basis.betas_plus)
        return eigen, ops, slice_smatrix(eigen, basis, ops)

    if threads and threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = dict(zip(jobs, pool.map(work, jobs.values())))
    else:
        results = {key: work(job) for key, job in jobs.items()}
    layers = []
    for first, stop, profile, key in keys:
        eigen, ops, smat = results[key]
        layers.append(Layer(float(bounds[first]), float(bounds[stop]), range(first, stop), profile, eigen, ops, smat))
    timings["eigen"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    N = basis.size
    bottom = None
    if basis.eps_minus != basis.eps_plus:
        bottom = halfspace_interface(basis.betas_plus, basis.betas_minus)
    # Backward sweep: reflection seen from the gap above layer k looking down.
    K = len(layers)
    below_r = [None] * (K + 1)
    below_r[K] = bottom.S11 if bottom is not None else np.zeros((N, N), dtype=complex)
    acc = bottom
    for k in reversed(range(K)):
        acc = layers[k].smatrix if acc is None else star(layers[k].smatrix, acc)
        below_r[k] = acc.S11
    total = acc
    c_in = incident.rayleigh_coefficients(M) * np.exp(-1j * basis.beta0 * device.half_height)
    refl = total.S11 @ c_in
    trans = total.S21 @ c_in
    timings["smatrix"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    eye = np.eye(N, dtype=complex)
    top = ScatterMatrix.identity(N)
    down, up = c_in, refl
    for k, layer in enumerate(layers):
        # Amplitudes in the gap under layer k follow from the stacks above and below it.
        top = star(top, layer.smatrix)
        down_next = np.linalg.solve(eye - top.S22 @ below_r[k + 1], top.S21 @ c_in)
        up_next = below_r[k + 1] @ down_next
        layer.a, layer.b = _layer_amplitudes(layer.ops, down, up_next)
        down, up = down_next, up_next
    timings["backsubstitution"] = time.perf_counter() - t0
    # |exp(i q d)| = exp(-Im(q) d), evaluated without the phase round-off.
    max_exp = max(float(np.max(np.exp(-layer.eigen.q.imag * layer.thickness))) for layer in layers)
    return ScatterSolution(device, slicing, incident, basis, layers, c_in, refl, trans, timings, max_exp, total)


def _layer_amplitudes(ops: LayerOperators, down_top: np.ndarray, up_bottom: np.ndarray):
    """Solve for ``(a, b)`` given the waves entering the layer from both sides."""
    F, P = ops.F, ops.P
    xd = sla.lu_solve(ops.X_lu, down_top, check_finite=False)
    xu = sla.lu_solve(ops.X_lu, up_bottom, check_finite=False)
    a = sla.lu_solve(ops.D_lu, xu - F @ (P * xd), check_finite=False)
    b = sla.lu_solve(ops.D_lu, xd - F @ (P * xu), check_finite=False)
    return a, b


def solve_device(device: DeviceSpec, incident: IncidentWave, M: int, h: float, threads: int | None = None) -> ScatterSolution:
    """Convenience wrapper: slice with target thickness ``h`` and solve."""
    from .geometry import build_slicing

    return solve_scattering(device, build_slicing(device, h), incident, M, threads)
