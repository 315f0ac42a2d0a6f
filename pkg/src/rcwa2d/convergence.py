"""M- and h-sweeps against a self-converged reference, with log-log rate fits."""

from __future__ import annotations

import csv
import dataclasses
import io
import math
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, Sequence

import numpy as np

from .errors import InsufficientPoints, RCWAError
from .fields import ModalField, norm_errors
from .geometry import DeviceSpec, build_slicing
from .modal import IncidentWave
from .solver import ScatterSolution, solve_scattering

MODES = "modes"
THICKNESS = "thickness"
SATURATION_FACTOR = 10.0
CSV_COLUMNS = ("sweep_kind", "M", "h", "err_l2_rel", "err_h1_rel", "wall_time_ms", "excluded")


@dataclasses.dataclass(frozen=True)
class ReferenceSpec:
    """A reference computed by the harness itself: RCWA at ``(M, h)``."""

    M: int
    h: float


@dataclasses.dataclass(frozen=True)
class ConvergenceRecord:
    M: int
    h: float
    err_l2_rel: float
    err_h1_rel: float
    wall_time_ms: float
    status: str = "ok"
    excluded: bool = False

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclasses.dataclass(frozen=True)
class RateFit:
    slope: float
    stderr: float
    intercept: float
    floor: float
    excluded: tuple[int, ...]


@dataclasses.dataclass(frozen=True)
class ConvergenceReport:
    """Sweep records sorted by the swept variable, with fitted slopes.

    ``fitted_slope`` and ``slope_stderr`` refer to the L2 error; the H1 fit
    is in ``h1_slope``/``h1_stderr``. A slope is NaN when fewer than three
    points survive the saturation cut; ``saturated`` is then set.
    """

    sweep_kind: str
    records: tuple[ConvergenceRecord, ...]
    fitted_slope: float
    slope_stderr: float
    saturation_floor: float
    excluded_points: tuple[int, ...]
    h1_slope: float = math.nan
    h1_stderr: float = math.nan
    reference: dict = dataclasses.field(default_factory=dict)

    @property
    def saturated(self) -> bool:
        return math.isnan(self.fitted_slope)

    def variable(self) -> np.ndarray:
        key = "M" if self.sweep_kind == MODES else "h"
        return np.array([getattr(r, key) for r in self.records], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.records:
            writer.writerow(
                [
                    self.sweep_kind,
                    r.M,
                    format_float(r.h),
                    format_float(r.err_l2_rel),
                    format_float(r.err_h1_rel),
                    format_float(r.wall_time_ms),
                    int(r.excluded),
                ]
            )
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "sweep_kind": self.sweep_kind,
            "fitted_slope": _json_float(self.fitted_slope),
            "slope_stderr": _json_float(self.slope_stderr),
            "h1_slope": _json_float(self.h1_slope),
            "h1_stderr": _json_float(self.h1_stderr),
            "saturation_floor": _json_float(self.saturation_floor),
            "saturated": self.saturated,
            "excluded_points": list(self.excluded_points),
            "failed_points": [
                {"M": r.M, "h": r.h, "status": r.status} for r in self.records if not r.ok
            ],
            "reference": self.reference,
            "num_points": len(self.records),
        }


def format_float(x: float) -> str:
    return "%.17g" % x


def _json_float(x: float):
    return None if x is None or not math.isfinite(x) else float(x)


def fit_rate(
    variable: Sequence[float],
    errors: Sequence[float],
    floor_policy: str | float = "min",
    factor: float = SATURATION_FACTOR,
) -> RateFit:
    """Least-squares slope of ``log(err)`` against ``log(variable)``.

    Args:
        variable: Swept values (M or h).
        errors: Matching errors; non-finite or non-positive entries are excluded.
        floor_policy: ``"min"`` takes the smallest error as the floor,
            ``"none"`` disables the cut, a number sets the floor explicitly.
            Points with ``err < factor * floor`` are excluded.
        factor: Saturation cutoff multiple.

    Returns:
        The fit, with indices of the excluded points.

    Raises:
        InsufficientPoints: If fewer than three points remain.
    """
    x = np.asarray(variable, dtype=float)
    e = np.asarray(errors, dtype=float)
    if x.shape != e.shape:
        raise ValueError("variable and errors must have the same length")
    usable = np.isfinite(e) & (e > 0) & np.isfinite(x) & (x > 0)
    if floor_policy == "none":
        floor = 0.0
    elif floor_policy == "min":
        floor = float(np.min(e[usable])) if np.any(usable) else 0.0
    else:
        floor = float(floor_policy)
    keep = usable & (e >= factor * floor) if floor > 0 else usable
    excluded = tuple(int(i) for i in np.flatnonzero(~keep))
    if np.count_nonzero(keep) < 3:
        raise InsufficientPoints(f"{np.count_nonzero(keep)} usable points after the saturation cut; need 3")
    lx, le = np.log(x[keep]), np.log(e[keep])
    A = np.column_stack([lx, np.ones_like(lx)])
    coef, *_ = np.linalg.lstsq(A, le, rcond=None)
    resid = le - A @ coef
    dof = len(lx) - 2
    if dof > 0:
        s2 = float(resid @ resid) / dof
        stderr = math.sqrt(s2 / float(np.sum((lx - lx.mean()) ** 2)))
    else:
        stderr = 0.0
    return RateFit(float(coef[0]), stderr, float(coef[1]), floor, excluded)


def _safe_fit(x, e, floor_policy):
    try:
        return fit_rate(x, e, floor_policy)
    except InsufficientPoints:
        usable = np.isfinite(e) & (np.asarray(e) > 0)
        floor = float(np.min(np.asarray(e)[usable])) if np.any(usable) else math.nan
        return RateFit(math.nan, math.nan, math.nan, floor, tuple(range(len(e))))


def _resolve_reference(device, incident, reference, threads) -> tuple[ModalField, dict]:
    if isinstance(reference, ReferenceSpec):
        sol = solve_scattering(device, build_slicing(device, reference.h), incident, reference.M, threads)
        return sol, {"M": reference.M, "h": reference.h}
    if isinstance(reference, ScatterSolution):
        return reference, {"M": reference.M, "h": reference.slicing.h}
    return reference, {"external": True}


def _check_finer(reference, info: dict, M_max: int, h_min: float, kind: str) -> None:
    if "M" not in info:
        return
    if kind == MODES and not (info["M"] >= 1.5 * M_max and info["h"] <= h_min / 2 * (1 + 1e-12)):
        raise ValueError(
            f"reference (M={info['M']}, h={info['h']}) must satisfy M_ref >= 1.5 max M and h_ref <= h/2"
        )
    if kind == THICKNESS and not info["h"] <= h_min / 2 * (1 + 1e-12):
        raise ValueError(f"reference h={info['h']} must be at most min(h_list)/2")


def _run_points(device, incident, points, reference, threads) -> list[ConvergenceRecord]:
    H, L = device.half_height, device.period

    def one(point):
        M, h = point
        t0 = time.perf_counter()
        try:
            sol = solve_scattering(device, build_slicing(device, h), incident, M)
            errs = norm_errors(sol, reference, H, L)
        except (RCWAError, np.linalg.LinAlgError, ValueError) as exc:
            ms = 1e3 * (time.perf_counter() - t0)
            return ConvergenceRecord(M, h, math.nan, math.nan, ms, f"{type(exc).__name__}: {exc}", True)
        ms = 1e3 * (time.perf_counter() - t0)
        return ConvergenceRecord(M, h, errs["L2"], errs["H1"], ms)

    if threads and threads > 1 and len(points) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, points))
    return [one(p) for p in points]


def _assemble(kind, records, floor_policy, ref_info) -> ConvergenceReport:
    var = np.array([r.M if kind == MODES else r.h for r in records], dtype=float)
    l2 = np.array([r.err_l2_rel for r in records])
    h1 = np.array([r.err_h1_rel for r in records])
    fit = _safe_fit(var, l2, floor_policy)
    fit_h1 = _safe_fit(var, h1, floor_policy)
    records = tuple(
        dataclasses.replace(r, excluded=(i in fit.excluded)) for i, r in enumerate(records)
    )
    return ConvergenceReport(
        kind, records, fit.slope, fit.stderr, fit.floor, fit.excluded, fit_h1.slope, fit_h1.stderr, ref_info
    )


def run_m_sweep(
    device: DeviceSpec,
    incident: IncidentWave,
    h_fixed: float,
    M_list: Iterable[int],
    reference: ReferenceSpec | ModalField,
    floor_policy: str | float = "min",
    threads: int | None = None,
) -> ConvergenceReport:
    """Relative errors against ``reference`` for each ``M`` at fixed slice thickness.

    Failing points (e.g. a Rayleigh anomaly) are recorded with their status
    and left out of the fit.
    """
    Ms = sorted({int(m) for m in M_list})
    ref, info = _resolve_reference(device, incident, reference, threads)
    _check_finer(ref, info, max(Ms), h_fixed, MODES)
    records = _run_points(device, incident, [(m, float(h_fixed)) for m in Ms], ref, threads)
    return _assemble(MODES, records, floor_policy, info)


def run_h_sweep(
    device: DeviceSpec,
    incident: IncidentWave,
    M_fixed: int,
    h_list: Iterable[float],
    reference: ReferenceSpec | ModalField,
    floor_policy: str | float = "min",
    threads: int | None = None,
) -> ConvergenceReport:
    """Relative errors against ``reference`` for each target slice thickness ``h``."""
    hs = sorted({float(h) for h in h_list})
    ref, info = _resolve_reference(device, incident, reference, threads)
    _check_finer(ref, info, int(M_fixed), min(hs), THICKNESS)
    records = _run_points(device, incident, [(int(M_fixed), h) for h in hs], ref, threads)
    return _assemble(THICKNESS, records, floor_policy, info)
