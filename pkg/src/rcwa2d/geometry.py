"""Grating geometry, slicing and the stairstep permittivity.

A device occupies one period ``0 <= x1 <= period`` of the strip
``-half_height < x2 < half_height``. Interfaces are graphs ``x2 = g(x1)`` made
of closed-form segments; they split the strip into regions numbered from the
bottom (region 0 touches ``x2 = -H``) to the top (region ``I`` touches
``x2 = +H``).
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable, Sequence, Union

import numpy as np
from scipy.optimize import brentq

# Sampling density used when bracketing roots of a segment function.
_ROOT_SAMPLES = 257
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(20)


# ---------------------------------------------------------------------------
# Interface segments
# ---------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class Segment:
    """Base class for one smooth piece ``[x_start, x_end]`` of an interface."""

    x_start: float
    x_end: float

    def value(self, x):
        raise NotImplementedError

    def slope(self, x):
        raise NotImplementedError

    def curvature(self, x):
        raise NotImplementedError

    @property
    def width(self) -> float:
        return self.x_end - self.x_start

    def critical_points(self, tol: float) -> list[float]:
        """Interior points where the slope vanishes (bracketed bisection)."""
        return _bracketed_roots(self.slope, self.x_start, self.x_end, tol)

    def crossings(self, y: float, tol: float) -> list[float]:
        """Points of ``(x_start, x_end)`` where the segment equals ``y``."""
        return _bracketed_roots(lambda x: self.value(x) - y, self.x_start, self.x_end, tol)

    def to_dict(self) -> dict:
        raise NotImplementedError


def _bracketed_roots(func, a: float, b: float, tol: float) -> list[float]:
    xs = np.linspace(a, b, _ROOT_SAMPLES)
    fs = np.asarray(func(xs), dtype=float)
    scale = max(float(np.max(np.abs(fs))), 1e-300)
    if np.all(np.abs(fs) <= 1e-14 * scale) or np.all(fs == 0.0):
        return []
    roots = []
    for i in range(len(xs) - 1):
        f0, f1 = fs[i], fs[i + 1]
        if f0 == 0.0 and 0 < i:
            roots.append(float(xs[i]))
        elif f0 * f1 < 0.0:
            roots.append(float(brentq(func, xs[i], xs[i + 1], xtol=tol, rtol=1e-15)))
    return [r for r in roots if a < r < b]


@dataclasses.dataclass(frozen=True)
class LinearSegment(Segment):
    y_start: float = 0.0
    y_end: float = 0.0

    @property
    def gradient(self) -> float:
        return (self.y_end - self.y_start) / self.width

    def value(self, x):
        return self.y_start + self.gradient * (np.asarray(x, dtype=float) - self.x_start)

    def slope(self, x):
        return np.full(np.shape(x), self.gradient)

    def curvature(self, x):
        return np.zeros(np.shape(x))

    def critical_points(self, tol: float) -> list[float]:
        return []

    def crossings(self, y: float, tol: float) -> list[float]:
        if self.y_start == self.y_end:
            return []
        x = self.x_start + (y - self.y_start) / self.gradient
        return [float(x)] if self.x_start < x < self.x_end else []

    def to_dict(self) -> dict:
        return {
            "type": "linear",
            "x_start": self.x_start,
            "x_end": self.x_end,
            "y_start": self.y_start,
            "y_end": self.y_end,
        }


@dataclasses.dataclass(frozen=True)
class SineSegment(Segment):
    """``offset + amplitude * sin(2*pi*x/wavelength + phase)``."""

    offset: float = 0.0
    amplitude: float = 0.0
    wavelength: float = 1.0
    phase: float = 0.0

    def _arg(self, x):
        return 2 * np.pi * np.asarray(x, dtype=float) / self.wavelength + self.phase

    def value(self, x):
        return self.offset + self.amplitude * np.sin(self._arg(x))

    def slope(self, x):
        return self.amplitude * 2 * np.pi / self.wavelength * np.cos(self._arg(x))

    def curvature(self, x):
        return -self.amplitude * (2 * np.pi / self.wavelength) ** 2 * np.sin(self._arg(x))

    def to_dict(self) -> dict:
        return {
            "type": "sine",
            "x_start": self.x_start,
            "x_end": self.x_end,
            "offset": self.offset,
            "amplitude": self.amplitude,
            "wavelength": self.wavelength,
            "phase": self.phase,
        }


@dataclasses.dataclass(frozen=True)
class PolynomialSegment(Segment):
    """Polynomial in ``x`` with ascending coefficients ``c0 + c1*x + ...``."""

    coefficients: tuple[float, ...] = (0.0,)

    def _poly(self, order: int = 0) -> np.polynomial.Polynomial:
        return np.polynomial.Polynomial(self.coefficients).deriv(order)

    def value(self, x):
        return self._poly()(np.asarray(x, dtype=float))

    def slope(self, x):
        return self._poly(1)(np.asarray(x, dtype=float))

    def curvature(self, x):
        return self._poly(2)(np.asarray(x, dtype=float))

    def to_dict(self) -> dict:
        return {
            "type": "polynomial",
            "x_start": self.x_start,
            "x_end": self.x_end,
            "coefficients": list(self.coefficients),
        }


@dataclasses.dataclass(frozen=True)
class FunctionSegment(Segment):
    """User-supplied height function together with its first two derivatives."""

    func: Callable = None
    dfunc: Callable = None
    d2func: Callable = None

    def value(self, x):
        return np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float)

    def slope(self, x):
        return np.asarray(self.dfunc(np.asarray(x, dtype=float)), dtype=float)

    def curvature(self, x):
        return np.asarray(self.d2func(np.asarray(x, dtype=float)), dtype=float)


# ---------------------------------------------------------------------------
# Interface profile
# ---------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class InterfaceProfile:
    """Piecewise C^2 interface ``x2 = g(x1)`` over one period.

    Segments must tile ``[0, period]``. Jumps are allowed only between
    segments; a jump is a vertical wall of the stairstep interface.
    """

    segments: tuple[Segment, ...]

    def __post_init__(self):
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise ValueError("an interface needs at least one segment")
        if segs[0].x_start != 0.0:
            raise ValueError("interface segments must start at x1 = 0")
        for left, right in zip(segs[:-1], segs[1:]):
            if not math.isclose(left.x_end, right.x_start, rel_tol=0.0, abs_tol=1e-12 * segs[-1].x_end):
                raise ValueError(
                    f"segments must tile the period without gaps or overlap "
                    f"({left.x_end} != {right.x_start})"
                )
        for seg in segs:
            if not seg.x_end > seg.x_start:
                raise ValueError(f"empty segment [{seg.x_start}, {seg.x_end}]")

    @property
    def period(self) -> float:
        return self.segments[-1].x_end

    @property
    def _starts(self) -> np.ndarray:
        return np.array([s.x_start for s in self.segments])

    def _segment_index(self, x: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self._starts, x, side="right") - 1
        return np.clip(idx, 0, len(self.segments) - 1)

    def _dispatch(self, x, method: str) -> np.ndarray:
        x = np.mod(np.asarray(x, dtype=float), self.period)
        out = np.empty(x.shape)
        idx = self._segment_index(x)
        for i, seg in enumerate(self.segments):
            mask = idx == i
            if np.any(mask):
                out[mask] = getattr(seg, method)(x[mask])
        return out

    def __call__(self, x):
        return self._dispatch(x, "value")

    def slope(self, x):
        return self._dispatch(x, "slope")

    def curvature(self, x):
        return self._dispatch(x, "curvature")

    def jumps(self, tol: float = 1e-12) -> list[tuple[float, float, float]]:
        """Discontinuities ``(x, g(x-), g(x+))``, including the periodic wrap."""
        out = []
        segs = self.segments
        for i, seg in enumerate(segs):
            prev = segs[i - 1]
            left = float(prev.value(prev.x_end))
            right = float(seg.value(seg.x_start))
            if abs(right - left) > tol * self.period:
                out.append((seg.x_start, left, right))
        return out

    def endpoint_heights(self) -> list[float]:
        heights = []
        for seg in self.segments:
            heights.append(float(seg.value(seg.x_start)))
            heights.append(float(seg.value(seg.x_end)))
        return heights

    def critical_points(self) -> list[float]:
        tol = 1e-12 * self.period
        return [x for seg in self.segments for x in seg.critical_points(tol)]

    def mandatory_heights(self) -> list[float]:
        """Heights that must coincide with inter-slice boundaries.

        Both one-sided values at a jump, the value at a junction where the
        slope changes sign or vanishes (kinked extrema and flat pieces), and
        the value at each interior critical point. Smooth monotone junctions,
        such as a split at the periodic wrap, are not mandatory.
        """
        heights = []
        tol = 1e-12 * self.period
        segs = self.segments
        for i, seg in enumerate(segs):
            prev = segs[i - 1]
            left = float(prev.value(prev.x_end))
            right = float(seg.value(seg.x_start))
            if abs(right - left) > tol:
                heights += [left, right]
                continue
            s_left = float(prev.slope(prev.x_end))
            s_right = float(seg.slope(seg.x_start))
            if s_left * s_right <= 0:
                heights.append(right)
        heights += [float(self(x)) for x in self.critical_points()]
        return heights

    def crossings(self, y: float) -> list[float]:
        tol = 1e-13 * self.period
        return sorted(x for seg in self.segments for x in seg.crossings(y, tol))

    def extrema(self) -> tuple[float, float]:
        heights = self.mandatory_heights()
        return min(heights), max(heights)

    def is_flat(self) -> bool:
        lo, hi = self.extrema()
        return hi == lo

    def to_dict(self) -> dict:
        return {"segments": [seg.to_dict() for seg in self.segments]}

    # Convenience constructors -------------------------------------------------

    @classmethod
    def flat(cls, height: float, period: float) -> "InterfaceProfile":
        return cls((LinearSegment(0.0, period, height, height),))

    @classmethod
    def triangle(cls, period: float, base: float, peak: float, peak_x: float) -> "InterfaceProfile":
        """Triangular tooth: rises from ``base`` at ``x1=0`` to ``peak`` at ``peak_x``."""
        if not 0.0 < peak_x < period:
            raise ValueError("peak_x must lie strictly inside the period")
        return cls(
            (
                LinearSegment(0.0, peak_x, base, peak),
                LinearSegment(peak_x, period, peak, base),
            )
        )

    @classmethod
    def sine(cls, period: float, offset: float, amplitude: float, phase: float = 0.0) -> "InterfaceProfile":
        return cls((SineSegment(0.0, period, offset, amplitude, period, phase),))

    @classmethod
    def lamellar(cls, period: float, low: float, high: float, x_start: float, x_end: float) -> "InterfaceProfile":
        """Rectangular tooth at ``high`` on ``[x_start, x_end)``, ``low`` elsewhere."""
        if not 0.0 <= x_start < x_end <= period:
            raise ValueError("tooth must satisfy 0 <= x_start < x_end <= period")
        segs = []
        if x_start > 0.0:
            segs.append(LinearSegment(0.0, x_start, low, low))
        segs.append(LinearSegment(x_start, x_end, high, high))
        if x_end < period:
            segs.append(LinearSegment(x_end, period, low, low))
        return cls(tuple(segs))


# ---------------------------------------------------------------------------
# Permittivity and device
# ---------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class GradedPermittivity:
    """Permittivity varying smoothly inside one region.

    ``func(x1, x2)`` and ``d_dx2(x1, x2)`` must accept numpy arrays.
    """

    func: Callable
    d_dx2: Callable
    label: str = ""

    def __call__(self, x1, x2):
        x1, x2 = np.broadcast_arrays(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float))
        return np.asarray(self.func(x1, x2), dtype=complex) * np.ones(x1.shape)

    def derivative(self, x1, x2):
        x1, x2 = np.broadcast_arrays(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float))
        return np.asarray(self.d_dx2(x1, x2), dtype=complex) * np.ones(x1.shape)


Permittivity = Union[complex, GradedPermittivity]


def admissible_class(eps: complex) -> str | None:
    """Return ``'dielectric'`` or ``'metallic'``, or None when inadmissible."""
    eps = complex(eps)
    if eps.real > 0 and eps.imag >= 0:
        return "dielectric"
    if eps.real <= 0 and eps.imag > 0:
        return "metallic"
    return None


@dataclasses.dataclass(frozen=True)
class DeviceSpec:
    """One period of a grating stack between two homogeneous half-spaces.

    Attributes:
        period: Period ``L_x`` along ``x1``.
        half_height: ``H``; the device occupies ``-H < x2 < H``.
        interfaces: Interfaces ordered bottom to top.
        regions: ``len(interfaces) + 1`` permittivities, bottom to top.
        eps_plus: Permittivity of the upper half-space ``x2 > H``.
        eps_minus: Permittivity of the lower half-space ``x2 < -H``.
    """

    period: float
    half_height: float
    interfaces: tuple[InterfaceProfile, ...]
    regions: tuple[Permittivity, ...]
    eps_plus: complex = 1.0
    eps_minus: complex = 1.0

    def __post_init__(self):
        object.__setattr__(self, "interfaces", tuple(self.interfaces))
        regions = tuple(r if isinstance(r, GradedPermittivity) else complex(r) for r in self.regions)
        object.__setattr__(self, "regions", regions)
        object.__setattr__(self, "eps_plus", complex(self.eps_plus))
        object.__setattr__(self, "eps_minus", complex(self.eps_minus))
        if not self.period > 0:
            raise ValueError("period must be positive")
        if not self.half_height > 0:
            raise ValueError("half_height must be positive")
        if len(regions) != len(self.interfaces) + 1:
            raise ValueError(
                f"need {len(self.interfaces) + 1} region permittivities for "
                f"{len(self.interfaces)} interfaces, got {len(regions)}"
            )
        for k, iface in enumerate(self.interfaces):
            if not math.isclose(iface.period, self.period, rel_tol=1e-12):
                raise ValueError(f"interface {k} has period {iface.period}, device has {self.period}")
        if self.separation() <= 0:
            raise ValueError("interfaces must be separated from each other and from x2 = +/-H")
        for name, eps in (("eps_plus", self.eps_plus), ("eps_minus", self.eps_minus)):
            if admissible_class(eps) is None:
                raise ValueError(f"{name} = {eps} is not an admissible permittivity")
        for k, region in enumerate(regions):
            self._check_region(k, region)

    def _check_region(self, k: int, region: Permittivity) -> None:
        if isinstance(region, GradedPermittivity):
            x1 = np.linspace(0, self.period, 33)
            lo = -self.half_height if k == 0 else self.interfaces[k - 1].extrema()[0]
            hi = self.half_height if k == len(self.interfaces) else self.interfaces[k].extrema()[1]
            X1, X2 = np.meshgrid(x1, np.linspace(lo, hi, 33))
            values = region(X1, X2).ravel()
            classes = {admissible_class(v) for v in values}
            if None in classes or len(classes) > 1:
                raise ValueError(f"region {k} permittivity leaves a single admissible class")
        elif admissible_class(region) is None:
            raise ValueError(f"region {k} permittivity {region} is not admissible")

    @property
    def num_interfaces(self) -> int:
        return len(self.interfaces)

    def separation(self) -> float:
        """The margin ``delta`` between consecutive interfaces and from ``+/-H``."""
        bounds = [(-self.half_height, -self.half_height)]
        bounds += [iface.extrema() for iface in self.interfaces]
        bounds.append((self.half_height, self.half_height))
        return min(upper[0] - lower[1] for lower, upper in zip(bounds[:-1], bounds[1:]))

    def region_index(self, x1, x2) -> np.ndarray:
        x1, x2 = np.broadcast_arrays(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float))
        idx = np.zeros(x1.shape, dtype=int)
        for iface in self.interfaces:
            idx += iface(x1) < x2
        return idx

    def region_value(self, k: int, x1, x2) -> np.ndarray:
        region = self.regions[k]
        if isinstance(region, GradedPermittivity):
            return region(x1, x2)
        return np.full(np.broadcast(np.asarray(x1), np.asarray(x2)).shape, region, dtype=complex)

    def permittivity(self, x1, x2) -> np.ndarray:
        x1, x2 = np.broadcast_arrays(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float))
        idx = self.region_index(x1, x2)
        out = np.empty(x1.shape, dtype=complex)
        for k in range(len(self.regions)):
            mask = idx == k
            if np.any(mask):
                out[mask] = self.region_value(k, x1[mask], x2[mask])
        return out

    def is_piecewise_constant(self) -> bool:
        return not any(isinstance(r, GradedPermittivity) for r in self.regions)

    def translated(self, shift: float) -> "DeviceSpec":
        """The same device shifted by ``shift`` along ``x1`` (periodically)."""
        interfaces = tuple(_shift_interface(iface, shift) for iface in self.interfaces)
        regions = tuple(
            GradedPermittivity(
                (lambda f: lambda x1, x2: f(x1 - shift, x2))(r.func),
                (lambda f: lambda x1, x2: f(x1 - shift, x2))(r.d_dx2),
                r.label,
            )
            if isinstance(r, GradedPermittivity)
            else r
            for r in self.regions
        )
        return dataclasses.replace(self, interfaces=interfaces, regions=regions)


def _shift_interface(iface: InterfaceProfile, shift: float) -> InterfaceProfile:
    period = iface.period
    shift = shift % period
    if shift == 0.0:
        return iface
    f = lambda x, m="value": iface._dispatch(np.asarray(x) - shift, m)  # noqa: E731
    # The shifted profile is split at the images of the old breakpoints.
    cuts = sorted({(s.x_start + shift) % period for s in iface.segments} | {0.0, period})
    segs = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b - a <= 1e-14 * period:
            continue
        segs.append(
            FunctionSegment(
                a,
                b,
                (lambda a, b: lambda x: f(np.clip(x, a + 1e-15 * period, b - 1e-15 * period)))(a, b),
                (lambda a, b: lambda x: f(np.clip(x, a + 1e-15 * period, b - 1e-15 * period), "slope"))(a, b),
                (lambda a, b: lambda x: f(np.clip(x, a + 1e-15 * period, b - 1e-15 * period), "curvature"))(a, b),
            )
        )
    return InterfaceProfile(tuple(segs))


# ---------------------------------------------------------------------------
# Slicing
# ---------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True, eq=False)
class Slicing:
    """Inter-slice boundaries ``-H = h_0 < h_1 < ... < h_S = H``."""

    boundaries: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.boundaries, dtype=float)
        if b.ndim != 1 or len(b) < 2 or np.any(np.diff(b) <= 0):
            raise ValueError("slice boundaries must be a strictly increasing sequence")
        object.__setattr__(self, "boundaries", b)

    @property
    def num_slices(self) -> int:
        return len(self.boundaries) - 1

    @property
    def thicknesses(self) -> np.ndarray:
        return np.diff(self.boundaries)

    @property
    def midlines(self) -> np.ndarray:
        return 0.5 * (self.boundaries[1:] + self.boundaries[:-1])

    @property
    def h(self) -> float:
        return float(np.max(self.thicknesses))

    @property
    def quasi_uniformity(self) -> float:
        """``C_delta = max thickness / min thickness``."""
        t = self.thicknesses
        return float(np.max(t) / np.min(t))


def mandatory_heights(device: DeviceSpec) -> np.ndarray:
    """Sorted, de-duplicated heights that every slicing must contain."""
    H = device.half_height
    heights = [-H, H]
    for iface in device.interfaces:
        heights += iface.mandatory_heights()
    heights = np.sort(np.asarray(heights, dtype=float))
    dedup_tol = 1e-13 * device.period
    keep = [heights[0]]
    for value in heights[1:]:
        if value - keep[-1] > dedup_tol:
            keep.append(value)
    out = np.asarray(keep)
    gaps = np.diff(out)
    if np.any(gaps < 1e-12 * device.period):
        raise ValueError("degenerate geometry: mandatory slice boundaries nearly coincide")
    out[0], out[-1] = -H, H
    return out


def build_slicing(device: DeviceSpec, target_h: float) -> Slicing:
    """Slice the device with slices no thicker than ``target_h``.

    Intervals between mandatory heights are split into equal parts. When a
    mandatory interval is shorter than ``target_h / 2`` the working thickness
    is reduced to twice that interval so the quasi-uniformity stays <= 2.
    """
    if not target_h > 0:
        raise ValueError(f"target_h must be positive, got {target_h}")
    H = device.half_height
    if target_h > 2 * H * (1 + 1e-12):
        raise ValueError(f"target_h = {target_h} exceeds the device height {2 * H}")
    fixed = mandatory_heights(device)
    gaps = np.diff(fixed)
    h_work = min(target_h, 2.0 * float(np.min(gaps)))
    bounds = [fixed[0]]
    for a, b in zip(fixed[:-1], fixed[1:]):
        n = max(1, int(math.ceil((b - a) / h_work - 1e-9)))
        bounds.extend(np.linspace(a, b, n + 1)[1:])
    bounds = np.asarray(bounds)
    bounds[-1] = H
    return Slicing(bounds)


# ---------------------------------------------------------------------------
# Stairstep permittivity
# ---------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True, eq=False)
class SliceProfile:
    """``eps_h`` on one slice: a function of ``x1`` that is piecewise smooth.

    ``breakpoints`` runs from 0 to the period; piece ``p`` covers
    ``[breakpoints[p], breakpoints[p+1])`` and lies in region ``regions[p]``.
    ``values[p]`` is a complex constant or a callable of ``x1``.
    """

    period: float
    breakpoints: np.ndarray
    values: tuple
    regions: tuple[int, ...]

    @property
    def is_piecewise_constant(self) -> bool:
        return all(not callable(v) for v in self.values)

    def key(self) -> tuple | None:
        """Hashable identity for piecewise-constant profiles (None otherwise)."""
        if not self.is_piecewise_constant:
            return None
        return (
            tuple(np.round(self.breakpoints / self.period, 13)),
            tuple(complex(v) for v in self.values),
        )

    def __call__(self, x1) -> np.ndarray:
        x1 = np.mod(np.asarray(x1, dtype=float), self.period)
        idx = np.clip(np.searchsorted(self.breakpoints, x1, side="right") - 1, 0, len(self.values) - 1)
        out = np.empty(x1.shape, dtype=complex)
        for p, v in enumerate(self.values):
            mask = idx == p
            if np.any(mask):
                out[mask] = v(x1[mask]) if callable(v) else v
        return out

    def region_at(self, x1) -> np.ndarray:
        x1 = np.mod(np.asarray(x1, dtype=float), self.period)
        idx = np.clip(np.searchsorted(self.breakpoints, x1, side="right") - 1, 0, len(self.values) - 1)
        return np.asarray(self.regions)[idx]


@dataclasses.dataclass(frozen=True, eq=False)
class SlicedPermittivity:
    device: DeviceSpec
    slicing: Slicing
    profiles: tuple[SliceProfile, ...]

    @property
    def midlines(self) -> np.ndarray:
        return self.slicing.midlines

    def slice_index(self, x2) -> np.ndarray:
        b = self.slicing.boundaries
        return np.clip(np.searchsorted(b, np.asarray(x2, dtype=float), side="right") - 1, 0, len(b) - 2)

    def __call__(self, x1, x2) -> np.ndarray:
        x1, x2 = np.broadcast_arrays(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float))
        j = self.slice_index(x2)
        out = np.empty(x1.shape, dtype=complex)
        for s in np.unique(j):
            mask = j == s
            out[mask] = self.profiles[s](x1[mask])
        return out


def _region_function(device: DeviceSpec, k: int, y: float):
    region = device.regions[k]
    if isinstance(region, GradedPermittivity):
        return lambda x1: region(x1, np.full(np.shape(x1), y))
    return region


def slice_profile(device: DeviceSpec, y: float) -> SliceProfile:
    """The permittivity along the horizontal line ``x2 = y``."""
    L = device.period
    cuts = {0.0, L}
    for iface in device.interfaces:
        lo, hi = iface.extrema()
        if lo <= y <= hi:
            cuts.update(iface.crossings(y))
            cuts.update(s.x_start for s in iface.segments)
    cuts = np.array(sorted(cuts))
    keep = [cuts[0]]
    for c in cuts[1:]:
        if c - keep[-1] > 1e-13 * L:
            keep.append(c)
    keep[-1] = L
    cuts = np.asarray(keep)
    mids = 0.5 * (cuts[1:] + cuts[:-1])
    regions = device.region_index(mids, np.full(mids.shape, y))
    # Merge neighbouring pieces that lie in the same region.
    bps, regs = [cuts[0]], []
    for p, r in enumerate(regions):
        if regs and regs[-1] == r:
            bps[-1] = cuts[p + 1]
        else:
            regs.append(int(r))
            bps.append(cuts[p + 1])
    values = tuple(_region_function(device, k, y) for k in regs)
    return SliceProfile(L, np.asarray(bps), values, tuple(regs))


def stairstep_permittivity(device: DeviceSpec, slicing: Slicing) -> SlicedPermittivity:
    """Sample the permittivity on every slice midline: ``eps_h(x1) = eps(x1, midline)``."""
    b = slicing.boundaries
    H = device.half_height
    if not (math.isclose(b[0], -H, abs_tol=1e-12 * H) and math.isclose(b[-1], H, abs_tol=1e-12 * H)):
        raise ValueError("slicing does not span the device")
    profiles = tuple(slice_profile(device, y) for y in slicing.midlines)
    return SlicedPermittivity(device, slicing, profiles)


def max_crossings(device: DeviceSpec, slicing: Slicing) -> int:
    """Largest number of times one interface meets a slice midline.

    This is the count of jumps each interface contributes to a stairstep
    profile; it stays bounded as ``h -> 0`` for the supported segment types.
    """
    counts = [len(iface.crossings(float(y))) for iface in device.interfaces for y in slicing.midlines]
    return max(counts, default=0)


# ---------------------------------------------------------------------------
# Non-trapping check
# ---------------------------------------------------------------------------

UPWARD = "increasing-upward"
DOWNWARD = "increasing-downward"
NEITHER = "neither"


@dataclasses.dataclass(frozen=True)
class Violation:
    orientation: str
    condition: str
    location: tuple[float, float]
    value: float


@dataclasses.dataclass(frozen=True)
class NonTrappingReport:
    satisfied: bool
    orientation: str
    violations: tuple[Violation, ...]
    marginal: bool = False
    real_part_only: bool = False

    def to_dict(self) -> dict:
        return {
            "satisfied": self.satisfied,
            "orientation": self.orientation,
            "marginal": self.marginal,
            "real_part_only": self.real_part_only,
            "violations": [dataclasses.asdict(v) for v in self.violations],
        }


def check_nontrapping(device: DeviceSpec, samples: int = 256, atol: float = 1e-12) -> NonTrappingReport:
    """Evaluate the monotonicity/jump/boundary sign conditions on ``Re(eps)``.

    Both orientations are tried: permittivity increasing upward (with the
    condition at ``x2 = +H``) and the sign-reversed variant (with the
    condition at ``x2 = -H``). Values within ``atol`` of zero count as
    satisfied but set the ``marginal`` flag.
    """
    L, H = device.period, device.half_height
    x1 = (np.arange(samples) + 0.5) * L / samples
    checks: dict[str, list[tuple[tuple[float, float], float]]] = {
        "d_eps_dx2": [],
        "jump": [],
    }
    x2 = -H + (np.arange(samples) + 0.5) * 2 * H / samples
    X1, X2 = np.meshgrid(x1, x2)
    idx = device.region_index(X1, X2)
    for k, region in enumerate(device.regions):
        if isinstance(region, GradedPermittivity):
            mask = idx == k
            d = region.derivative(X1[mask], X2[mask]).real
            checks["d_eps_dx2"] += [((a, b), float(v)) for a, b, v in zip(X1[mask], X2[mask], d)]
    for k, iface in enumerate(device.interfaces):
        xs = np.unique(np.concatenate([x1, [s.x_start for s in iface.segments]]))
        g = iface(xs)
        jump = (device.region_value(k + 1, xs, g) - device.region_value(k, xs, g)).real
        checks["jump"] += [((float(a), float(b)), float(v)) for a, b, v in zip(xs, g, jump)]
    top = (device.eps_plus - device.region_value(len(device.regions) - 1, x1, np.full_like(x1, H))).real
    bottom = (device.eps_minus - device.region_value(0, x1, np.full_like(x1, -H))).real

    violations = []
    marginal = False
    ok = {}
    for orientation, sign, boundary, bname, by in (
        (UPWARD, 1.0, top, "boundary_plus", H),
        (DOWNWARD, -1.0, bottom, "boundary_minus", -H),
    ):
        found = []
        for cond in ("d_eps_dx2", "jump"):
            for loc, value in checks[cond]:
                v = sign * value
                if abs(v) <= atol:
                    marginal = True
                elif v < 0:
                    found.append(Violation(orientation, cond, loc, value))
        for a, value in zip(x1, boundary):
            if abs(value) <= atol:
                marginal = True
            elif value < 0:
                found.append(Violation(orientation, bname, (float(a), by), float(value)))
        ok[orientation] = not found
        violations += found
    if ok[UPWARD]:
        orientation = UPWARD
    elif ok[DOWNWARD]:
        orientation = DOWNWARD
    else:
        orientation = NEITHER
    satisfied = orientation != NEITHER
    complex_eps = any(
        isinstance(r, GradedPermittivity) or complex(r).imag != 0 for r in device.regions
    ) or device.eps_plus.imag != 0 or device.eps_minus.imag != 0
    kept = tuple(v for v in violations if v.orientation == orientation) if satisfied else tuple(violations)
    return NonTrappingReport(satisfied, orientation, kept, marginal, complex_eps)


# ---------------------------------------------------------------------------
# Stairstep error norm
# ---------------------------------------------------------------------------


def _slice_inner(device: DeviceSpec, profile: SliceProfile, z0: float, z1: float, y: float, q: float):
    """Return ``x1 -> int_{z0}^{z1} |eps(x1, x2) - eps_h(x1)|^q dx2`` (vectorized)."""
    gl_x, gl_w = np.polynomial.legendre.leggauss(16)

    def inner(x1: np.ndarray) -> np.ndarray:
        eh = profile(x1)
        cuts = [np.full(x1.shape, z0)]
        for iface in device.interfaces:
            cuts.append(np.clip(iface(x1), z0, z1))
        cuts.append(np.full(x1.shape, z1))
        total = np.zeros(x1.shape)
        for k, region in enumerate(device.regions):
            lo, hi = cuts[k], cuts[k + 1]
            length = hi - lo
            if not np.any(length > 0):
                continue
            if isinstance(region, GradedPermittivity):
                # Split at the midline, where |eps - eps_h| has a kink.
                for a, b in ((lo, np.clip(np.minimum(hi, y), lo, None)), (np.maximum(lo, y), np.maximum(hi, np.maximum(lo, y)))):
                    w = b - a
                    if not np.any(w > 0):
                        continue
                    xs = a[:, None] + 0.5 * w[:, None] * (gl_x[None, :] + 1)
                    vals = np.abs(region(np.broadcast_to(x1[:, None], xs.shape), xs) - eh[:, None]) ** q
                    total += 0.5 * w * (vals @ gl_w)
            else:
                total += length * np.abs(region - eh) ** q
        return total

    return inner


def _adaptive_gl(func, a: float, b: float, rtol: float, depth: int = 0) -> float:
    def rule(lo, hi):
        xs = lo + 0.5 * (hi - lo) * (_GL_NODES + 1)
        return 0.5 * (hi - lo) * float(func(xs) @ _GL_WEIGHTS)

    whole = rule(a, b)
    m = 0.5 * (a + b)
    halves = rule(a, m) + rule(m, b)
    if abs(halves - whole) <= rtol * max(abs(halves), 1e-300) or depth >= 40:
        return halves
    return _adaptive_gl(func, a, m, rtol, depth + 1) + _adaptive_gl(func, m, b, rtol, depth + 1)


def stairstep_error_norm(device: DeviceSpec, slicing: Slicing, q: float = 1.0, rtol: float = 1e-11) -> float:
    """``||eps - eps_h||_{L^q}`` over the device by adaptive quadrature.

    Each slice is integrated over ``x2`` exactly (piecewise constant regions)
    or with Gauss-Legendre (graded regions); the ``x1`` integral is split at
    every point where an interface meets the slice bottom, midline or top.
    """
    if not q >= 1:
        raise ValueError(f"q must be >= 1, got {q}")
    if not math.isfinite(q):
        raise ValueError("q must be finite")
    sliced = stairstep_permittivity(device, slicing)
    L = device.period
    total = 0.0
    b = slicing.boundaries
    for j, profile in enumerate(sliced.profiles):
        z0, z1 = b[j], b[j + 1]
        y = 0.5 * (z0 + z1)
        crossing = [
            iface for iface in device.interfaces if iface.extrema()[0] < z1 and iface.extrema()[1] > z0
        ]
        if not crossing and device.is_piecewise_constant():
            continue
        cuts = {0.0, L}
        for iface in crossing:
            cuts.update(s.x_start for s in iface.segments)
            for level in (z0, y, z1):
                cuts.update(iface.crossings(level))
        cuts = sorted(cuts)
        inner = _slice_inner(device, profile, z0, z1, y, q)
        for a, c in zip(cuts[:-1], cuts[1:]):
            if c - a > 1e-14 * L:
                total += _adaptive_gl(inner, a, c, rtol)
    return total ** (1.0 / q)
