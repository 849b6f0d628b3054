"""Uniform grids, fields, phase-space states and discrete differential operators.

Periodic grids differentiate spectrally and integrate with the rectangle rule;
box grids use second-order central differences (one-sided at the edges) and
the trapezoid rule.  Everything here is immutable once built.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

PERIODIC = "periodic"
BOX = "box"
MIN_POINTS = 8

#: Relative amplitude below which a wavefunction node is masked.
NODE_THRESHOLD = 1e-8


class GridError(ValueError):
    pass


def _as_tuple(x, cast) -> tuple:
    if np.isscalar(x):
        return (cast(x),)
    return tuple(cast(v) for v in x)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Grid:
    """Uniform 1D or 2D lattice.

    Nodes along an axis are ``lower + j*h``.  On a periodic axis the upper end
    is excluded, ``h = (upper-lower)/points``; on a box axis both ends are
    nodes, ``h = (upper-lower)/(points-1)``.
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    points: tuple[int, ...]
    boundary: str = PERIODIC

    def __post_init__(self):
        object.__setattr__(self, "lower", _as_tuple(self.lower, float))
        object.__setattr__(self, "upper", _as_tuple(self.upper, float))
        object.__setattr__(self, "points", _as_tuple(self.points, int))
        errors = grid_errors(self.lower, self.upper, self.points, self.boundary)
        if errors:
            raise GridError("; ".join(errors))

    @classmethod
    def line(cls, lower: float, upper: float, points: int, boundary: str = PERIODIC) -> "Grid":
        return cls((lower,), (upper,), (points,), boundary)

    @property
    def dim(self) -> int:
        return len(self.points)

    @property
    def periodic(self) -> bool:
        return self.boundary == PERIODIC

    @property
    def shape(self) -> tuple[int, ...]:
        return self.points

    @property
    def size(self) -> int:
        return int(np.prod(self.points))

    @property
    def spacing(self) -> tuple[float, ...]:
        div = [n if self.periodic else n - 1 for n in self.points]
        return tuple((b - a) / d for a, b, d in zip(self.lower, self.upper, div))

    @property
    def lengths(self) -> tuple[float, ...]:
        return tuple(b - a for a, b in zip(self.lower, self.upper))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axis(self, i: int = 0) -> np.ndarray:
        self._check_axis(i)
        return self.lower[i] + self.spacing[i] * np.arange(self.points[i])

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*[self.axis(i) for i in range(self.dim)], indexing="ij")

    def wavenumbers(self, i: int = 0) -> np.ndarray:
        self._check_axis(i)
        return 2 * np.pi * np.fft.fftfreq(self.points[i], d=self.spacing[i])

    def _check_axis(self, i: int):
        if not 0 <= i < self.dim:
            raise GridError(f"axis {i} out of range for a {self.dim}D grid")


def grid_errors(lower, upper, points, boundary) -> list[str]:
    """All violated grid invariants, as messages (empty when valid)."""
    errors = []
    if boundary not in (PERIODIC, BOX):
        errors.append(f"boundary must be '{PERIODIC}' or '{BOX}', got {boundary!r}")
    if not (len(lower) == len(upper) == len(points)):
        errors.append("lower, upper and points must have one entry per axis")
    elif len(points) not in (1, 2):
        errors.append(f"dim must be 1 or 2, got {len(points)}")
    for i, n in enumerate(points):
        if n < MIN_POINTS:
            errors.append(f"points >= {MIN_POINTS} required (axis {i} has {n})")
    for i, (a, b) in enumerate(zip(lower, upper)):
        if not (np.isfinite(a) and np.isfinite(b) and b > a):
            errors.append(f"axis {i}: need finite lower < upper, got [{a}, {b}]")
    return errors


@dataclass(frozen=True)
class Metric:
    """Constant diagonal inverse-mass metric, ``g_ii = 1/m_i``."""

    masses: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        object.__setattr__(self, "masses", _as_tuple(self.masses, float))
        if not all(np.isfinite(m) and m > 0 for m in self.masses):
            raise ValueError(f"masses must be finite and positive, got {self.masses}")

    @classmethod
    def for_grid(cls, grid: Grid, mass: Union[float, Sequence[float]] = 1.0) -> "Metric":
        masses = _as_tuple(mass, float)
        if len(masses) == 1:
            masses = masses * grid.dim
        return cls(masses)

    @property
    def g(self) -> tuple[float, ...]:
        return tuple(1.0 / m for m in self.masses)

    def axis_g(self, i: int) -> float:
        # a 1-entry metric applies to every axis
        return self.g[i] if len(self.g) > 1 else self.g[0]


@dataclass(frozen=True)
class ComplexField:
    """Sampled wavefunction on a grid."""

    grid: Grid
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != self.grid.shape:
            raise GridError(f"field shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise GridError("complex field has non-finite entries")
        object.__setattr__(self, "values", _frozen(v))

    def norm_squared(self) -> float:
        return float(integrate(np.abs(self.values) ** 2, self.grid))

    def normalized(self) -> "ComplexField":
        n = self.norm_squared()
        if n <= 0:
            raise GridError("cannot normalize a zero field")
        return ComplexField(self.grid, self.values / np.sqrt(n), self.time)

    def is_normalized(self, tol: float = 1e-8) -> bool:
        return abs(self.norm_squared() - 1.0) <= tol

    def node_mask(self, threshold: float = NODE_THRESHOLD) -> np.ndarray:
        a = np.abs(self.values)
        return a < threshold * a.max()


@dataclass(frozen=True)
class RealField:
    """Real field with a unit tag; masked nodes may hold NaN."""

    grid: Grid
    values: np.ndarray
    units: str = "dimensionless"
    mask: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise GridError(f"field shape {v.shape} does not match grid {self.grid.shape}")
        m = np.zeros(v.shape, bool) if self.mask is None else np.asarray(self.mask, bool)
        if not np.all(np.isfinite(v[~m])):
            raise GridError("real field has non-finite entries outside its mask")
        object.__setattr__(self, "values", _frozen(v))
        object.__setattr__(self, "mask", _frozen(m))


@dataclass(frozen=True)
class PolarField:
    """Amplitude/action pair with ``psi = A exp(i S / hbar)``."""

    grid: Grid
    amplitude: np.ndarray
    action: np.ndarray
    node_mask: np.ndarray
    hbar: float = 1.0
    time: float = 0.0

    def __post_init__(self):
        for name in ("amplitude", "action", "node_mask"):
            a = getattr(self, name)
            if np.shape(a) != self.grid.shape:
                raise GridError(f"{name} shape {np.shape(a)} does not match grid")
        if np.any(np.asarray(self.amplitude) < 0):
            raise GridError("amplitude must be non-negative")
        object.__setattr__(self, "amplitude", _frozen(np.asarray(self.amplitude, float)))
        object.__setattr__(self, "action", _frozen(np.asarray(self.action, float)))
        object.__setattr__(self, "node_mask", _frozen(np.asarray(self.node_mask, bool)))
        if not np.all(np.isfinite(self.action[~self.node_mask])):
            raise GridError("action must be finite on unmasked nodes")


@dataclass(frozen=True)
class ClassicalState:
    q: np.ndarray
    p: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, float))
        p = np.atleast_1d(np.asarray(self.p, float))
        if q.shape != p.shape or q.ndim != 1:
            raise ValueError("q and p must be 1D arrays of equal length")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p)) and np.isfinite(self.t)):
            raise ValueError("classical state must be finite")
        object.__setattr__(self, "q", _frozen(q))
        object.__setattr__(self, "p", _frozen(p))


@dataclass(frozen=True)
class VariationalState:
    xi: np.ndarray
    eta: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        xi = np.atleast_1d(np.asarray(self.xi, float))
        eta = np.atleast_1d(np.asarray(self.eta, float))
        if xi.shape != eta.shape or xi.ndim != 1:
            raise ValueError("xi and eta must be 1D arrays of equal length")
        if not (np.all(np.isfinite(xi)) and np.all(np.isfinite(eta))):
            raise ValueError("variational state must be finite")
        object.__setattr__(self, "xi", _frozen(xi))
        object.__setattr__(self, "eta", _frozen(eta))

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.xi, self.eta])


# ---------------------------------------------------------------------------
# array-level operators

def integrate(values: np.ndarray, grid: Grid) -> complex | float:
    """Rectangle rule on periodic grids, trapezoid on box grids."""
    if grid.periodic:
        return values.sum() * grid.cell_volume
    out = values
    for i, h in enumerate(grid.spacing):
        out = np.trapezoid(out, dx=h, axis=0)
    return out


def _spectral(values: np.ndarray, grid: Grid, axis: int, order: int) -> np.ndarray:
    k = grid.wavenumbers(axis)
    n = grid.points[axis]
    mult = (1j * k) ** order
    if order % 2 == 1 and n % 2 == 0:
        mult[n // 2] = 0.0  # Nyquist mode has no odd derivative
    shape = [1] * values.ndim
    shape[axis] = n
    out = np.fft.ifft(np.fft.fft(values, axis=axis) * mult.reshape(shape), axis=axis)
    return out.real if np.isrealobj(values) else out


def _second_difference(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    f = np.moveaxis(values, axis, 0)
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - 2 * f[1:-1] + f[:-2]) / h**2
    out[0] = (2 * f[0] - 5 * f[1] + 4 * f[2] - f[3]) / h**2
    out[-1] = (2 * f[-1] - 5 * f[-2] + 4 * f[-3] - f[-4]) / h**2
    return np.moveaxis(out, 0, axis)


def derivative(values: np.ndarray, grid: Grid, axis: int = 0, order: int = 1) -> np.ndarray:
    """First or second derivative along ``axis`` with the grid's scheme."""
    grid._check_axis(axis)
    if order not in (1, 2):
        raise ValueError("only first and second derivatives are supported")
    if grid.periodic:
        return _spectral(values, grid, axis, order)
    h = grid.spacing[axis]
    if order == 1:
        return np.gradient(values, h, axis=axis, edge_order=2)
    return _second_difference(values, h, axis)


def laplacian_values(values: np.ndarray, grid: Grid, metric: Metric) -> np.ndarray:
    return sum(metric.axis_g(i) * derivative(values, grid, i, 2) for i in range(grid.dim))


def stencil_derivatives(values: np.ndarray, grid: Grid, axis: int,
                        valid: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Three-point first and second differences that never cross invalid nodes.

    Used for fields such as an unwrapped action, which are neither periodic nor
    defined at wavefunction nodes.  Entries whose stencil touches an invalid
    node, or the ends of an axis, are NaN.
    """
    h = grid.spacing[axis]
    f = np.moveaxis(np.asarray(values, float), axis, 0)
    ok = np.ones(f.shape, bool) if valid is None else np.moveaxis(np.asarray(valid, bool), axis, 0)
    d1 = np.full(f.shape, np.nan)
    d2 = np.full(f.shape, np.nan)
    good = ok[2:] & ok[1:-1] & ok[:-2]
    d1[1:-1] = np.where(good, (f[2:] - f[:-2]) / (2 * h), np.nan)
    d2[1:-1] = np.where(good, (f[2:] - 2 * f[1:-1] + f[:-2]) / h**2, np.nan)
    return np.moveaxis(d1, 0, axis), np.moveaxis(d2, 0, axis)


# ---------------------------------------------------------------------------
# field-level operations

Field = Union[RealField, ComplexField]


def _rewrap(f: Field, values: np.ndarray, units: str | None = None) -> Field:
    if isinstance(f, ComplexField):
        return ComplexField(f.grid, values, f.time)
    return RealField(f.grid, values, units or f.units, f.mask)


def gradient(f: Field, axis: int = 0) -> Field:
    """Discrete first derivative of ``f`` along ``axis``."""
    return _rewrap(f, derivative(f.values, f.grid, axis, 1))


def laplacian(f: Field, metric: Metric) -> Field:
    """``sum_i g_ii d^2 f / dq_i^2``."""
    return _rewrap(f, laplacian_values(f.values, f.grid, metric))


def inner_product(f: ComplexField, g: ComplexField) -> complex:
    """Quadrature of ``conj(f) * g`` over the grid."""
    if f.grid != g.grid:
        raise GridError("inner product of fields on different grids")
    return complex(integrate(np.conj(f.values) * g.values, f.grid))


def highest_density_region(density: np.ndarray, fraction: float,
                           allowed: np.ndarray | None = None) -> np.ndarray:
    """Boolean mask of the densest nodes holding ``fraction`` of the total mass."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    d = np.where(allowed, density, 0.0) if allowed is not None else density
    if fraction >= 1:
        return d > 0 if allowed is None else np.asarray(allowed, bool)
    flat = d.ravel()
    order = np.argsort(-flat, kind="stable")
    cum = np.cumsum(flat[order])
    keep = np.searchsorted(cum, fraction * density.sum()) + 1
    region = np.zeros(flat.size, bool)
    region[order[:keep]] = True
    return region.reshape(density.shape)
