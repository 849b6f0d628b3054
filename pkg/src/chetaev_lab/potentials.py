"""Potential energy catalog shared by the wave and the classical solvers."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .grid import Grid, RealField

KINDS = ("harmonic", "free", "inverted_harmonic", "box_well", "linear", "tabulated")


@dataclass(frozen=True)
class Potential:
    """``U(q, t)`` for one of the catalog kinds.

    ``harmonic``/``inverted_harmonic`` use ``+-1/2 m omega^2 q^2`` per axis,
    ``linear`` is ``-F q`` along the first axis, ``box_well`` is zero inside the
    box (the walls come from the grid's Dirichlet boundary) and ``tabulated``
    interpolates a RealField.  ``modulation`` makes the potential time
    dependent: ``U(q, t) = modulation(t) * U(q)``.
    """

    kind: str = "free"
    omega: float = 1.0
    force: float = 0.0
    mass: tuple[float, ...] = (1.0,)
    table: Optional[RealField] = None
    modulation: Optional[Callable[[float], float]] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}; expected one of {KINDS}")
        if self.kind in ("harmonic", "inverted_harmonic") and not self.omega > 0:
            raise ValueError("harmonic potentials require omega > 0")
        if self.kind == "tabulated" and self.table is None:
            raise ValueError("tabulated potential needs a table")
        m = (float(self.mass),) if np.isscalar(self.mass) else tuple(float(x) for x in self.mass)
        object.__setattr__(self, "mass", m)

    @property
    def time_dependent(self) -> bool:
        return self.modulation is not None

    def _m(self, i: int) -> float:
        return self.mass[i] if len(self.mass) > 1 else self.mass[0]

    def _scale(self, t: float) -> float:
        return 1.0 if self.modulation is None else float(self.modulation(t))

    def _static(self, coords: Sequence[np.ndarray]) -> np.ndarray:
        shape = np.shape(coords[0])
        if self.kind in ("free", "box_well"):
            return np.zeros(shape)
        if self.kind in ("harmonic", "inverted_harmonic"):
            sign = 1.0 if self.kind == "harmonic" else -1.0
            return sign * sum(0.5 * self._m(i) * self.omega**2 * c**2 for i, c in enumerate(coords))
        if self.kind == "linear":
            return -self.force * np.asarray(coords[0], float)
        interp = RegularGridInterpolator(
            [self.table.grid.axis(i) for i in range(self.table.grid.dim)],
            self.table.values, method="cubic", bounds_error=False, fill_value=None)
        pts = np.stack([np.ravel(c) for c in coords], axis=-1)
        return interp(pts).reshape(shape)

    def on_grid(self, grid: Grid, t: float = 0.0) -> np.ndarray:
        if self.kind == "box_well" and grid.periodic:
            raise ValueError("box_well needs a box grid")
        return self._scale(t) * self._static(grid.mesh())

    def __call__(self, q, t: float = 0.0) -> np.ndarray:
        """Evaluate at points ``q`` of shape (..., n)."""
        q = np.asarray(q, float)
        coords = [q[..., i] for i in range(q.shape[-1])]
        return self._scale(t) * self._static(coords)

    def gradient(self, q, t: float = 0.0) -> np.ndarray:
        q = np.asarray(q, float)
        n = q.shape[-1]
        if self.kind in ("free", "box_well"):
            g = np.zeros_like(q)
        elif self.kind in ("harmonic", "inverted_harmonic"):
            sign = 1.0 if self.kind == "harmonic" else -1.0
            g = np.stack([sign * self._m(i) * self.omega**2 * q[..., i] for i in range(n)], -1)
        elif self.kind == "linear":
            g = np.zeros_like(q)
            g[..., 0] = -self.force
        else:
            g = _fd_gradient(lambda x: self._static([x[..., i] for i in range(n)]), q)
        return self._scale(t) * g

    def hessian(self, q, t: float = 0.0) -> np.ndarray:
        q = np.asarray(q, float)
        n = q.shape[-1]
        if self.kind in ("harmonic", "inverted_harmonic"):
            sign = 1.0 if self.kind == "harmonic" else -1.0
            h = np.diag([sign * self._m(i) * self.omega**2 for i in range(n)])
            h = np.broadcast_to(h, q.shape[:-1] + (n, n)).copy()
        elif self.kind == "tabulated":
            h = _fd_hessian(lambda x: self._static([x[..., i] for i in range(n)]), q)
        else:
            h = np.zeros(q.shape[:-1] + (n, n))
        return self._scale(t) * h


def _fd_gradient(f, q, eps: float = 1e-5) -> np.ndarray:
    g = np.empty_like(q)
    for i in range(q.shape[-1]):
        e = np.zeros(q.shape[-1])
        e[i] = eps
        g[..., i] = (f(q + e) - f(q - e)) / (2 * eps)
    return g


def _fd_hessian(f, q, eps: float = 1e-4) -> np.ndarray:
    n = q.shape[-1]
    h = np.empty(q.shape[:-1] + (n, n))
    for i in range(n):
        for j in range(i, n):
            ei = np.zeros(n)
            ej = np.zeros(n)
            ei[i] = eps
            ej[j] = eps
            val = (f(q + ei + ej) - f(q + ei - ej) - f(q - ei + ej) + f(q - ei - ej)) / (4 * eps**2)
            h[..., i, j] = val
            h[..., j, i] = val
    return h
