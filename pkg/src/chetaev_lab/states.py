"""Closed-form wavefunctions used as initial data and as test oracles.

Two-dimensional states are products of one-dimensional factors; scalar
parameters apply to every axis.
"""
from __future__ import annotations

import numpy as np

from .grid import ComplexField, Grid


def _per_axis(x, dim):
    if np.isscalar(x):
        return [x] * dim
    x = list(x)
    if len(x) == 1:
        return x * dim
    if len(x) != dim:
        raise ValueError(f"expected {dim} per-axis values, got {len(x)}")
    return x


def _product(grid: Grid, factors) -> np.ndarray:
    vals = [factors[i](grid.axis(i)) for i in range(grid.dim)]
    out = vals[0]
    for v in vals[1:]:
        out = np.multiply.outer(out, v)
    return out


def gaussian(grid: Grid, sigma=1.0, center=0.0, momentum=0.0, hbar: float = 1.0,
             time: float = 0.0) -> ComplexField:
    """Normalized Gaussian whose density has variance ``sigma**2`` per axis."""
    s = _per_axis(sigma, grid.dim)
    c = _per_axis(center, grid.dim)
    p = _per_axis(momentum, grid.dim)

    def factor(i):
        return lambda x: ((2 * np.pi * s[i] ** 2) ** -0.25
                          * np.exp(-((x - c[i]) ** 2) / (4 * s[i] ** 2) + 1j * p[i] * x / hbar))

    return ComplexField(grid, _product(grid, [factor(i) for i in range(grid.dim)]), time)


def _hermite_function(xi: np.ndarray, n: int) -> np.ndarray:
    # normalized recurrence; stable for large n
    prev = np.pi**-0.25 * np.exp(-xi**2 / 2)
    if n == 0:
        return prev
    cur = np.sqrt(2.0) * xi * prev
    for k in range(2, n + 1):
        prev, cur = cur, np.sqrt(2.0 / k) * xi * cur - np.sqrt((k - 1) / k) * prev
    return cur


def oscillator_eigenstate(grid: Grid, n=0, omega: float = 1.0, mass=1.0, hbar: float = 1.0,
                          time: float = 0.0) -> ComplexField:
    """Harmonic-oscillator eigenfunction ``n`` (a tuple of indices in 2D), at phase zero."""
    ns = _per_axis(n, grid.dim)
    ms = _per_axis(mass, grid.dim)

    def factor(i):
        scale = np.sqrt(ms[i] * omega / hbar)
        return lambda x: np.sqrt(scale) * _hermite_function(scale * x, int(ns[i]))

    return ComplexField(grid, _product(grid, [factor(i) for i in range(grid.dim)]).astype(complex), time)


def oscillator_energy(n=0, omega: float = 1.0, hbar: float = 1.0) -> float:
    return float(sum(hbar * omega * (k + 0.5) for k in np.atleast_1d(n)))


def coherent_state(grid: Grid, amplitude: float, t: float = 0.0, omega: float = 1.0,
                   mass: float = 1.0, hbar: float = 1.0) -> ComplexField:
    """Ground state displaced to ``amplitude`` at rest at t=0, evolved exactly to ``t`` (1D)."""
    x = grid.axis(0)
    xc = amplitude * np.cos(omega * t)
    pc = -mass * omega * amplitude * np.sin(omega * t)
    psi = ((mass * omega / (np.pi * hbar)) ** 0.25
           * np.exp(-mass * omega * (x - xc) ** 2 / (2 * hbar)
                    + 1j * pc * (x - xc / 2) / hbar - 0.5j * omega * t))
    return ComplexField(grid, psi, t)


def free_gaussian(grid: Grid, sigma0: float, t: float = 0.0, center: float = 0.0,
                  momentum: float = 0.0, mass: float = 1.0, hbar: float = 1.0) -> ComplexField:
    """Freely spreading Gaussian packet at time ``t`` (1D); ``sigma0`` is the initial width."""
    x = grid.axis(0)
    a = sigma0 + 1j * hbar * t / (2 * mass * sigma0)
    xc = center + momentum * t / mass
    psi = ((2 * np.pi) ** -0.25 / np.sqrt(a)
           * np.exp(-((x - xc) ** 2) / (4 * sigma0 * a)
                    + 1j * momentum * (x - momentum * t / (2 * mass)) / hbar))
    return ComplexField(grid, psi, t)


def free_gaussian_variance(sigma0: float, t, mass: float = 1.0, hbar: float = 1.0):
    return sigma0**2 * (1 + (hbar * np.asarray(t) / (2 * mass * sigma0**2)) ** 2)


def plane_wave(grid: Grid, mode=1, hbar: float = 1.0, time: float = 0.0) -> ComplexField:
    """Normalized ``exp(i p.q / hbar)`` with ``p`` on the periodic wavenumber lattice."""
    if not grid.periodic:
        raise ValueError("plane waves need a periodic grid")
    modes = _per_axis(mode, grid.dim)
    ps = lattice_momentum(grid, modes, hbar)

    def factor(i):
        return lambda x: np.exp(1j * ps[i] * x / hbar) / np.sqrt(grid.lengths[i])

    return ComplexField(grid, _product(grid, [factor(i) for i in range(grid.dim)]), time)


def lattice_momentum(grid: Grid, mode, hbar: float = 1.0) -> list[float]:
    modes = _per_axis(mode, grid.dim)
    return [2 * np.pi * int(m) * hbar / L for m, L in zip(modes, grid.lengths)]
