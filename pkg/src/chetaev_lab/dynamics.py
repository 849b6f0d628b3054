"""Schrodinger evolution and the stationary eigenproblem.

Evolution uses Strang split-step Fourier on periodic grids and Crank-Nicolson
with Dirichlet walls on box grids.  Time-dependent potentials are sampled at
the step midpoint.  The stationary problem is solved on box grids with a
fourth-order five-point kinetic stencil (odd reflection at the walls).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import BOX, ComplexField, Grid, Metric, integrate, laplacian_values
from .potentials import Potential

SPLIT_STEP = "split_step_spectral"
CRANK_NICOLSON = "crank_nicolson"
SCHEMES = (SPLIT_STEP, CRANK_NICOLSON)


class EvolutionError(RuntimeError):
    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


@dataclass(frozen=True)
class EvolverConfig:
    """Time stepping parameters.

    ``dt`` is the largest allowed step; the step actually used is
    ``t_final / ceil(t_final / dt)`` so that the run lands on ``t_final``.
    ``direction=-1`` integrates backward in time.
    """

    dt: float
    t_final: float
    scheme: str = SPLIT_STEP
    store_every: int = 1
    direction: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_final < 0:
            raise ValueError("t_final must be non-negative")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.store_every < 1:
            raise ValueError("store_every must be a positive integer")
        if self.direction not in (1, -1):
            raise ValueError("direction must be +1 or -1")

    @property
    def n_steps(self) -> int:
        return math.ceil(self.t_final / self.dt - 1e-9) if self.t_final > 0 else 0

    @property
    def step(self) -> float:
        return self.t_final / self.n_steps if self.n_steps else self.dt


@dataclass(frozen=True)
class FieldSeries:
    """Wavefunction snapshots at uniformly spaced stored times."""

    grid: Grid
    times: np.ndarray
    values: np.ndarray
    hbar: float = 1.0

    def __len__(self) -> int:
        return len(self.times)

    def field(self, k: int) -> ComplexField:
        return ComplexField(self.grid, self.values[k], float(self.times[k]))

    @property
    def interval(self) -> float:
        if len(self.times) < 2:
            raise ValueError("series has a single slice")
        return float(self.times[1] - self.times[0])


def _check_compatible(grid: Grid, scheme: str):
    if scheme == SPLIT_STEP and not grid.periodic:
        raise ValueError("split_step_spectral requires a periodic grid")
    if scheme == CRANK_NICOLSON and grid.periodic:
        raise ValueError("crank_nicolson is implemented for box grids")


def _kinetic_symbol(grid: Grid, metric: Metric) -> np.ndarray:
    ks = np.meshgrid(*[grid.wavenumbers(i) for i in range(grid.dim)], indexing="ij")
    return sum(0.5 * metric.axis_g(i) * k**2 for i, k in enumerate(ks))


class _SplitStep:
    def __init__(self, grid, potential, metric, dt, hbar):
        self.grid, self.potential, self.dt, self.hbar = grid, potential, dt, hbar
        self.kinetic = np.exp(-1j * dt * hbar * _kinetic_symbol(grid, metric))
        self.half = None if potential.time_dependent else self._half(0.0)

    def _half(self, t):
        return np.exp(-0.5j * self.dt * self.potential.on_grid(self.grid, t) / self.hbar)

    def __call__(self, psi, t):
        half = self.half if self.half is not None else self._half(t + 0.5 * self.dt)
        psi = half * psi
        psi = np.fft.ifftn(self.kinetic * np.fft.fftn(psi))
        return half * psi


def dirichlet_hamiltonian(grid: Grid, potential: Potential, metric: Metric,
                          hbar: float = 1.0, t: float = 0.0) -> sp.csr_matrix:
    """Three-point Hamiltonian on the interior nodes of a box grid."""
    ops = []
    for i in range(grid.dim):
        n = grid.points[i] - 2
        h = grid.spacing[i]
        d2 = sp.diags([np.ones(n - 1), -2 * np.ones(n), np.ones(n - 1)], [-1, 0, 1]) / h**2
        ops.append(-0.5 * hbar**2 * metric.axis_g(i) * d2)
    kin = _kron_sum(ops)
    u = potential.on_grid(grid, t)[_interior(grid)].ravel()
    return (kin + sp.diags(u)).tocsc()


def _interior(grid: Grid):
    return tuple(slice(1, -1) for _ in range(grid.dim))


def _kron_sum(ops):
    if len(ops) == 1:
        return ops[0]
    a, b = ops
    return sp.kron(a, sp.identity(b.shape[0])) + sp.kron(sp.identity(a.shape[0]), b)


class _CrankNicolson:
    def __init__(self, grid, potential, metric, dt, hbar):
        self.grid, self.potential, self.metric, self.dt, self.hbar = grid, potential, metric, dt, hbar
        self.inner = _interior(grid)
        self.shape = tuple(n - 2 for n in grid.points)
        self.factor = None if potential.time_dependent else self._factor(0.0)

    def _factor(self, t):
        h = dirichlet_hamiltonian(self.grid, self.potential, self.metric, self.hbar, t)
        eye = sp.identity(h.shape[0], format="csc")
        a = 0.5j * self.dt / self.hbar * h
        return spla.splu((eye + a).tocsc()), (eye - a).tocsr()

    def __call__(self, psi, t):
        lu, rhs = self.factor if self.factor is not None else self._factor(t + 0.5 * self.dt)
        out = np.zeros_like(psi)
        out[self.inner] = lu.solve(rhs @ psi[self.inner].ravel()).reshape(self.shape)
        return out


def evolve(psi0: ComplexField, potential: Potential, metric: Metric, cfg: EvolverConfig,
           hbar: float = 1.0) -> FieldSeries:
    """Integrate ``i hbar dpsi/dt = -(hbar^2/2) sum g_i d_i^2 psi + U psi``."""
    grid = psi0.grid
    _check_compatible(grid, cfg.scheme)
    n_steps = cfg.n_steps
    dt = cfg.direction * cfg.step
    stepper_cls = _SplitStep if cfg.scheme == SPLIT_STEP else _CrankNicolson
    stepper = stepper_cls(grid, potential, metric, dt, hbar)

    psi = np.array(psi0.values, dtype=complex)
    if cfg.scheme == CRANK_NICOLSON:
        edge = np.ones(grid.shape, bool)
        edge[_interior(grid)] = False
        psi[edge] = 0.0
    t0 = psi0.time
    times, stored = [t0], [psi.copy()]
    for k in range(n_steps):
        psi = stepper(psi, t0 + k * dt)
        if not np.all(np.isfinite(psi)):
            raise EvolutionError("non-finite wavefunction", step=k + 1)
        if (k + 1) % cfg.store_every == 0:
            times.append(t0 + (k + 1) * dt)
            stored.append(psi.copy())
    return FieldSeries(grid, np.array(times), np.array(stored), hbar)


def hamiltonian_apply(psi: ComplexField, potential: Potential, metric: Metric,
                      hbar: float = 1.0, t: float | None = None) -> ComplexField:
    """``-(hbar^2/2) sum g_i d_i^2 psi + U psi`` with the grid's differentiation scheme."""
    t = psi.time if t is None else t
    grid = psi.grid
    out = -0.5 * hbar**2 * laplacian_values(psi.values, grid, metric) + potential.on_grid(grid, t) * psi.values
    return ComplexField(grid, out, psi.time)


def energy(psi: ComplexField, potential: Potential, metric: Metric, hbar: float = 1.0) -> float:
    h = hamiltonian_apply(psi, potential, metric, hbar)
    return float(np.real(integrate(np.conj(psi.values) * h.values, psi.grid)))


# ---------------------------------------------------------------------------
# stationary problem

@dataclass(frozen=True)
class Spectrum:
    energies: np.ndarray
    states: list
    residuals: np.ndarray
    method: str
    flags: tuple = field(default_factory=tuple)


def _kinetic_band_1d(n: int, h: float, coef: float) -> np.ndarray:
    """Upper banded form of ``-coef * d^2`` (five-point, fourth order) on n interior nodes."""
    band = np.zeros((3, n))
    s = coef / (12 * h**2)
    band[2] = 30 * s
    band[2, 0] = band[2, -1] = 29 * s  # ghost node beyond the wall is -psi_1
    band[1, 1:] = -16 * s
    band[0, 2:] = 1 * s
    return band


def _band_to_sparse(band: np.ndarray) -> sp.csr_matrix:
    n = band.shape[1]
    d0, d1, d2 = band[2], band[1, 1:], band[0, 2:]
    return sp.diags([d2, d1, d0, d1, d2], [-2, -1, 0, 1, 2], shape=(n, n)).tocsr()


def stationary_operator(grid: Grid, potential: Potential, metric: Metric,
                        hbar: float = 1.0) -> sp.csr_matrix:
    """Sparse discrete Hamiltonian used by :func:`solve_stationary`."""
    ops = [_band_to_sparse(_kinetic_band_1d(grid.points[i] - 2, grid.spacing[i],
                                            0.5 * hbar**2 * metric.axis_g(i)))
           for i in range(grid.dim)]
    u = potential.on_grid(grid)[_interior(grid)].ravel()
    return (_kron_sum(ops) + sp.diags(u)).tocsr()


def _canonical_basis(vectors: np.ndarray, energies: np.ndarray, rtol: float = 1e-7) -> np.ndarray:
    """Fix signs, and rotate degenerate subspaces by Gram-Schmidt in node order."""
    out = vectors.copy()
    start = 0
    while start < len(energies):
        stop = start + 1
        while stop < len(energies) and abs(energies[stop] - energies[start]) <= rtol * max(1.0, abs(energies[start])):
            stop += 1
        if stop - start > 1:
            sub = vectors[:, start:stop]
            basis = []
            for j in range(sub.shape[0]):
                w = sub @ sub[j]
                for b in basis:
                    w = w - (b @ w) * b
                nw = np.linalg.norm(w)
                if nw > 1e-6:
                    basis.append(w / nw)
                if len(basis) == stop - start:
                    break
            out[:, start:stop] = np.array(basis).T
        start = stop
    for k in range(out.shape[1]):
        v = out[:, k]
        first = np.flatnonzero(np.abs(v) > 1e-3 * np.abs(v).max())[0]
        if v[first] < 0:
            out[:, k] = -v
    return out


def solve_stationary(potential: Potential, metric: Metric, grid: Grid, n_states: int,
                     hbar: float = 1.0) -> Spectrum:
    """Lowest ``n_states`` eigenpairs of the discrete Hamiltonian with hard walls."""
    if grid.boundary != BOX:
        raise ValueError("solve_stationary needs a box grid")
    if potential.time_dependent:
        raise ValueError("solve_stationary needs a time-independent potential")
    n_inner = int(np.prod([n - 2 for n in grid.points]))
    if not 1 <= n_states <= n_inner:
        raise ValueError(f"n_states must lie in [1, {n_inner}]")

    op = stationary_operator(grid, potential, metric, hbar)
    if grid.dim == 1:
        band = _kinetic_band_1d(n_inner, grid.spacing[0], 0.5 * hbar**2 * metric.axis_g(0))
        band[2] += potential.on_grid(grid)[1:-1]
        energies, vecs = sla.eig_banded(band, select="i", select_range=(0, n_states - 1))
        method = "banded symmetric eigensolver (dense)"
    else:
        sigma = float(potential.on_grid(grid).min()) - 1.0
        energies, vecs = spla.eigsh(op, k=n_states, sigma=sigma, which="LM", tol=1e-12)
        order = np.argsort(energies)
        energies, vecs = energies[order], vecs[:, order]
        method = "shift-invert Lanczos (iterative)"

    vecs = _canonical_basis(vecs, energies)
    residuals = np.linalg.norm(op @ vecs - vecs * energies, axis=0)
    scale = 1.0 / np.sqrt(grid.cell_volume)
    states = []
    for k in range(n_states):
        full = np.zeros(grid.shape, complex)
        full[_interior(grid)] = vecs[:, k].reshape([n - 2 for n in grid.points]) * scale
        states.append(ComplexField(grid, full))
    if np.any(residuals > 1e-6 * np.maximum(1.0, np.abs(energies))):
        raise EvolutionError(f"eigensolver did not converge; residuals {residuals}")
    return Spectrum(np.asarray(energies), states, residuals, method)


@dataclass(frozen=True)
class BoxArtifactReport:
    energies: np.ndarray
    energies_doubled: np.ndarray
    slope: np.ndarray
    flags: tuple


def box_artifact_check(potential: Potential, metric: Metric, grid: Grid, n_states: int,
                       hbar: float = 1.0, threshold: float = 1e-4) -> BoxArtifactReport:
    """Re-solve on a box twice as long at the same spacing; levels that move are artifacts.

    ``slope`` is ``dE/dL`` estimated from the two box sizes; a level whose
    slope exceeds ``threshold`` is flagged ``"box-artifact"``.
    """
    centers = [(a + b) / 2 for a, b in zip(grid.lower, grid.upper)]
    big = Grid(tuple(c - L for c, L in zip(centers, grid.lengths)),
               tuple(c + L for c, L in zip(centers, grid.lengths)),
               tuple(2 * (n - 1) + 1 for n in grid.points), BOX)
    e1 = solve_stationary(potential, metric, grid, n_states, hbar).energies
    e2 = solve_stationary(potential, metric, big, n_states, hbar).energies
    length = grid.lengths[0]
    slope = (e2 - e1) / length
    flags = tuple("box-artifact" if abs(s) > threshold else "stable" for s in slope)
    return BoxArtifactReport(e1, e2, slope, flags)
