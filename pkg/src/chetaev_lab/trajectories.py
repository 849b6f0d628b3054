"""Bohmian trajectory ensembles and the equivariance check."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .dynamics import FieldSeries
from .grid import Grid, Metric, integrate
from .polar import velocity_values

SAMPLING_LAWS = ("density", "uniform", "explicit")


class TrajectoryError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrajectoryEnsemble:
    grid: Grid
    times: np.ndarray
    positions: np.ndarray  # (n_times, n_traj, dim)
    seed: int
    sampling_law: str

    @property
    def n_traj(self) -> int:
        return self.positions.shape[1]


def _streams(seed: int, n: int):
    # one independent stream per trajectory, keyed by (seed, index)
    return [np.random.default_rng(c) for c in np.random.SeedSequence(seed).spawn(n)]


def sample_positions(density: np.ndarray, grid: Grid, law: str, n_traj: int, seed: int,
                     explicit=None) -> np.ndarray:
    """Initial positions, shape (n_traj, dim)."""
    if law not in SAMPLING_LAWS:
        raise ValueError(f"unknown sampling law {law!r}")
    if law == "explicit":
        pts = np.asarray(explicit, float).reshape(-1, grid.dim)
        return pts
    rngs = _streams(seed, n_traj)
    h = np.array(grid.spacing)
    lo = np.array(grid.lower)
    if law == "uniform":
        u = np.array([r.random(grid.dim) for r in rngs])
        return lo + u * np.array(grid.lengths)
    w = np.asarray(density, float).ravel().copy()
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    u = np.array([r.random(1 + grid.dim) for r in rngs])
    cells = np.minimum(np.searchsorted(cdf, u[:, 0], side="right"), w.size - 1)
    idx = np.array(np.unravel_index(cells, grid.shape)).T
    pos = lo + idx * h + (u[:, 1:] - 0.5) * h
    if not grid.periodic:
        pos = np.clip(pos, lo, np.array(grid.upper))
    return pos


class _VelocitySlices:
    """Cubic-spline velocity coefficients for every stored slice."""

    def __init__(self, series: FieldSeries, metric: Metric):
        grid = series.grid
        self.grid = grid
        self.mode = "grid-wrap" if grid.periodic else "nearest"
        self.coeffs = []
        self.vmax = 0.0
        for psi in series.values:
            v, mask = velocity_values(psi, grid, metric, series.hbar)
            if mask.any():
                # masked nodes take the value of the nearest unmasked node
                _, ind = ndimage.distance_transform_edt(mask, return_indices=True)
                v = np.array([vi[tuple(ind)] for vi in v])
            self.vmax = max(self.vmax, float(np.max(np.abs(v))))
            self.coeffs.append([ndimage.spline_filter(vi, order=3, mode=self.mode) for vi in v])

    def at(self, k: int, pos: np.ndarray) -> np.ndarray:
        grid = self.grid
        coords = ((pos - np.array(grid.lower)) / np.array(grid.spacing)).T
        return np.stack([ndimage.map_coordinates(c, coords, order=3, mode=self.mode, prefilter=False)
                         for c in self.coeffs[k]], axis=-1)


def integrate_trajectories(series: FieldSeries, metric: Metric, sampling: str = "density",
                           n_traj: int = 1000, seed: int = 0, explicit=None,
                           substeps: int = 1) -> TrajectoryEnsemble:
    """Advance particles along ``dx/dt = g grad S`` through the stored slices.

    Classical RK4 with ``substeps`` steps per stored interval; the velocity is
    a cubic spline in space and linear in time between slices.  Periodic axes
    wrap (positions are stored unwrapped); leaving a box grid is an error.
    """
    grid = series.grid
    if len(series) < 2:
        raise ValueError("need at least two stored slices")
    slices = _VelocitySlices(series, metric)
    delta = series.interval
    if delta * slices.vmax >= 4 * min(grid.spacing):
        raise TrajectoryError(
            f"slices too sparse for trajectories: interval*max|v| = {delta * slices.vmax:.3g} "
            f">= 4h = {4 * min(grid.spacing):.3g}")
    x = sample_positions(np.abs(series.values[0]) ** 2, grid, sampling, n_traj, seed, explicit)
    if explicit is not None or sampling == "explicit":
        n_traj = x.shape[0]
    lo, hi = np.array(grid.lower), np.array(grid.upper)
    out = np.empty((len(series), n_traj, grid.dim))
    out[0] = x
    h = delta / substeps

    def vel(k, s, pos):
        return (1 - s) * slices.at(k, pos) + s * slices.at(k + 1, pos)

    for k in range(len(series) - 1):
        for j in range(substeps):
            s0 = j / substeps
            ds = 1 / substeps
            k1 = vel(k, s0, x)
            k2 = vel(k, s0 + ds / 2, x + 0.5 * h * k1)
            k3 = vel(k, s0 + ds / 2, x + 0.5 * h * k2)
            k4 = vel(k, s0 + ds, x + h * k3)
            x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not grid.periodic:
            out_of = np.any((x < lo) | (x > hi), axis=1)
            if out_of.any():
                bad = int(np.flatnonzero(out_of)[0])
                raise TrajectoryError(f"trajectory {bad} left the grid at t = {series.times[k + 1]:.6g}")
        if not np.all(np.isfinite(x)):
            raise TrajectoryError(f"non-finite trajectory position at t = {series.times[k + 1]:.6g}")
        out[k + 1] = x
    law = "explicit" if explicit is not None else sampling
    return TrajectoryEnsemble(grid, np.array(series.times), out, seed, law)


def deposit(positions: np.ndarray, grid: Grid) -> np.ndarray:
    """Cloud-in-cell density of a point set (unit total mass)."""
    n, dim = positions.shape
    coords = (positions - np.array(grid.lower)) / np.array(grid.spacing)
    base = np.floor(coords).astype(int)
    frac = coords - base
    dens = np.zeros(grid.shape)
    for corner in range(2**dim):
        offs = np.array([(corner >> a) & 1 for a in range(dim)])
        w = np.prod(np.where(offs, frac, 1 - frac), axis=1)
        idx = base + offs
        if grid.periodic:
            idx = idx % np.array(grid.shape)
        else:
            idx = np.clip(idx, 0, np.array(grid.shape) - 1)
        np.add.at(dens, tuple(idx.T), w)
    return dens / (n * grid.cell_volume)


def equivariance_check(ensemble: TrajectoryEnsemble, series: FieldSeries,
                       bandwidth: float | None = None) -> np.ndarray:
    """L1 distance between the smoothed trajectory density and ``|psi(t)|^2`` per stored time.

    Both densities are smoothed with the same Gaussian kernel (default width
    ``2h``) so the distance measures sampling noise and transport error, not
    kernel bias.
    """
    grid = series.grid
    if ensemble.grid != grid or len(ensemble.times) != len(series) or not np.allclose(ensemble.times, series.times):
        raise ValueError("ensemble and series do not share grid and stored times")
    bw = 2 * min(grid.spacing) if bandwidth is None else bandwidth
    sigma = [bw / h for h in grid.spacing]
    mode = "wrap" if grid.periodic else "constant"
    out = np.empty(len(series))
    for k in range(len(series)):
        ref = np.abs(series.values[k]) ** 2
        ref = ref / integrate(ref, grid)
        emp = deposit(ensemble.positions[k], grid)
        a = ndimage.gaussian_filter(emp, sigma, mode=mode)
        b = ndimage.gaussian_filter(ref, sigma, mode=mode)
        out[k] = float(integrate(np.abs(a - b), grid))
    return out
