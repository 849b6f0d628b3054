"""Moments, momentum statistics and the uncertainty identity through <Q>."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import ComplexField, Metric, derivative, integrate
from .polar import NORM_TOL, amplitude_gradient_squared, perturbation_action

REAL_STATE_TOL = 1e-8
IDENTITY_TOL = 1e-6


def _check(psi: ComplexField):
    if not psi.is_normalized(NORM_TOL):
        raise ValueError(f"moments need a normalized field (norm^2 = {psi.norm_squared()})")


def _marginal(density: np.ndarray, axis: int) -> np.ndarray:
    other = tuple(a for a in range(density.ndim) if a != axis)
    return density.sum(axis=other) if other else density


def _fourier_moments(rho: np.ndarray, lower: float, length: float):
    """Exact first and second moments of the trigonometric interpolant of ``rho`` on one period."""
    n = rho.size
    d = np.fft.fft(rho) / n
    k = 2 * np.pi * np.fft.fftfreq(n, length / n)
    if n % 2 == 0:
        # Nyquist term is a cosine: split it over +-k
        d = np.append(d, d[n // 2] / 2)
        d[n // 2] /= 2
        k = np.append(k, -k[n // 2])
    nz = k != 0
    i0 = np.zeros_like(d)
    i1 = np.zeros_like(d)
    i2 = np.zeros_like(d)
    kk = k[nz]
    # integrals of y^j e^{iky} over [0, L)
    i0[~nz] = length
    i1[~nz] = length**2 / 2
    i2[~nz] = length**3 / 3
    i1[nz] = length / (1j * kk)
    i2[nz] = length**2 / (1j * kk) + 2 * length / kk**2
    m0 = np.sum(d * i0).real
    my = np.sum(d * i1).real
    myy = np.sum(d * i2).real
    # shift y = x - lower
    return (my + lower * m0), (myy + 2 * lower * my + lower**2 * m0)


def position_moments(psi: ComplexField) -> tuple[np.ndarray, np.ndarray]:
    """``<x_i>`` and ``<x_i^2>`` per axis.

    Periodic grids integrate the trigonometric interpolant of the density
    exactly over one period; box grids use the trapezoid rule.
    """
    grid = psi.grid
    dens = np.abs(psi.values) ** 2
    m1, m2 = [], []
    for i in range(grid.dim):
        if grid.periodic:
            other_vol = grid.cell_volume / grid.spacing[i]
            rho = _marginal(dens, i) * other_vol
            a, b = _fourier_moments(rho, grid.lower[i], grid.lengths[i])
        else:
            x = grid.mesh()[i]
            a = float(integrate(x * dens, grid))
            b = float(integrate(x**2 * dens, grid))
        m1.append(a)
        m2.append(b)
    return np.array(m1), np.array(m2)


def momentum_moments(psi: ComplexField, hbar: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """``<p_i> = Re<psi, -i hbar d_i psi>`` and ``<p_i^2> = hbar^2 |d_i psi|^2`` per axis."""
    grid = psi.grid
    v = psi.values
    p1, p2 = [], []
    for i in range(grid.dim):
        d = derivative(v, grid, i, 1)
        p1.append(float(np.real(integrate(np.conj(v) * (-1j * hbar) * d, grid))))
        p2.append(float(hbar**2 * integrate(np.abs(d) ** 2, grid)))
    return np.array(p1), np.array(p2)


def spectral_momentum_second_moment(psi: ComplexField, hbar: float = 1.0) -> np.ndarray:
    """``<p_i^2>`` from the discrete Fourier coefficients (periodic grids only)."""
    grid = psi.grid
    if not grid.periodic:
        raise ValueError("wavenumber-space moments need a periodic grid")
    c = np.fft.fftn(psi.values)
    w = np.abs(c) ** 2
    w = w / w.sum()
    out = []
    for i in range(grid.dim):
        k = grid.wavenumbers(i).copy()
        if grid.shape[i] % 2 == 0:
            # match the differentiation convention: Nyquist carries no momentum
            k[grid.shape[i] // 2] = 0.0
        shape = [1] * grid.dim
        shape[i] = -1
        out.append(float(np.sum(w * (hbar * k.reshape(shape)) ** 2)))
    return np.array(out) * psi.norm_squared()


@dataclass(frozen=True)
class MomentReport:
    mean_x: np.ndarray
    mean_x2: np.ndarray
    var_x: np.ndarray
    mean_p: np.ndarray
    mean_p2: np.ndarray
    var_p: np.ndarray
    mean_q: float
    q_axes: np.ndarray  # per-axis share of <Q>
    hbar: float

    @property
    def product(self) -> np.ndarray:
        return self.var_x * self.var_p

    def as_dict(self) -> dict:
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in
                [("mean_x", self.mean_x), ("mean_x2", self.mean_x2), ("var_x", self.var_x),
                 ("mean_p", self.mean_p), ("mean_p2", self.mean_p2), ("var_p", self.var_p),
                 ("mean_Q", self.mean_q), ("product", self.product)]}


def moments(psi: ComplexField, metric: Metric, hbar: float = 1.0) -> MomentReport:
    """Position and momentum moments and ``<Q>`` of a normalized field."""
    _check(psi)
    x1, x2 = position_moments(psi)
    p1, p2 = momentum_moments(psi, hbar)
    sq = amplitude_gradient_squared(psi, hbar)
    q_axes = np.array([0.5 * hbar**2 * metric.axis_g(i) * float(integrate(s, psi.grid))
                       for i, s in enumerate(sq)])
    mean_q = perturbation_action(psi, metric, hbar)
    return MomentReport(x1, x2, np.maximum(x2 - x1**2, 0.0), p1, p2, np.maximum(p2 - p1**2, 0.0),
                        mean_q, q_axes, hbar)


def _localized(psi: ComplexField, rel: float = 1e-8) -> bool:
    # density must vanish at the domain edges (seam included on periodic grids)
    dens = np.abs(psi.values) ** 2
    edge = 0.0
    for ax in range(psi.grid.dim):
        edge = max(edge, float(np.take(dens, 0, axis=ax).max()), float(np.take(dens, -1, axis=ax).max()))
    return bool(edge <= rel * dens.max())


def max_phase_gradient(psi: ComplexField, hbar: float = 1.0) -> float:
    """Density-weighted largest ``|grad S|``: ``max |hbar Im(conj(psi) d psi)| / max |psi|^2``."""
    v = psi.values
    peak = np.max(np.abs(v) ** 2)
    return float(max(np.max(np.abs(hbar * np.imag(np.conj(v) * derivative(v, psi.grid, i, 1))))
                     for i in range(psi.grid.dim)) / peak)


@dataclass(frozen=True)
class UncertaintyReport:
    gap: np.ndarray            # var_p - 2 m <Q>, per axis
    phase_spread: np.ndarray   # int P (dS - <p>)^2, per axis
    decomposition_residual: float
    product: np.ndarray        # var_x * 2 m <Q>, per axis
    floor: float               # hbar^2 / 4
    real_state: bool
    localized: bool
    flags: tuple

    @property
    def gap_ok(self) -> bool | None:
        """Asserted only for real states; ``None`` when merely reported."""
        if not self.real_state:
            return None
        return bool(np.all(np.abs(self.gap) <= IDENTITY_TOL))

    @property
    def inequality_ok(self) -> bool | None:
        if not self.localized:
            return None
        return bool(np.all(self.product >= self.floor - IDENTITY_TOL))

    def as_dict(self) -> dict:
        return {"gap": self.gap.tolist(), "phase_spread": self.phase_spread.tolist(),
                "decomposition_residual": self.decomposition_residual, "product": self.product.tolist(),
                "floor": self.floor, "real_state": self.real_state, "localized": self.localized,
                "gap_ok": self.gap_ok, "inequality_ok": self.inequality_ok, "flags": list(self.flags)}


def verify_uncertainty(psi: ComplexField, metric: Metric, hbar: float = 1.0,
                real_tol: float = REAL_STATE_TOL) -> UncertaintyReport:
    """Check ``var_p = 2m<Q>`` and ``var_x 2m<Q> >= hbar^2/4`` axis by axis.

    The equality holds only when ``grad S = 0``; it is asserted under the
    real-state flag and otherwise reported together with the phase term
    ``int P (dS - <p>)^2`` that closes it.  Fields that do not vanish at the
    domain edges (plane waves) are flagged and the inequality is not asserted.
    """
    rep = moments(psi, metric, hbar)
    grid = psi.grid
    v = psi.values
    dens = np.abs(v) ** 2
    safe = np.where(dens > 0, dens, 1.0)
    two_m_q = np.array([2 * metric.masses[i if len(metric.masses) > 1 else 0] * rep.q_axes[i]
                        for i in range(grid.dim)])
    gap = rep.var_p - two_m_q
    spread = []
    for i in range(grid.dim):
        cur = hbar * np.imag(np.conj(v) * derivative(v, grid, i, 1))
        spread.append(float(integrate(np.where(dens > 0, cur**2 / safe, 0.0), grid)) - rep.mean_p[i] ** 2)
    spread = np.array(spread)
    real = max_phase_gradient(psi, hbar) <= real_tol
    loc = _localized(psi)
    flags = []
    if real:
        flags.append("real-state")
    if not loc:
        flags.append("non-normalizable-limit")
    return UncertaintyReport(gap, spread, float(np.max(np.abs(gap - spread))), rep.var_x * two_m_q,
                             hbar**2 / 4, real, loc, tuple(flags))
