"""Polar decomposition, the quantum potential and the Bohm-system residuals.

Spatial derivatives of the amplitude and the action are taken through the
logarithmic derivatives of the wavefunction,

    d psi / psi = dA/A + i dS/hbar,

so nothing non-periodic (the unwrapped action) is ever differentiated
spectrally.  Where an independent route is wanted (the amplitude itself, the
density, or the unwrapped action on stencils) it is used explicitly and the
two routes are compared.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .dynamics import FieldSeries
from .grid import (NODE_THRESHOLD, ComplexField, Grid, GridError, Metric, PolarField, RealField,
                   derivative, highest_density_region, integrate, stencil_derivatives)
from .potentials import Potential

NORM_TOL = 1e-8


@dataclass(frozen=True)
class ResidualReport:
    """Size of an equation's residual over the evaluated nodes.

    ``l2`` is a root-mean-square over space (and stored times); it is volume
    weighted for density-valued equations and density weighted for
    energy-valued ones, as named by ``weighting``.
    """

    name: str
    l2: float
    linf: float
    masked_fraction: float
    weighting: str = "volume"
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.l2 < 0 or self.linf < 0 or not 0 <= self.masked_fraction <= 1:
            raise ValueError("invalid residual report")

    def as_dict(self) -> dict:
        return {"name": self.name, "l2": self.l2, "linf": self.linf,
                "masked_fraction": self.masked_fraction, "weighting": self.weighting,
                "details": self.details}


# ---------------------------------------------------------------------------
# decomposition

def _unwrap_from(phase: np.ndarray, comp: np.ndarray, seed: int, periodic_ok=False) -> np.ndarray:
    """Breadth-first phase unwrapping over one connected component (flat indexing)."""
    shape = phase.shape
    flat = phase.ravel()
    inside = comp.ravel()
    out = np.full(flat.size, np.nan)
    out[seed] = flat[seed]
    queue = deque([seed])
    while queue:
        j = queue.popleft()
        idx = np.unravel_index(j, shape)
        for ax in range(len(shape)):
            for step in (-1, 1):
                k = idx[ax] + step
                if not 0 <= k < shape[ax]:
                    continue
                nb = list(idx)
                nb[ax] = k
                n = np.ravel_multi_index(nb, shape)
                if inside[n] and np.isnan(out[n]):
                    d = flat[n] - flat[j]
                    out[n] = out[j] + (d + np.pi) % (2 * np.pi) - np.pi
                    queue.append(n)
    return out.reshape(shape)


def _unwrap_1d(phase: np.ndarray, comp: np.ndarray, seed: int) -> np.ndarray:
    out = np.full(phase.shape, np.nan)
    idx = np.flatnonzero(comp)
    lo, hi = idx.min(), idx.max()
    right = np.unwrap(phase[seed:hi + 1])
    left = np.unwrap(phase[lo:seed + 1][::-1])[::-1]
    out[seed:hi + 1] = right
    out[lo:seed + 1] = left
    return out


def decompose(psi: ComplexField, hbar: float = 1.0, threshold: float = NODE_THRESHOLD) -> PolarField:
    """Split ``psi`` into ``A = |psi|`` and an unwrapped action ``S``.

    Each connected unmasked region is unwrapped outward from its largest
    amplitude, where ``S`` lies in ``(-pi hbar, pi hbar]``; unwrapping never
    crosses masked nodes, nor the seam of a periodic axis.  Masked nodes keep
    the raw wrapped phase so that :func:`recompose` is exact everywhere.
    """
    amp = np.abs(psi.values)
    if amp.max() == 0:
        raise GridError("field is identically zero")
    mask = amp < threshold * amp.max()
    phase = np.angle(psi.values)
    labels, n_comp = ndimage.label(~mask)
    unwrapped = phase.copy()
    for c in range(1, n_comp + 1):
        comp = labels == c
        seed = int(np.argmax(np.where(comp, amp, -1.0)))
        if psi.grid.dim == 1:
            part = _unwrap_1d(phase, comp, seed)
        else:
            part = _unwrap_from(phase, comp, seed)
        unwrapped[comp] = part[comp]
    return PolarField(psi.grid, amp, hbar * unwrapped, mask, hbar, psi.time)


def recompose(polar: PolarField) -> ComplexField:
    return ComplexField(polar.grid, polar.amplitude * np.exp(1j * polar.action / polar.hbar), polar.time)


# ---------------------------------------------------------------------------
# log-derivative kernel

def log_derivatives(values: np.ndarray, grid: Grid, mask: np.ndarray):
    """``d_i psi / psi`` and ``d_i^2 psi / psi`` per axis, NaN on masked nodes."""
    safe = np.where(mask, 1.0, values)
    d1, d2 = [], []
    for i in range(grid.dim):
        d1.append(np.where(mask, np.nan, derivative(values, grid, i, 1) / safe))
        d2.append(np.where(mask, np.nan, derivative(values, grid, i, 2) / safe))
    return d1, d2


def _amplitude_terms(values, grid, mask):
    """``dA/A``, ``d^2A/A`` and ``dS/hbar`` per axis from the log-derivatives."""
    d1, d2 = log_derivatives(values, grid, mask)
    ga = [np.real(a) for a in d1]
    gs = [np.imag(a) for a in d1]
    lap = [np.real(b) + s**2 for b, s in zip(d2, gs)]
    return ga, lap, gs, d1, d2


def _q_values(values, grid, mask, metric, hbar):
    _, lap, _, _, _ = _amplitude_terms(values, grid, mask)
    return -0.5 * hbar**2 * sum(metric.axis_g(i) * lap[i] for i in range(grid.dim))


def quantum_potential(polar: PolarField, metric: Metric) -> RealField:
    """``Q = -(hbar^2/2) sum g_i d_i^2 A / A`` off the node mask."""
    if polar.node_mask.all():
        raise GridError("every node is masked")
    psi = recompose(polar)
    q = _q_values(psi.values, polar.grid, polar.node_mask, metric, polar.hbar)
    return RealField(polar.grid, q, "energy", polar.node_mask)


def action_gradient(values, grid, mask, hbar):
    return [hbar * np.imag(a) for a in log_derivatives(values, grid, mask)[0]]


def bohm_velocity(polar: PolarField, metric: Metric) -> tuple[RealField, ...]:
    """Velocity field ``v_i = g_i dS/dq_i``, one RealField per axis."""
    psi = recompose(polar)
    grads = action_gradient(psi.values, polar.grid, polar.node_mask, polar.hbar)
    return tuple(RealField(polar.grid, metric.axis_g(i) * g, "velocity", polar.node_mask)
                 for i, g in enumerate(grads))


def velocity_values(values: np.ndarray, grid: Grid, metric: Metric, hbar: float,
                    threshold: float = NODE_THRESHOLD):
    amp = np.abs(values)
    mask = amp < threshold * amp.max()
    grads = action_gradient(values, grid, mask, hbar)
    return np.array([metric.axis_g(i) * g for i, g in enumerate(grads)]), mask


def amplitude_gradient_squared(psi: ComplexField, hbar: float = 1.0) -> list[np.ndarray]:
    """``(dA/dq_i)^2`` per axis, finite at nodes.

    Off the node mask ``|d psi|^2 - Im(conj(psi) d psi)^2 / |psi|^2``; at a
    node, where the current term has no limit of its own, ``|d psi|^2``.
    """
    v = psi.values
    mask = psi.node_mask()
    dens = np.where(mask, 1.0, np.abs(v) ** 2)
    out = []
    for i in range(psi.grid.dim):
        d = derivative(v, psi.grid, i, 1)
        cur = np.imag(np.conj(v) * d)
        # clip round-off: the exact value is a square
        out.append(np.where(mask, np.abs(d) ** 2, np.maximum(np.abs(d) ** 2 - cur**2 / dens, 0.0)))
    return out


def perturbation_action(psi: ComplexField, metric: Metric, hbar: float = 1.0) -> float:
    """``J = int Q |psi|^2 dV`` in integrated-by-parts form ``(hbar^2/2) sum g_i int (dA/dq_i)^2``."""
    if not psi.is_normalized(NORM_TOL):
        raise ValueError(f"perturbation_action needs a normalized field (norm^2 = {psi.norm_squared()})")
    sq = amplitude_gradient_squared(psi, hbar)
    return float(0.5 * hbar**2 * sum(metric.axis_g(i) * integrate(s, psi.grid) for i, s in enumerate(sq)))


def action_divergence(action: np.ndarray, valid: np.ndarray, grid: Grid, metric: Metric) -> np.ndarray:
    """``sum_i d/dq_i (g_i dS/dq_i)`` of a sampled action on three-point stencils."""
    return sum(metric.axis_g(i) * stencil_derivatives(action, grid, i, valid)[1] for i in range(grid.dim))


# ---------------------------------------------------------------------------
# regions and reports

def _interior_mask(grid: Grid) -> np.ndarray:
    m = np.ones(grid.shape, bool)
    if not grid.periodic:
        for ax in range(grid.dim):
            sl = [slice(None)] * grid.dim
            sl[ax] = 0
            m[tuple(sl)] = False
            sl[ax] = -1
            m[tuple(sl)] = False
    return m


def evaluation_region(density: np.ndarray, mask: np.ndarray, grid: Grid, core_mass: float = 1.0) -> np.ndarray:
    """Unmasked interior nodes, optionally cut to the densest ``core_mass`` of probability."""
    allowed = ~mask & _interior_mask(grid)
    if core_mass >= 1:
        return allowed
    return highest_density_region(density, core_mass, allowed)


def _accumulate(residuals, regions, weights, grid):
    num = den = 0.0
    linf = 0.0
    for r, reg, w in zip(residuals, regions, weights):
        rr = np.abs(r[reg])
        if rr.size == 0:
            continue
        ww = w[reg] if w is not None else np.ones_like(rr)
        num += np.sum(ww * rr**2)
        den += np.sum(ww)
        linf = max(linf, float(np.nanmax(rr)))
    l2 = float(np.sqrt(num / den)) if den > 0 else 0.0
    return l2, linf


def _masked_fraction(masks) -> float:
    return float(np.mean([m.mean() for m in masks]))


def _check_series(series: FieldSeries):
    if len(series) < 3:
        raise ValueError("need at least 3 stored slices for centered time differences")
    dts = np.diff(series.times)
    if not np.allclose(dts, dts[0], rtol=1e-9, atol=0):
        raise ValueError("stored times must be uniformly spaced")


@dataclass
class _Slice:
    """Derived quantities of one interior stored time."""

    k: int
    t: float
    psi: np.ndarray
    mask: np.ndarray
    density: np.ndarray
    dpdt: np.ndarray
    dsdt: np.ndarray


def _slices(series: FieldSeries, threshold=NODE_THRESHOLD):
    _check_series(series)
    delta = series.interval
    vals = series.values
    for k in range(1, len(series) - 1):
        psi = vals[k]
        amp = np.abs(psi)
        mask = amp < threshold * amp.max()
        dens = amp**2
        dpdt = (np.abs(vals[k + 1]) ** 2 - np.abs(vals[k - 1]) ** 2) / (2 * delta)
        dsdt = series.hbar * np.angle(vals[k + 1] * np.conj(vals[k - 1])) / (2 * delta)
        yield _Slice(k, float(series.times[k]), psi, mask, dens, dpdt, dsdt)


# ---------------------------------------------------------------------------
# Bohm-system residuals

def continuity_residual(series: FieldSeries, metric: Metric, core_mass: float = 1.0
                        ) -> tuple[ResidualReport, ResidualReport]:
    """Full and reduced continuity residuals.

    full:     dP/dt + div(P g grad S)
    reduced:  dP/dt + g grad P . grad S
    Their difference is ``P sum g_i d_i^2 S``; ``details["gap_identity"]`` is the
    largest deviation from that identity.
    """
    grid, hbar = series.grid, series.hbar
    full_r, red_r, regions, masks = [], [], [], []
    gap = 0.0
    for sl in _slices(series):
        v = sl.psi
        flux_div = sum(derivative(metric.axis_g(i) * hbar * np.imag(np.conj(v) * derivative(v, grid, i, 1)),
                                  grid, i, 1) for i in range(grid.dim))
        d1, d2 = log_derivatives(v, grid, sl.mask)
        ds = [hbar * np.imag(a) for a in d1]
        d2s = [hbar * (np.imag(b) - 2 * np.real(a) * np.imag(a)) for a, b in zip(d1, d2)]
        dp = [derivative(sl.density, grid, i, 1) for i in range(grid.dim)]
        full = sl.dpdt + flux_div
        reduced = sl.dpdt + sum(metric.axis_g(i) * dp[i] * ds[i] for i in range(grid.dim))
        expected_gap = sl.density * sum(metric.axis_g(i) * d2s[i] for i in range(grid.dim))
        region = evaluation_region(sl.density, sl.mask, grid, core_mass)
        if region.any():
            gap = max(gap, float(np.max(np.abs((full - reduced - expected_gap)[region]))))
        full_r.append(full)
        red_r.append(reduced)
        regions.append(region)
        masks.append(sl.mask)
    mf = _masked_fraction(masks)
    l2f, lif = _accumulate(full_r, regions, [None] * len(regions), grid)
    l2r, lir = _accumulate(red_r, regions, [None] * len(regions), grid)
    details = {"gap_identity": gap, "core_mass": core_mass, "slices": len(regions)}
    return (ResidualReport("continuity_full", l2f, lif, mf, "volume", dict(details)),
            ResidualReport("continuity_reduced", l2r, lir, mf, "volume", dict(details)))


def qhj_residual(series: FieldSeries, potential: Potential, metric: Metric,
                 core_mass: float = 1.0) -> ResidualReport:
    """Residual of ``dS/dt + (1/2) g (grad S)^2 + U + Q`` with Q in amplitude form.

    ``details`` carries the same residual with Q written through the density
    ``P = A^2`` and the largest difference between the two forms of Q.
    """
    grid, hbar = series.grid, series.hbar
    res_a, res_p, regions, weights, masks = [], [], [], [], []
    form_gap = 0.0
    for sl in _slices(series):
        _, lap, gs, _, _ = _amplitude_terms(sl.psi, grid, sl.mask)
        kinetic = 0.5 * hbar**2 * sum(metric.axis_g(i) * gs[i] ** 2 for i in range(grid.dim))
        q_a = -0.5 * hbar**2 * sum(metric.axis_g(i) * lap[i] for i in range(grid.dim))
        p = np.where(sl.mask, 1.0, sl.density)
        q_p = -0.25 * hbar**2 * sum(
            metric.axis_g(i) * (derivative(sl.density, grid, i, 2) / p
                                - 0.5 * (derivative(sl.density, grid, i, 1) / p) ** 2)
            for i in range(grid.dim))
        u = potential.on_grid(grid, sl.t)
        region = evaluation_region(sl.density, sl.mask, grid, core_mass)
        res_a.append(sl.dsdt + kinetic + u + q_a)
        res_p.append(sl.dsdt + kinetic + u + q_p)
        if region.any():
            form_gap = max(form_gap, float(np.max(np.abs(q_a - q_p)[region])))
        regions.append(region)
        weights.append(sl.density)
        masks.append(sl.mask)
    l2, linf = _accumulate(res_a, regions, weights, grid)
    l2p, linfp = _accumulate(res_p, regions, weights, grid)
    return ResidualReport("quantum_hamilton_jacobi", l2, linf, _masked_fraction(masks), "density",
                          {"density_form_l2": l2p, "density_form_linf": linfp,
                           "q_form_gap": form_gap, "core_mass": core_mass, "slices": len(regions)})


@dataclass(frozen=True)
class EnergyBalance:
    """Q from the energy balance at each interior stored time, next to the direct Q."""

    times: np.ndarray
    q_balance: np.ndarray
    q_direct: np.ndarray
    masks: np.ndarray
    kinetic_identity_residual: float

    def field(self, k: int, grid: Grid) -> RealField:
        return RealField(grid, np.where(self.masks[k], np.nan, self.q_balance[k]), "energy", self.masks[k])

    def disagreement(self, densities: np.ndarray, grid: Grid, core_mass: float = 0.8) -> float:
        """Largest pointwise ``|Q_balance - Q_direct|`` on the densest ``core_mass``."""
        worst = 0.0
        for qb, qd, m, d in zip(self.q_balance, self.q_direct, self.masks, densities):
            reg = evaluation_region(d, m, grid, core_mass)
            if reg.any():
                worst = max(worst, float(np.max(np.abs(qb - qd)[reg])))
        return worst


def q_from_energy_balance(series: FieldSeries, potential: Potential, metric: Metric,
                          core_mass: float = 1.0) -> EnergyBalance:
    """``Q = -dS/dt - U - (1/2) sum g_i (dS/dq_i)^2`` from the stored slices.

    Also checks the kinetic identity

        (1/2) g (dS)^2 = -(hbar^2/2) g (d psi/psi)^2 + (hbar^2/2) g (dA/A)^2
                         + i hbar g (dA/A) dS

    with ``dA`` differentiated from the amplitude itself; the reported
    residual is its largest violation over the evaluated nodes.
    """
    grid, hbar = series.grid, series.hbar
    times, qb, qd, masks = [], [], [], []
    ident = 0.0
    for sl in _slices(series):
        ga, lap, gs, d1, _ = _amplitude_terms(sl.psi, grid, sl.mask)
        ds = [hbar * s for s in gs]
        kinetic = 0.5 * sum(metric.axis_g(i) * ds[i] ** 2 for i in range(grid.dim))
        u = potential.on_grid(grid, sl.t)
        qb.append(-sl.dsdt - u - kinetic)
        qd.append(-0.5 * hbar**2 * sum(metric.axis_g(i) * lap[i] for i in range(grid.dim)))
        amp = np.abs(sl.psi)
        safe = np.where(sl.mask, 1.0, amp)
        rhs = 0.0
        for i in range(grid.dim):
            da = derivative(amp, grid, i, 1) / safe
            rhs = rhs + metric.axis_g(i) * (-0.5 * hbar**2 * d1[i] ** 2 + 0.5 * hbar**2 * da**2
                                            + 1j * hbar * da * ds[i])
        region = evaluation_region(sl.density, sl.mask, grid, core_mass)
        if region.any():
            ident = max(ident, float(np.max(np.abs(kinetic - rhs)[region])))
        times.append(sl.t)
        masks.append(sl.mask)
    return EnergyBalance(np.array(times), np.array(qb), np.array(qd), np.array(masks), ident)


def chetaev_condition_psi(psi: ComplexField, metric: Metric, hbar: float = 1.0,
                          core_mass: float = 1.0, threshold: float = NODE_THRESHOLD) -> ResidualReport:
    """Evaluate ``sum_i d/dq_i [g_i (d_i psi/psi - d_i A/A)]`` off the node mask.

    The expression is expanded as ``g (d^2psi/psi - (dpsi/psi)^2 - d^2A/A +
    (dA/A)^2)`` with the amplitude differentiated directly.  It is compared
    with ``(i/hbar) L`` where ``L = sum d/dq_i(g_i dS/dq_i)`` is taken from the
    unwrapped action on three-point stencils; ``details["identity_residual"]``
    is the largest difference.  Near the mask edge both routes lose digits to
    round-off in ``1/psi``; ``threshold`` raises the mask to stay clear of it.
    """
    grid = psi.grid
    mask = psi.node_mask(threshold)
    if mask.all():
        raise GridError("every node is masked")
    v = psi.values
    amp = np.abs(v)
    safe_a = np.where(mask, 1.0, amp)
    d1, d2 = log_derivatives(v, grid, mask)
    expr = 0.0
    for i in range(grid.dim):
        a1 = derivative(amp, grid, i, 1) / safe_a
        a2 = derivative(amp, grid, i, 2) / safe_a
        expr = expr + metric.axis_g(i) * (d2[i] - d1[i] ** 2 - a2 + a1**2)
    polar = decompose(psi, hbar, threshold)
    lfun = action_divergence(polar.action, ~polar.node_mask, grid, metric)
    region = evaluation_region(amp**2, mask, grid, core_mass) & np.isfinite(lfun)
    diff = np.abs(expr - 1j * lfun / hbar)
    ident = float(np.max(diff[region])) if region.any() else 0.0
    l2, linf = _accumulate([expr], [region], [amp**2], grid)
    return ResidualReport("chetaev_condition_psi", l2, linf, float(mask.mean()), "density",
                          {"identity_residual": ident, "L_max": float(np.max(np.abs(lfun[region]))) if region.any() else 0.0,
                           "core_mass": core_mass, "evaluated_nodes": int(region.sum())})
