"""Analytic classical actions, the stability functional L and its exponential integral.

All actions are one-dimensional complete integrals of the Hamilton-Jacobi
equation ``S_t + g S_q^2 / 2 + U = 0``.  Each carries the potential it solves
and a validity domain; evaluators raise outside it.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicHermiteSpline

from .classical import (HamiltonianSystem, Trajectory, integrate_variational, linear_fit)
from .grid import ClassicalState, Metric, PolarField, RealField, VariationalState
from .polar import action_divergence
from .potentials import Potential

ACTION_KINDS = ("plane", "focusing", "oscillator", "hyperbolic")
HJ_TOL = 1e-8
TURNING_CLIP = 0.95


class ValidityError(ValueError):
    pass


@dataclass(frozen=True)
class ActionField:
    """Catalog action ``S(q, t)``.

    ``plane``       S = a q - a^2 t / 2m                         (free particle)
    ``focusing``    S = m (q - b)^2 / 2t, t > 0                  (free particle)
    ``oscillator``  S = -E t + int_0^q sqrt(2m(E - m w^2 q^2/2)) (harmonic, |q| <= 0.95 q_turn)
    ``hyperbolic``  S = m c q^2 / 2                              (inverted harmonic, w = c; L = c)

    ``param`` is a, b, E or c respectively.
    """

    kind: str
    param: float = 1.0
    mass: float = 1.0
    omega: float = 1.0

    def __post_init__(self):
        if self.kind not in ACTION_KINDS:
            raise ValueError(f"unknown action {self.kind!r}; choose from {', '.join(ACTION_KINDS)}")
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if self.kind == "oscillator" and not (self.param > 0 and self.omega > 0):
            raise ValueError("oscillator action needs E > 0 and omega > 0")
        if self.kind == "hyperbolic" and self.param <= 0:
            raise ValueError("hyperbolic action needs c > 0")
        res = self.hj_residual()
        if res > HJ_TOL:
            raise ValueError(f"action {self.kind} fails its Hamilton-Jacobi self-test ({res:.2e})")

    # -- catalog data -------------------------------------------------------

    @property
    def potential(self) -> Potential:
        if self.kind == "oscillator":
            return Potential("harmonic", omega=self.omega, mass=self.mass)
        if self.kind == "hyperbolic":
            return Potential("inverted_harmonic", omega=self.param, mass=self.mass)
        return Potential("free", mass=self.mass)

    @property
    def turning_point(self) -> float:
        if self.kind != "oscillator":
            return np.inf
        return float(np.sqrt(2 * self.param / self.mass) / self.omega)

    def valid(self, q, t) -> np.ndarray:
        q, t = np.broadcast_arrays(np.asarray(q, float), np.asarray(t, float))
        ok = np.isfinite(q) & np.isfinite(t)
        if self.kind == "focusing":
            ok &= t > 0
        elif self.kind == "oscillator":
            ok &= np.abs(q) <= TURNING_CLIP * self.turning_point
        return ok

    def _check(self, q, t):
        if not np.all(self.valid(q, t)):
            raise ValidityError(f"{self.kind} action queried outside its validity domain")
        return np.asarray(q, float), np.asarray(t, float)

    # -- evaluators ---------------------------------------------------------

    def S(self, q, t):
        q, t = self._check(q, t)
        m, a = self.mass, self.param
        if self.kind == "plane":
            return a * q - a**2 * t / (2 * m)
        if self.kind == "focusing":
            return m * (q - a) ** 2 / (2 * t)
        if self.kind == "hyperbolic":
            return m * a * q**2 / 2 + 0 * t
        qt = self.turning_point
        r = np.sqrt(qt**2 - q**2)
        return -a * t + 0.5 * m * self.omega * (q * r + qt**2 * np.arcsin(q / qt))

    def S_q(self, q, t):
        q, t = self._check(q, t)
        m, a = self.mass, self.param
        if self.kind == "plane":
            return a + 0 * q + 0 * t
        if self.kind == "focusing":
            return m * (q - a) / t
        if self.kind == "hyperbolic":
            return m * a * q + 0 * t
        return m * self.omega * np.sqrt(self.turning_point**2 - q**2) + 0 * t

    def S_qq(self, q, t):
        q, t = self._check(q, t)
        m, a = self.mass, self.param
        if self.kind == "plane":
            return 0 * q + 0 * t
        if self.kind == "focusing":
            return m / t + 0 * q
        if self.kind == "hyperbolic":
            return m * a + 0 * q + 0 * t
        return -m * self.omega * q / np.sqrt(self.turning_point**2 - q**2) + 0 * t

    def S_t(self, q, t):
        q, t = self._check(q, t)
        m, a = self.mass, self.param
        if self.kind == "plane":
            return -a**2 / (2 * m) + 0 * q + 0 * t
        if self.kind == "focusing":
            return -m * (q - a) ** 2 / (2 * t**2)
        if self.kind == "hyperbolic":
            return 0 * q + 0 * t
        return -a + 0 * q + 0 * t

    def hj_residual(self, q=None, t=None) -> float:
        """Largest ``|S_t + S_q^2/2m + U|`` on sample points (default: a spread inside the domain)."""
        if q is None:
            span = TURNING_CLIP * self.turning_point if self.kind == "oscillator" else 3.0
            q = np.linspace(-span, span, 41)
        if t is None:
            t = np.array([0.5, 1.0, 2.5])
        qq, tt = np.meshgrid(np.asarray(q, float), np.asarray(t, float))
        u = self.potential(qq[..., None], 0.0)
        res = self.S_t(qq, tt) + self.S_q(qq, tt) ** 2 / (2 * self.mass) + u
        scale = 1 + np.abs(self.S_t(qq, tt))
        return float(np.max(np.abs(res) / scale))

    def base_state(self, q0: float, t0: float = 0.0) -> ClassicalState:
        """Phase-space point on the Lagrangian manifold ``p = dS/dq``."""
        return ClassicalState(np.array([q0]), np.array([float(self.S_q(q0, t0))]), t0)

    def system(self) -> HamiltonianSystem:
        return HamiltonianSystem(self.potential, Metric((self.mass,)), 1)


def _g(action: ActionField, metric: Metric) -> float:
    g = metric.axis_g(0)
    if not np.isclose(g, 1 / action.mass, rtol=1e-12):
        raise ValueError(f"metric g = {g} does not match the action's mass {action.mass}")
    return g


def L_functional(source, metric: Metric, where=None):
    """Stability functional ``L = sum_i d/dq_i (g_i dS/dq_i)``.

    ``source`` is an :class:`ActionField` (then ``where`` is a pair ``(q, t)``
    and exact second derivatives are used) or a :class:`PolarField` (then
    ``where`` is ignored and ``L`` is returned as a :class:`RealField` whose
    mask covers nodes without a full unmasked stencil).
    """
    if isinstance(source, ActionField):
        if where is None:
            raise ValueError("analytic L needs query points (q, t)")
        q, t = where
        return _g(source, metric) * source.S_qq(q, t)
    if isinstance(source, PolarField):
        vals = action_divergence(source.action, ~source.node_mask, source.grid, metric)
        bad = ~np.isfinite(vals)
        if bad.all():
            raise ValueError("no node has a complete unmasked stencil")
        return RealField(source.grid, np.where(bad, 0.0, vals), "rate", bad)
    raise TypeError("source must be an ActionField or a PolarField")


def _check_base(action: ActionField, base: Trajectory):
    if base.q.shape[1] != 1:
        raise ValueError("actions are one-dimensional")
    ok = action.valid(base.q[:, 0], base.t)
    return ok


@dataclass(frozen=True)
class ReducedVariational:
    t: np.ndarray
    xi: np.ndarray
    eta: np.ndarray  # rebuilt from the Hessian constraint
    full_xi: np.ndarray
    full_eta: np.ndarray

    @property
    def deviation(self) -> float:
        """Largest gap to the full linearized flow started on the constraint surface."""
        return float(max(np.max(np.abs(self.xi - self.full_xi)), np.max(np.abs(self.eta - self.full_eta))))


def reduced_variational(action: ActionField, metric: Metric, base: Trajectory, xi0: float
                        ) -> ReducedVariational:
    """Integrate ``dxi/dt = d/dq(g dS/dq) xi`` along ``base`` with RK4.

    The base position between stored steps comes from a cubic Hermite spline
    through ``(q, g p)``.  ``eta = S_qq xi`` is rebuilt afterwards and compared
    with the full variational flow from ``(xi0, S_qq xi0)``.
    """
    g = _g(action, metric)
    ok = _check_base(action, base)
    if not ok.all():
        k = int(np.flatnonzero(~ok)[0])
        raise ValidityError(f"base leaves the {action.kind} action's validity domain at t = {base.t[k]:.6g}")
    t = base.t
    q = CubicHermiteSpline(t, base.q[:, 0], g * base.p[:, 0])
    # the equation is linear: tabulate its coefficient at nodes and midpoints
    tm = 0.5 * (t[:-1] + t[1:])
    c_node = g * action.S_qq(base.q[:, 0], t)
    c_mid = g * action.S_qq(q(tm), tm)
    xi = np.empty(len(t))
    xi[0] = xi0
    for k in range(len(t) - 1):
        h = t[k + 1] - t[k]
        x = xi[k]
        k1 = c_node[k] * x
        k2 = c_mid[k] * (x + h / 2 * k1)
        k3 = c_mid[k] * (x + h / 2 * k2)
        k4 = c_node[k + 1] * (x + h * k3)
        xi[k + 1] = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    eta = action.S_qq(base.q[:, 0], t) * xi
    v0 = VariationalState(np.array([xi0]), np.array([eta[0]]), float(t[0]))
    full = integrate_variational(action.system(), base, v0)
    return ReducedVariational(t.copy(), xi, eta, full.xi[:, 0], full.eta[:, 0])


@dataclass(frozen=True)
class ExpIntegralReport:
    times: np.ndarray = field(repr=False)
    log_f: np.ndarray = field(repr=False)  # int_{t0}^t L dt'
    exponent: float
    fit_residual: float
    fit_window: tuple
    tolerance: float
    truncated_at: float | None

    @property
    def characteristic_number(self) -> float:
        return -self.exponent

    @property
    def stable(self) -> bool:
        return abs(self.exponent) <= self.tolerance

    def as_dict(self) -> dict:
        return {"exponent": self.exponent, "characteristic_number": self.characteristic_number,
                "fit_residual": self.fit_residual, "fit_window": list(self.fit_window),
                "tolerance": self.tolerance, "truncated_at": self.truncated_at, "stable": self.stable}


def exp_integral_characteristic(action: ActionField, metric: Metric, base: Trajectory,
                                fit_window: float = 0.5, tolerance: float = 1e-3) -> ExpIntegralReport:
    """Exponent of ``F(t) = exp int_{t0}^t L dt'`` along ``base``.

    ``ln F`` is accumulated by Simpson quadrature of ``L(q(t), t)`` and its
    growth rate is the least-squares slope over the last ``fit_window``.  If
    the base leaves the validity domain (a turning point, where ``L``
    diverges) the run is cut at the last valid step and the cut is reported.
    """
    g = _g(action, metric)
    ok = _check_base(action, base)
    cut = None
    n = len(base.t)
    if not ok.all():
        n = int(np.flatnonzero(~ok)[0])
        cut = float(base.t[n]) if n < len(base.t) else None
        if n < 3:
            raise ValidityError("base leaves the validity domain before three steps")
    t = base.t[:n]
    lvals = g * action.S_qq(base.q[:n, 0], t)
    log_f = cumulative_simpson(lvals, x=t, initial=0.0)
    slope, resid, t0, t1 = linear_fit(t, log_f, fit_window)
    return ExpIntegralReport(t.copy(), log_f, slope, resid, (t0, t1), tolerance, cut)
