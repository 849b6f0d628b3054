"""Hamiltonian flow, Poincare variational equations and characteristic numbers.

The flow is a fourth-order Yoshida composition of drift-kick-drift leapfrog.
Variational solutions are propagated with the exact linearization of the same
map, so the symplectic pairing of two solutions is conserved to round-off.

Exponent convention: ``Lambda`` is the modern Lyapunov exponent (growth
rate of ``ln|u|``); Lyapunov's characteristic number is ``lambda = -Lambda``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import ClassicalState, Metric, VariationalState
from .potentials import Potential

_CBRT2 = 2.0 ** (1.0 / 3.0)
YOSHIDA = (1 / (2 - _CBRT2), -_CBRT2 / (2 - _CBRT2), 1 / (2 - _CBRT2))
EXPONENT_MAPPING = "lambda = -Lambda (characteristic number = minus modern exponent)"


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class HamiltonianSystem:
    """``H = 1/2 sum g_i p_i^2 + U(q, t)`` with a constant diagonal metric."""

    potential: Potential
    metric: Metric = Metric()
    n: int = 1

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValueError("only 1 or 2 degrees of freedom are supported")

    @property
    def g(self) -> np.ndarray:
        return np.array([self.metric.axis_g(i) for i in range(self.n)])

    def energy(self, q, p, t: float = 0.0):
        q = np.asarray(q, float)
        p = np.asarray(p, float)
        return 0.5 * np.sum(self.g * p**2, axis=-1) + self.potential(q, t)

    def grad_u(self, q, t: float = 0.0) -> np.ndarray:
        return self.potential.gradient(q, t)

    def hess_u(self, q, t: float = 0.0) -> np.ndarray:
        return self.potential.hessian(q, t)


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    q: np.ndarray  # (n_times, n)
    p: np.ndarray
    energy: np.ndarray

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def state(self, k: int) -> ClassicalState:
        return ClassicalState(self.q[k], self.p[k], float(self.t[k]))


@dataclass(frozen=True)
class VariationalTrajectory:
    t: np.ndarray
    xi: np.ndarray  # (n_times, n)
    eta: np.ndarray

    @property
    def norm(self) -> np.ndarray:
        return np.sqrt(np.sum(self.xi**2, axis=1) + np.sum(self.eta**2, axis=1))


def _flow_step(sys: HamiltonianSystem, q, p, t, dt, tangents=None):
    """One Yoshida step of the flow and, optionally, of tangent vectors (xi, eta) of shape (m, n)."""
    g = sys.g
    for w in YOSHIDA:
        h = w * dt
        q = q + 0.5 * h * g * p
        tm = t + 0.5 * h
        if tangents is not None:
            xi, eta = tangents
            xi = xi + 0.5 * h * g * eta
            eta = eta - h * eta_kick(sys, q, tm, xi)
            xi = xi + 0.5 * h * g * eta
            tangents = (xi, eta)
        p = p - h * sys.grad_u(q, tm)
        q = q + 0.5 * h * g * p
        t = t + h
    return q, p, t, tangents


def eta_kick(sys, q, t, xi):
    return xi @ sys.hess_u(q, t).T


def integrate_hamiltonian(sys: HamiltonianSystem, s0: ClassicalState, dt: float,
                          t_final: float) -> Trajectory:
    """Integrate Hamilton's equations from ``s0.t`` to ``t_final``, storing every step."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if s0.q.size != sys.n:
        raise ValueError(f"state has {s0.q.size} coordinates, system has {sys.n}")
    n_steps = int(np.ceil((t_final - s0.t) / dt - 1e-9))
    if n_steps < 1:
        raise ValueError("t_final must exceed the initial time")
    h = (t_final - s0.t) / n_steps
    ts = s0.t + h * np.arange(n_steps + 1)
    qs = np.empty((n_steps + 1, sys.n))
    ps = np.empty((n_steps + 1, sys.n))
    q, p = np.array(s0.q), np.array(s0.p)
    qs[0], ps[0] = q, p
    for k in range(n_steps):
        q, p, _, _ = _flow_step(sys, q, p, ts[k], h)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise IntegrationError(f"non-finite state at step {k + 1}")
        qs[k + 1], ps[k + 1] = q, p
    return Trajectory(ts, qs, ps, sys.energy(qs, ps, 0.0) if not sys.potential.time_dependent
                      else np.array([sys.energy(qq, pp, tt) for qq, pp, tt in zip(qs, ps, ts)]))


def _tangent_flow(sys: HamiltonianSystem, base: Trajectory, xi0: np.ndarray, eta0: np.ndarray,
                  renormalize=None):
    """Propagate m tangent vectors along ``base``; yields (k, xi, eta) after each step."""
    xi, eta = np.array(xi0, float), np.array(eta0, float)
    h = base.dt
    for k in range(len(base.t) - 1):
        _, _, _, (xi, eta) = _flow_step(sys, base.q[k], base.p[k], base.t[k], h, (xi, eta))
        if renormalize is not None:
            xi, eta = renormalize(k + 1, xi, eta)
        yield k + 1, xi, eta


def integrate_variational(sys: HamiltonianSystem, base: Trajectory, v0: VariationalState
                          ) -> VariationalTrajectory:
    """Solve the linearized equations ``dxi/dt = g eta, deta/dt = -hess U xi`` along ``base``."""
    if not np.isclose(v0.t, base.t[0]):
        raise ValueError(f"variational state at t={v0.t} does not start the base trajectory (t={base.t[0]})")
    if v0.xi.size != sys.n:
        raise ValueError("variational state dimension does not match the system")
    xis = np.empty((len(base.t), sys.n))
    etas = np.empty_like(xis)
    xis[0], etas[0] = v0.xi, v0.eta
    for k, xi, eta in _tangent_flow(sys, base, v0.xi[None], v0.eta[None]):
        xis[k], etas[k] = xi[0], eta[0]
    return VariationalTrajectory(base.t.copy(), xis, etas)


def symplectic_pairing(xi_u, eta_u, xi_v, eta_v):
    return np.sum(xi_u * eta_v - eta_u * xi_v, axis=-1)


@dataclass(frozen=True)
class PoincareInvariant:
    t: np.ndarray
    c: np.ndarray

    @property
    def drift(self) -> float:
        return float(np.max(np.abs(self.c - self.c[0])))


def poincare_invariant(u: VariationalTrajectory, v: VariationalTrajectory) -> PoincareInvariant:
    """``C(t) = sum_s (xi_s eta'_s - eta_s xi'_s)`` for two variational solutions."""
    if u.xi.shape != v.xi.shape or not np.allclose(u.t, v.t):
        raise ValueError("variational trajectories do not share times")
    return PoincareInvariant(u.t, symplectic_pairing(u.xi, u.eta, v.xi, v.eta))


# ---------------------------------------------------------------------------
# exponents

@dataclass(frozen=True)
class ExponentReport:
    modern: np.ndarray
    characteristic: np.ndarray  # characteristic numbers, minus the modern exponents
    fit_window: tuple
    fit_residual: np.ndarray
    tolerance: float
    pair_sums: np.ndarray
    pairing_determinant: float
    log_norms: np.ndarray = field(repr=False)
    times: np.ndarray = field(repr=False)
    mapping: str = EXPONENT_MAPPING

    @property
    def stable(self) -> bool:
        """All characteristic numbers vanish within tolerance."""
        return bool(np.all(np.abs(self.modern) <= self.tolerance))

    @property
    def pair_inequality_holds(self) -> bool:
        """``lambda + lambda' <= 0`` for every paired duo, within tolerance."""
        return bool(np.all(self.pair_sums <= self.tolerance))

    def as_dict(self) -> dict:
        return {"modern_exponents": self.modern.tolist(), "characteristic_numbers": self.characteristic.tolist(),
                "mapping": self.mapping, "fit_window": list(self.fit_window),
                "fit_residual": self.fit_residual.tolist(), "tolerance": self.tolerance,
                "pair_sums": self.pair_sums.tolist(), "pairing_determinant": self.pairing_determinant,
                "stable": self.stable, "pair_inequality_holds": self.pair_inequality_holds}


def linear_fit(t: np.ndarray, y: np.ndarray, window: float):
    """Least-squares slope of ``y`` over the last ``window`` fraction of ``t``; (slope, rms residual, t0, t1)."""
    if not 0 < window <= 1:
        raise ValueError("fit window must lie in (0, 1]")
    t0 = t[-1] - window * (t[-1] - t[0])
    sel = t >= t0 - 1e-12
    if sel.sum() < 3:
        raise ValueError("fit window holds fewer than 3 samples")
    coef = np.polyfit(t[sel], y[sel], 1)
    resid = y[sel] - np.polyval(coef, t[sel])
    return float(coef[0]), float(np.sqrt(np.mean(resid**2))), float(t[sel][0]), float(t[-1])


def characteristic_numbers(sys: HamiltonianSystem, base: Trajectory, basis, fit_window: float = 0.5,
                           tolerance: float = 1e-3, renorm_threshold: float = 1e4) -> ExponentReport:
    """Lyapunov exponents of a basis of 2n variational solutions.

    The basis is carried by the tangent map and Gram-Schmidt orthogonalized
    whenever a vector norm exceeds ``renorm_threshold``; ``ln|u_k|`` is the
    accumulated log of the k-th Gram-Schmidt factor.  The threshold stays
    small because the contracting factor of two nearly parallel vectors of
    norm ``u`` keeps only about ``eps * u**2`` relative accuracy.  Exponents are the
    least-squares slopes over the last ``fit_window`` of the run.
    """
    basis = list(basis)
    m = 2 * sys.n
    if len(basis) != m:
        raise ValueError(f"need {m} basis solutions, got {len(basis)}")
    xi0 = np.array([b.xi for b in basis])
    eta0 = np.array([b.eta for b in basis])
    pairing = symplectic_pairing(xi0[:, None, :], eta0[:, None, :], xi0[None, :, :], eta0[None, :, :])
    det = float(np.linalg.det(pairing))
    if abs(det) < 1e-12 * np.prod(np.linalg.norm(np.hstack([xi0, eta0]), axis=1)) ** 2:
        raise ValueError("basis is degenerate: the pairing matrix is singular")
    if fit_window * (base.t[-1] - base.t[0]) > base.t[-1] - base.t[0] + 1e-12:
        raise ValueError("fit window longer than the trajectory")

    acc = np.zeros(m)

    def gram_schmidt(xi, eta):
        mat = np.hstack([xi, eta]).T  # columns are solutions
        q, r = np.linalg.qr(mat)
        s = np.sign(np.diag(r))
        s[s == 0] = 1
        return q * s, np.abs(np.diag(r))

    def renorm(k, xi, eta):
        if np.max(np.linalg.norm(np.hstack([xi, eta]), axis=1)) > renorm_threshold:
            q, d = gram_schmidt(xi, eta)
            acc[:] += np.log(d)
            xi, eta = q.T[:, :sys.n], q.T[:, sys.n:]
        return xi, eta

    logs = np.empty((len(base.t), m))
    logs[0] = np.log(gram_schmidt(xi0, eta0)[1])
    for k, xi, eta in _tangent_flow(sys, base, xi0, eta0, renorm):
        logs[k] = acc + np.log(gram_schmidt(xi, eta)[1])

    fits = [linear_fit(base.t, logs[:, j], fit_window) for j in range(m)]
    modern = np.array([f[0] for f in fits])
    resid = np.array([f[1] for f in fits])
    characteristic = -modern
    srt = np.sort(characteristic)
    pair_sums = np.array([srt[i] + srt[m - 1 - i] for i in range(m // 2)])
    return ExponentReport(modern, characteristic, (fits[0][2], fits[0][3]), resid, tolerance, pair_sums, det,
                          logs, base.t.copy())


def canonical_basis(n: int, t0: float = 0.0) -> list[VariationalState]:
    """Unit perturbations of each coordinate, then of each momentum."""
    out = []
    for j in range(2 * n):
        v = np.zeros(2 * n)
        v[j] = 1.0
        out.append(VariationalState(v[:n], v[n:], t0))
    return out
