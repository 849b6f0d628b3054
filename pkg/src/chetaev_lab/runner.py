"""Wire a :class:`ScenarioConfig` through the modules and persist everything.

Numeric series go to CSV, reports and the manifest to JSON with sorted keys.
Data files carry no timestamps, so identical config, seed and version give
byte-identical data; timestamps live only in ``manifest.json``.
"""
from __future__ import annotations

import csv
import datetime as _dt
import json
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from . import states
from .actions import ActionField, L_functional, exp_integral_characteristic, reduced_variational
from .classical import (EXPONENT_MAPPING, HamiltonianSystem, canonical_basis, characteristic_numbers,
                        integrate_hamiltonian, integrate_variational, poincare_invariant)
from .config import ScenarioConfig
from .dynamics import (EvolverConfig, box_artifact_check, energy, evolve, solve_stationary)
from .grid import BOX, ClassicalState, Grid, Metric
from .observables import moments, position_moments, verify_uncertainty
from .polar import (bohm_velocity, chetaev_condition_psi, continuity_residual, decompose,
                    evaluation_region, perturbation_action, q_from_energy_balance, qhj_residual, quantum_potential)
from .potentials import Potential
from .trajectories import equivariance_check, integrate_trajectories

EVOLVED_OPS = {"energy_balance", "continuity", "qhj", "trajectories", "equivariance", "dispersion",
               "plane_wave_exact", "norm"}
CLASSICAL_OPS = {"classical_flow", "variational", "poincare", "exponents"}
ACTION_OPS = {"action_L", "reduced_variational", "exp_integral"}
CHETAEV_MASK = 1e-6      # node mask for the psi-form stability identity (round-off floor)
TRAJ_CSV_LIMIT = 50      # trajectories written to trajectories.csv
EQUIVARIANCE_GROWTH = 0.01
REDUCED_TOL = 1e-4
RATE_REL_TOL = 0.01


class RunError(RuntimeError):
    def __init__(self, step: str, cause: BaseException, manifest_path: str):
        super().__init__(f"step {step!r} failed: {cause}")
        self.step = step
        self.cause = cause
        self.manifest_path = manifest_path


# -- writers -------------------------------------------------------------------

def _num(v):
    if isinstance(v, (np.floating, float)):
        return repr(float(v))
    if isinstance(v, (np.integer, int)) and not isinstance(v, bool):
        return str(int(v))
    return v


def write_csv(path: str, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_num(v) for v in r])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else repr(f)
    return obj


def write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(obj), fh, sort_keys=True, indent=2, ensure_ascii=False)
        fh.write("\n")


# -- run state -------------------------------------------------------------------

@dataclass
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool
    relation: str = "<="

    def as_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "tolerance": self.tolerance,
                "passed": self.passed, "relation": self.relation}


def _le(name, value, tol) -> Check:
    value = float(value)
    return Check(name, value, float(tol), bool(value <= tol))


@dataclass
class StepRecord:
    name: str
    status: str = "pending"
    outputs: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    note: str = ""
    seconds: float = 0.0

    def as_dict(self) -> dict:
        return {"name": self.name, "status": self.status, "outputs": self.outputs,
                "checks": [c.as_dict() for c in self.checks], "note": self.note}


@dataclass
class RunManifest:
    scenario: str
    config: str
    seed: int
    version: str
    started: str
    finished: str = ""
    status: str = "running"
    failed_step: str | None = None
    error: str | None = None
    steps: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def as_dict(self) -> dict:
        return {"artifact": "chetaev-lab", "scenario": self.scenario, "config": self.config,
                "seed": self.seed, "version": self.version, "started": self.started,
                "finished": self.finished, "status": self.status, "failed_step": self.failed_step,
                "error": self.error, "exponent_convention": EXPONENT_MAPPING,
                "steps": [s.as_dict() for s in self.steps]}


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


class _Run:
    """Holds the objects built once per run and shared by the analysis steps."""

    def __init__(self, cfg: ScenarioConfig, out_dir: str):
        self.cfg = cfg
        self.out = out_dir
        s, g = cfg.system, cfg.grid
        dim = g["dim"]

        def axis(v):
            return tuple(v) * dim if len(v) == 1 else tuple(v)

        self.grid = Grid(axis(g["lower"]), axis(g["upper"]), axis(g["points"]), g["boundary"])
        self.metric = Metric.for_grid(self.grid, s["mass"])
        self.mass = self.metric.masses[0]
        self.potential = Potential(s["potential"], omega=s["omega"], force=s["force"], mass=s["mass"])
        self.hbar = s["hbar"]
        self.psi0 = None
        self.state_energy = None
        self.series = None
        self.base = None
        self.basis_solutions = None
        self.action = None
        self.action_base = None
        self.formats = set(cfg.output["formats"])

    def path(self, name: str) -> str:
        return os.path.join(self.out, name)

    def csv(self, rec: StepRecord, name: str, header, rows):
        if "csv" not in self.formats:
            return
        write_csv(self.path(name), header, rows)
        rec.outputs.append(name)

    def json(self, rec: StepRecord, name: str, obj):
        if "json" not in self.formats:
            return
        write_json(self.path(name), obj)
        rec.outputs.append(name)

    def coords(self):
        return [m.ravel() for m in self.grid.mesh()]

    def coord_names(self):
        return ["x", "y"][: self.grid.dim]


# -- setup steps ------------------------------------------------------------------

def _box_grid(grid: Grid) -> Grid:
    return grid if not grid.periodic else Grid(grid.lower, grid.upper, grid.points, BOX)


def _initial_state(run: _Run, rec: StepRecord):
    i, s = run.cfg.initial, run.cfg.system
    grid, hbar = run.grid, run.hbar
    fam = i["family"]
    if fam == "gaussian":
        psi = states.gaussian(grid, i["width"], i["center"], i["momentum"], hbar)
    elif fam == "eigenstate":
        idx = i["index"] * grid.dim if len(i["index"]) == 1 else i["index"]
        psi = states.oscillator_eigenstate(grid, idx, s["omega"], s["mass"], hbar)
        run.state_energy = states.oscillator_energy(idx, s["omega"], hbar)
    elif fam == "stationary":
        n = int(i["index"][0])
        sol = solve_stationary(run.potential, run.metric, grid, n + 1, hbar)
        psi = sol.states[n]
        run.state_energy = float(sol.energies[n])
    elif fam == "coherent":
        psi = states.coherent_state(grid, i["amplitude"], 0.0, s["omega"], run.mass, hbar)
    elif fam == "free_gaussian":
        psi = states.free_gaussian(grid, i["width"][0], 0.0, i["center"][0], i["momentum"][0], run.mass, hbar)
    else:
        psi = states.plane_wave(grid, i["mode"], hbar)
    run.psi0 = psi.normalized()
    every = run.cfg.output["snapshot_every"]
    if every == 0:
        _snapshot(run, rec, run.psi0, "initial_field.csv")
    rec.note = f"family {fam}, norm^2 before normalization {psi.norm_squared():.15g}"


def _snapshot(run: _Run, rec: StepRecord, psi, name: str):
    c = run.coords()
    v = psi.values.ravel()
    rows = zip(range(v.size), *c, v.real, v.imag)
    run.csv(rec, name, ["node"] + run.coord_names() + ["re_psi", "im_psi"], rows)


def _evolution(run: _Run, rec: StepRecord):
    e = run.cfg.evolution
    cfg = EvolverConfig(e["dt"], e["t_final"], run.cfg.scheme, e["store_every"])
    run.series = evolve(run.psi0, run.potential, run.metric, cfg, run.hbar)
    every = run.cfg.output["snapshot_every"]
    if every:
        for k in range(0, len(run.series), every):
            _snapshot(run, rec, run.series.field(k), f"field_{k:05d}.csv")
    norms = [run.series.field(k).norm_squared() for k in range(len(run.series))]
    energies = [energy(run.series.field(k), run.potential, run.metric, run.hbar)
                for k in range(0, len(run.series), max(1, len(run.series) // 50))]
    rec.note = f"{cfg.n_steps} steps of {cfg.step:.6g} with {cfg.scheme}; {len(run.series)} slices stored"
    run.norm_drift = float(np.max(np.abs(np.array(norms) - 1)))
    run.energy_drift = float(np.max(np.abs(np.array(energies) - energies[0])))


def _classical_base(run: _Run, rec: StepRecord):
    i, e = run.cfg.initial, run.cfg.evolution
    n = run.grid.dim
    q0 = np.array(i["q0"] * n if len(i["q0"]) == 1 else i["q0"], float)
    p0 = np.array(i["p0"] * n if len(i["p0"]) == 1 else i["p0"], float)
    sys = HamiltonianSystem(run.potential, run.metric, n)
    s0 = ClassicalState(q0, p0, i["t0"])
    run.system = sys
    run.base = integrate_hamiltonian(sys, s0, e["classical_dt"], i["t0"] + e["classical_t_final"])
    rec.note = f"{len(run.base.t) - 1} symplectic steps"


def _action_base(run: _Run, rec: StepRecord):
    a, i, e = run.cfg.analysis, run.cfg.initial, run.cfg.evolution
    run.action = ActionField(a["action"], a["action_param"], run.mass, run.cfg.system["omega"])
    s0 = run.action.base_state(float(i["q0"][0]), i["t0"])
    run.action_base = integrate_hamiltonian(run.action.system(), s0, e["classical_dt"],
                                            i["t0"] + e["classical_t_final"])
    rec.note = f"{a['action']} action, base from q0 = {i['q0'][0]} at t0 = {i['t0']}"


# -- analysis steps ------------------------------------------------------------------

def op_spectrum(run: _Run, rec: StepRecord):
    a, s = run.cfg.analysis, run.cfg.system
    grid = _box_grid(run.grid)
    t0 = time.perf_counter()
    sol = solve_stationary(run.potential, run.metric, grid, a["n_states"], run.hbar)
    elapsed = time.perf_counter() - t0
    exact = [None] * len(sol.energies)
    if grid.dim == 1 and s["potential"] == "harmonic":
        exact = [run.hbar * s["omega"] * (n + 0.5) for n in range(len(sol.energies))]
    elif grid.dim == 1 and s["potential"] in ("box_well", "free"):
        length = grid.lengths[0]
        exact = [(run.hbar * np.pi * (n + 1) / length) ** 2 / (2 * run.mass) for n in range(len(sol.energies))]
    rows = [(n, e, r, "" if x is None else x) for n, (e, r, x) in enumerate(zip(sol.energies, sol.residuals, exact))]
    run.csv(rec, "spectrum.csv", ["n", "energy", "residual", "exact"], rows)
    if exact[0] is not None:
        rec.checks.append(_le("max |E_n - exact|", max(abs(e - x) for e, x in zip(sol.energies, exact)),
                              a["tol_spectrum"]))
    rec.note = f"{sol.method}; {elapsed:.2f} s"


def op_box_artifact(run: _Run, rec: StepRecord):
    grid = _box_grid(run.grid)
    rep = box_artifact_check(run.potential, run.metric, grid, run.cfg.analysis["n_states"], run.hbar)
    run.json(rec, "box_artifact.json", {"energies": rep.energies, "energies_doubled": rep.energies_doubled,
                                        "slope": rep.slope, "flags": rep.flags})
    kind = run.cfg.system["potential"]
    if kind in ("inverted_harmonic", "free"):
        n = sum(f == "box-artifact" for f in rep.flags)
        rec.checks.append(Check("levels flagged box-artifact", n, len(rep.flags), n == len(rep.flags), "=="))
    elif kind == "harmonic":
        n = sum(f == "stable" for f in rep.flags)
        rec.checks.append(Check("levels stable under box doubling", n, len(rep.flags), n == len(rep.flags), "=="))


def op_quantum_potential(run: _Run, rec: StepRecord):
    polar = decompose(run.psi0, run.hbar)
    q = quantum_potential(polar, run.metric)
    u = run.potential.on_grid(run.grid)
    qv = np.where(q.mask, np.nan, q.values)
    c = run.coords()
    rows = zip(*c, u.ravel(), qv.ravel(), (u + qv).ravel(), polar.node_mask.ravel().astype(int))
    run.csv(rec, "quantum_potential.csv", run.coord_names() + ["U", "Q", "U_plus_Q", "masked"], rows)
    if run.state_energy is not None:
        fam = run.cfg.initial["family"]
        region = ~q.mask
        if fam == "eigenstate":
            region &= np.all([np.abs(m) <= 4 for m in run.grid.mesh()], axis=0)
        else:
            region &= evaluation_region(np.abs(run.psi0.values) ** 2, q.mask, run.grid,
                                        run.cfg.analysis["core_mass"])
        dev = float(np.max(np.abs((u + q.values - run.state_energy)[region])))
        rec.checks.append(_le("max |U + Q - E|", dev, run.cfg.analysis["tol_stationary"]))
    elif run.cfg.initial["family"] == "plane_wave":
        rec.checks.append(_le("max |Q|", float(np.max(np.abs(q.values[~q.mask]))), run.cfg.analysis["tol_stationary"]))


def op_energy_balance(run: _Run, rec: StepRecord):
    a = run.cfg.analysis
    eb = q_from_energy_balance(run.series, run.potential, run.metric, a["core_mass"])
    dens = np.abs(run.series.values[1:-1]) ** 2
    rows = []
    for k, t in enumerate(eb.times):
        reg = evaluation_region(dens[k], eb.masks[k], run.grid, a["core_mass"])
        rows.append((t, float(np.max(np.abs(eb.q_balance[k] - eb.q_direct[k])[reg])) if reg.any() else 0.0))
    run.csv(rec, "energy_balance.csv", ["t", "max_abs_q_balance_minus_q_direct"], rows)
    dis = eb.disagreement(dens, run.grid, a["core_mass"])
    run.json(rec, "energy_balance.json", {"disagreement": dis, "core_mass": a["core_mass"],
                                          "kinetic_identity_residual": eb.kinetic_identity_residual})
    rec.checks.append(_le("max |Q_balance - Q_direct| on core mass", dis, a["tol_energy_balance"]))
    rec.checks.append(_le("kinetic identity residual", eb.kinetic_identity_residual, 1e-8))


def op_continuity(run: _Run, rec: StepRecord):
    a = run.cfg.analysis
    full, reduced = continuity_residual(run.series, run.metric, a["core_mass"])
    run.json(rec, "continuity.json", {"full": full.as_dict(), "reduced": reduced.as_dict()})
    rec.checks.append(_le("full continuity L2", full.l2, a["tol_continuity"]))
    rec.checks.append(_le("reduced - full - P g lap S", full.details["gap_identity"], 1e-8))


def op_qhj(run: _Run, rec: StepRecord):
    a = run.cfg.analysis
    rep = qhj_residual(run.series, run.potential, run.metric, a["core_mass"])
    run.json(rec, "qhj.json", rep.as_dict())
    rec.checks.append(_le("quantum Hamilton-Jacobi L2", rep.l2, a["tol_qhj"]))


def op_velocity(run: _Run, rec: StepRecord):
    polar = decompose(run.psi0, run.hbar)
    vel = bohm_velocity(polar, run.metric)
    c = run.coords()
    cols = [np.where(v.mask, np.nan, v.values).ravel() for v in vel]
    run.csv(rec, "velocity.csv", run.coord_names() + [f"v_{n}" for n in run.coord_names()], zip(*c, *cols))


def _expected_paths(run: _Run, x0: np.ndarray, t: np.ndarray):
    i, s = run.cfg.initial, run.cfg.system
    fam = i["family"]
    if fam in ("eigenstate", "stationary"):
        return np.broadcast_to(x0[None], (len(t),) + x0.shape)
    if fam == "coherent":
        shift = i["amplitude"] * (np.cos(s["omega"] * t) - 1)
        return x0[None] + shift[:, None, None]
    if fam == "plane_wave":
        p = states.lattice_momentum(run.grid, i["mode"], run.hbar)
        v = np.array([run.metric.axis_g(a) * p[a] for a in range(run.grid.dim)])
        return x0[None] + v[None, None] * t[:, None, None]
    return None


def op_trajectories(run: _Run, rec: StepRecord):
    a = run.cfg.analysis
    ens = integrate_trajectories(run.series, run.metric, "density", a["n_traj"], a["seed"])
    run.ensemble = ens
    m = min(TRAJ_CSV_LIMIT, ens.n_traj)
    rows = ((t, j, *ens.positions[k, j]) for k, t in enumerate(ens.times) for j in range(m))
    run.csv(rec, "trajectories.csv", ["t", "trajectory"] + run.coord_names(), rows)
    exp = _expected_paths(run, ens.positions[0], ens.times)
    if exp is not None:
        err = float(np.max(np.abs(ens.positions - exp)))
        rec.checks.append(_le("max path error vs analytic", err, a["tol_trajectory"]))
    rec.note = f"{ens.n_traj} trajectories (first {m} written), seed {a['seed']}"


def op_equivariance(run: _Run, rec: StepRecord):
    a = run.cfg.analysis
    l1 = equivariance_check(run.ensemble, run.series)
    run.csv(rec, "equivariance.csv", ["t", "l1"], zip(run.series.times, l1))
    rec.checks.append(_le("max L1 density distance", float(np.max(l1)), a["tol_equivariance"]))
    rec.checks.append(_le("L1 growth", float(np.max(l1 - l1[0])), EQUIVARIANCE_GROWTH))


def op_moments(run: _Run, rec: StepRecord):
    rep = moments(run.psi0, run.metric, run.hbar)
    run.json(rec, "moments.json", rep.as_dict())
    if run.series is not None:
        rows = []
        for k in range(len(run.series)):
            m = moments(run.series.field(k), run.metric, run.hbar)
            rows.append((run.series.times[k], *m.mean_x, *m.var_x, *m.mean_p, *m.var_p, m.mean_q))
        names = run.coord_names()
        run.csv(rec, "moments.csv", ["t"] + [f"mean_{n}" for n in names] + [f"var_{n}" for n in names]
                + [f"mean_p{n}" for n in names] + [f"var_p{n}" for n in names] + ["mean_Q"], rows)


def op_uncertainty(run: _Run, rec: StepRecord):
    tol = run.cfg.analysis["tol_uncertainty"]
    rep = verify_uncertainty(run.psi0, run.metric, run.hbar)
    run.json(rec, "uncertainty.json", rep.as_dict())
    if rep.real_state:
        rec.checks.append(_le("|var_p - 2m<Q>|", float(np.max(np.abs(rep.gap))), tol))
    if rep.localized:
        worst = float(np.min(rep.product))
        rec.checks.append(Check("min var_x 2m<Q>", worst, rep.floor - tol, worst >= rep.floor - tol, ">="))
    rec.note = ", ".join(rep.flags)


def _gaussian_sigma(run: _Run):
    i, s = run.cfg.initial, run.cfg.system
    if i["family"] in ("gaussian", "free_gaussian"):
        return i["width"][0] if len(set(i["width"])) == 1 else None
    if i["family"] == "eigenstate" and all(n == 0 for n in i["index"]):
        return np.sqrt(run.hbar / (2 * run.mass * s["omega"]))
    return None


def op_perturbation_action(run: _Run, rec: StepRecord):
    j = perturbation_action(run.psi0, run.metric, run.hbar)
    out = {"J": j}
    sigma = _gaussian_sigma(run)
    if sigma is not None and len(set(run.metric.masses)) == 1:
        exact = run.grid.dim * run.hbar**2 / (8 * run.mass * sigma**2)
        out["J_exact"] = exact
        rec.checks.append(_le("|J - hbar^2/(8 m sigma^2)|", abs(j - exact), run.cfg.analysis["tol_action"]))
    elif run.cfg.initial["family"] == "plane_wave":
        out["J_exact"] = 0.0
        rec.checks.append(_le("|J|", abs(j), run.cfg.analysis["tol_action"]))
    run.json(rec, "perturbation_action.json", out)


def op_chetaev_psi(run: _Run, rec: StepRecord):
    tol = run.cfg.analysis["tol_chetaev"]
    fields = [run.psi0] if run.series is None else [run.series.field(k) for k in
                                                      sorted({len(run.series) // 2, len(run.series) - 1})]
    reports = [chetaev_condition_psi(f, run.metric, run.hbar, threshold=CHETAEV_MASK) for f in fields]
    run.json(rec, "chetaev_psi.json", {"node_mask": CHETAEV_MASK, "times": [f.time for f in fields],
                                       "reports": [r.as_dict() for r in reports]})
    rec.checks.append(_le("identity residual vs (i/hbar) L", max(r.details["identity_residual"] for r in reports), tol))


def op_dispersion(run: _Run, rec: StepRecord):
    i = run.cfg.initial
    mom = [position_moments(run.series.field(k)) for k in range(len(run.series))]
    var = np.array([m2[0] - m1[0] ** 2 for m1, m2 in mom])
    t = run.series.times
    exact = states.free_gaussian_variance(i["width"][0], t, run.mass, run.hbar)
    rel = np.abs(var - exact) / exact
    run.csv(rec, "dispersion.csv", ["t", "var_x", "var_x_exact", "rel_error"], zip(t, var, exact, rel))
    if run.cfg.system["potential"] == "free" and i["family"] in ("gaussian", "free_gaussian"):
        rec.checks.append(_le("max relative variance error", float(np.max(rel)), run.cfg.analysis["tol_dispersion"]))


def op_plane_wave_exact(run: _Run, rec: StepRecord):
    mode = run.cfg.initial["mode"]
    p = states.lattice_momentum(run.grid, mode, run.hbar)
    e = sum(0.5 * run.metric.axis_g(a) * pp**2 for a, pp in enumerate(p))
    ref = run.psi0.values
    err = max(float(np.max(np.abs(run.series.values[k] - ref * np.exp(-1j * e * t / run.hbar))))
              for k, t in enumerate(run.series.times))
    run.json(rec, "plane_wave_exact.json", {"max_abs_error": err, "energy": e})
    rec.checks.append(_le("max |psi(t) - exact|", err, 1e-8))


def op_norm(run: _Run, rec: StepRecord):
    run.json(rec, "norm.json", {"norm_drift": run.norm_drift, "energy_drift": run.energy_drift})
    rec.checks.append(_le("max |norm^2 - 1|", run.norm_drift, run.cfg.analysis["tol_norm"]))


def op_classical_flow(run: _Run, rec: StepRecord):
    b = run.base
    rows = zip(b.t, *b.q.T, *b.p.T, b.energy)
    n = run.grid.dim
    run.csv(rec, "classical.csv", ["t"] + [f"q{i}" for i in range(n)] + [f"p{i}" for i in range(n)] + ["H"], rows)
    drift = float(np.max(np.abs(b.energy - b.energy[0])))
    rec.checks.append(_le("max |H(t) - H(0)|", drift, 1e-8 * max(1.0, abs(float(b.energy[0])))))


def _basis_solutions(run: _Run):
    if run.basis_solutions is None:
        basis = canonical_basis(run.grid.dim, float(run.base.t[0]))
        run.basis_solutions = [integrate_variational(run.system, run.base, v) for v in basis]
    return run.basis_solutions


def op_variational(run: _Run, rec: StepRecord):
    sols = _basis_solutions(run)
    n = run.grid.dim
    rows = ((t, j, *s.xi[k], *s.eta[k]) for j, s in enumerate(sols) for k, t in enumerate(s.t))
    run.csv(rec, "variational.csv", ["t", "solution"] + [f"xi{i}" for i in range(n)]
            + [f"eta{i}" for i in range(n)], rows)


def op_poincare(run: _Run, rec: StepRecord):
    sols = _basis_solutions(run)
    n = run.grid.dim
    pairs = [(i, n + i) for i in range(n)]
    inv = [poincare_invariant(sols[a], sols[b]) for a, b in pairs]
    run.csv(rec, "poincare.csv", ["t"] + [f"C_{a}_{b}" for a, b in pairs], zip(run.base.t, *[c.c for c in inv]))
    rec.checks.append(_le("max Poincare invariant drift", max(c.drift for c in inv), run.cfg.analysis["tol_poincare"]))


def op_exponents(run: _Run, rec: StepRecord):
    a = run.cfg.analysis
    rep = characteristic_numbers(run.system, run.base, canonical_basis(run.grid.dim, float(run.base.t[0])),
                                 a["fit_window"], a["tol_exponent"])
    run.json(rec, "exponents.json", rep.as_dict())
    kind = run.cfg.system["potential"]
    if kind == "inverted_harmonic":
        w = run.cfg.system["omega"]
        top = np.sort(rep.modern)[::-1][: run.grid.dim]
        bot = np.sort(rep.modern)[: run.grid.dim]
        err = float(max(np.max(np.abs(top - w)), np.max(np.abs(bot + w))) / w)
        rec.checks.append(_le("relative error of Lambda = +-omega", err, RATE_REL_TOL))
    elif kind in ("harmonic", "free"):
        rec.checks.append(_le("max |Lambda|", float(np.max(np.abs(rep.modern))), a["tol_exponent"]))
    rec.checks.append(_le("max pair sum lambda + lambda'", float(np.max(rep.pair_sums)), 2 * a["tol_exponent"]))


def op_action_L(run: _Run, rec: StepRecord):
    act, b = run.action, run.action_base
    ok = act.valid(b.q[:, 0], b.t)
    q, t = b.q[ok, 0], b.t[ok]
    lv = L_functional(act, Metric((run.mass,)), (q, t))
    eps = 1e-5
    fd = np.full(q.shape, np.nan)
    ok = act.valid(q - eps, t) & act.valid(q + eps, t)
    fd[ok] = (act.S_q(q[ok] + eps, t[ok]) - act.S_q(q[ok] - eps, t[ok])) / (2 * eps) / run.mass
    run.csv(rec, "action_L.csv", ["t", "q", "L", "L_finite_difference"], zip(t, q, lv, fd))
    kind = act.kind
    if kind == "plane":
        rec.checks.append(_le("max |L|", float(np.max(np.abs(lv))), 0.0))
    elif kind == "focusing":
        rec.checks.append(_le("max |L - 1/t|", float(np.max(np.abs(lv - 1 / t))), 1e-12))
    elif kind == "hyperbolic":
        rec.checks.append(_le("max |L - c|", float(np.max(np.abs(lv - act.param))), 1e-12))
    fin = np.isfinite(fd)
    if fin.any():
        rec.checks.append(_le("max |L - finite difference|", float(np.max(np.abs(lv - fd)[fin])), 1e-6))


def op_reduced_variational(run: _Run, rec: StepRecord):
    red = reduced_variational(run.action, Metric((run.mass,)), run.action_base, 1.0)
    run.csv(rec, "reduced_variational.csv", ["t", "xi", "eta", "xi_full", "eta_full"],
            zip(red.t, red.xi, red.eta, red.full_xi, red.full_eta))
    rec.checks.append(_le("max deviation from full flow", red.deviation, REDUCED_TOL))


def op_exp_integral(run: _Run, rec: StepRecord):
    a = run.cfg.analysis
    rep = exp_integral_characteristic(run.action, Metric((run.mass,)), run.action_base,
                                      a["fit_window"], a["tol_exponent"])
    run.csv(rec, "exp_integral.csv", ["t", "ln_F"], zip(rep.times, rep.log_f))
    run.json(rec, "exp_integral.json", rep.as_dict())
    kind = run.action.kind
    if kind in ("plane", "focusing"):
        rec.checks.append(_le("|Lambda_F|", abs(rep.exponent), a["tol_exponent"]))
    if kind == "focusing":
        t0 = rep.times[0]
        err = float(np.max(np.abs(rep.log_f - np.log(rep.times / t0))))
        rec.checks.append(_le("max |ln F - ln(t/t0)|", err, 1e-6))
    if kind == "hyperbolic":
        rec.checks.append(_le("relative error of Lambda_F = c", abs(rep.exponent - run.action.param) / run.action.param,
                              RATE_REL_TOL))


def op_sweep_width(run: _Run, rec: StepRecord):
    a = run.cfg.analysis
    rows, worst = [], 0.0
    u = run.potential.on_grid(run.grid)
    dim = run.grid.dim
    for sigma in a["sweep_widths"]:
        psi = states.gaussian(run.grid, sigma, 0.0, 0.0, run.hbar).normalized()
        j = perturbation_action(psi, run.metric, run.hbar)
        exact = dim * run.hbar**2 / (8 * run.mass * sigma**2)
        mean_u = float(np.real(np.sum(u * np.abs(psi.values) ** 2)) * run.grid.cell_volume)
        worst = max(worst, abs(j - exact))
        rows.append((sigma, sigma**2, j, exact, mean_u, mean_u + j))
    run.csv(rec, "sweep.csv", ["sigma", "sigma2", "J", "J_exact", "mean_U", "mean_U_plus_J"], rows)
    best = min(rows, key=lambda r: r[5])
    summary = {"argmin_sigma": best[0], "min_mean_U_plus_J": best[5]}
    if run.cfg.system["potential"] == "harmonic":
        summary["analytic_argmin_sigma"] = float(np.sqrt(run.hbar / (2 * run.mass * run.cfg.system["omega"])))
    run.json(rec, "sweep.json", summary)
    rec.checks.append(_le("max |J - hbar^2/(8 m sigma^2)|", worst, a["tol_action"]))


OPS = {name[3:]: fn for name, fn in globals().items() if name.startswith("op_")}


# -- driver -------------------------------------------------------------------------

def run(cfg: ScenarioConfig, out_dir: str, quiet: bool = True) -> RunManifest:
    """Execute ``cfg`` and write outputs plus ``manifest.json`` under ``out_dir``.

    Raises :class:`RunError` after writing the manifest if a step crashes;
    tolerance failures are recorded in the manifest (status ``fail``).
    """
    os.makedirs(out_dir, exist_ok=True)
    man = RunManifest(cfg.name, cfg.to_ini(), cfg.seed, __version__, _now())
    mpath = os.path.join(out_dir, "manifest.json")
    ops = list(cfg.analysis["operations"])
    r = _Run(cfg, out_dir)
    quantum = [op for op in ops if op not in CLASSICAL_OPS | ACTION_OPS | {"spectrum", "box_artifact", "sweep_width"}]
    plan = []
    if quantum:
        plan.append(("initial_state", _initial_state))
        if cfg.evolution["t_final"] > 0 and any(op in EVOLVED_OPS for op in ops):
            plan.append(("evolution", _evolution))
    if any(op in CLASSICAL_OPS for op in ops):
        plan.append(("classical_base", _classical_base))
    if any(op in ACTION_OPS for op in ops):
        plan.append(("action_base", _action_base))
    plan += [(op, OPS[op]) for op in ops]

    failure = None
    try:
        for name, fn in plan:
            rec = StepRecord(name)
            man.steps.append(rec)
            if name in EVOLVED_OPS and r.series is None:
                rec.status = "skipped"
                rec.note = "t_final = 0: no evolution"
                continue
            t0 = time.perf_counter()
            try:
                fn(r, rec)
            except Exception as exc:
                rec.status = "error"
                rec.note = f"{type(exc).__name__}: {exc}"
                man.failed_step, man.error = name, rec.note
                failure = RunError(name, exc, mpath)
                raise failure from exc
            rec.seconds = time.perf_counter() - t0
            rec.status = "pass" if all(c.passed for c in rec.checks) else "fail"
            if not quiet:
                marks = "; ".join(f"{c.name} {c.value:.3g} {c.relation} {c.tolerance:.3g}" for c in rec.checks)
                print(f"[{rec.status:>7}] {name} ({rec.seconds:.2f} s) {marks}")
    finally:
        man.finished = _now()
        interrupted = sys.exc_info()[0] is not None and failure is None
        if failure is not None or interrupted:
            man.status = "error"
            if interrupted:
                man.failed_step = man.steps[-1].name if man.steps else None
                man.error = f"interrupted: {sys.exc_info()[0].__name__}"
        else:
            bad = [s.name for s in man.steps if s.status == "fail"]
            man.status = "fail" if bad else "pass"
            if bad:
                man.failed_step = bad[0]
        write_json(mpath, man.as_dict())
    return man
