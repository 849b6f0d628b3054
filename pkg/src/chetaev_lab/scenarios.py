"""Built-in scenario catalog; each entry is ordinary config text."""
from __future__ import annotations

from .config import ScenarioConfig, parse_config

_CATALOG: dict[str, tuple[str, str]] = {}


def _add(name: str, summary: str, text: str):
    _CATALOG[name] = (summary, text.strip() + "\n")


_add("ho-ground", "oscillator ground state: spectrum, U + Q = E0, Bohm residuals, resting trajectories", """
[system]
potential = harmonic
omega = 1.0
[grid]
lower = -10.0
upper = 10.0
points = 256
boundary = periodic
[initial]
family = eigenstate
index = 0
[evolution]
dt = 0.01
t_final = 2.0
[analysis]
operations = spectrum, box_artifact, quantum_potential, energy_balance, continuity, qhj, velocity,
    trajectories, equivariance, moments, uncertainty, perturbation_action, chetaev_psi, norm
n_states = 3
n_traj = 4000
tol_continuity = 1e-6
tol_qhj = 1e-5
""")

_add("ho-excited", "first excited oscillator state: node masking, U + Q = E1, real-state uncertainty identity", """
[system]
potential = harmonic
[grid]
lower = -10.0
upper = 10.0
points = 256
[initial]
family = eigenstate
index = 1
[evolution]
# splitting error is larger than for the ground state
dt = 0.005
t_final = 1.0
[analysis]
operations = spectrum, quantum_potential, continuity, qhj, moments, uncertainty, perturbation_action, norm
tol_stationary = 1e-5
tol_continuity = 1e-6
tol_qhj = 1e-5
""")

_add("ho-coherent", "displaced oscillator ground state over one period: residuals, rigid Bohm transport, equivariance", """
[system]
potential = harmonic
[grid]
lower = -10.0
upper = 10.0
points = 256
[initial]
family = coherent
amplitude = 2.0
[evolution]
dt = 0.01
t_final = 6.283185307179586
[analysis]
operations = continuity, qhj, energy_balance, velocity, trajectories, equivariance, moments, uncertainty,
    chetaev_psi, norm
n_traj = 10000
seed = 7
# the moving packet has a larger dS/dt, hence a larger time-differencing error
tol_energy_balance = 2e-4
""")

_add("free-gaussian", "freely spreading packet: dispersion law, Q from the energy balance, reduced vs full continuity", """
[system]
potential = free
[grid]
lower = -40.0
upper = 40.0
points = 512
[initial]
family = free_gaussian
width = 1.0
[evolution]
dt = 0.02
t_final = 6.0
[analysis]
operations = dispersion, energy_balance, continuity, qhj, chetaev_psi, moments, uncertainty,
    perturbation_action, norm
""")

_add("free-plane", "lattice plane wave: exact free evolution, Q = 0, straight trajectories, non-normalizable flag", """
[system]
potential = free
[grid]
lower = -10.0
upper = 10.0
points = 128
[initial]
family = plane_wave
mode = 3
[evolution]
dt = 0.01
t_final = 1.0
[analysis]
operations = plane_wave_exact, quantum_potential, qhj, continuity, velocity, trajectories, moments,
    uncertainty, perturbation_action, chetaev_psi, norm
n_traj = 200
tol_qhj = 1e-8
tol_continuity = 1e-8
tol_trajectory = 1e-6
tol_stationary = 1e-8
tol_action = 1e-10
""")

_add("inverted-ho", "inverted oscillator: box-artifact spectrum, Poincare invariant under growth, exponents +-omega", """
[system]
potential = inverted_harmonic
omega = 1.0
[grid]
lower = -8.0
upper = 8.0
points = 161
boundary = box
[initial]
q0 = 0.0
p0 = 0.0
[evolution]
classical_dt = 0.0005
classical_t_final = 5.0
[analysis]
operations = spectrum, box_artifact, classical_flow, variational, poincare, exponents
n_states = 2
""")

_add("box-well", "infinite square well on [0, pi]: E_n = n^2/2, Q = E1 inside, Crank-Nicolson residuals", """
[system]
potential = box_well
[grid]
lower = 0.0
upper = 3.141592653589793
points = 201
boundary = box
[initial]
family = stationary
index = 0
[evolution]
dt = 0.01
t_final = 1.0
[analysis]
operations = spectrum, quantum_potential, moments, uncertainty, perturbation_action, continuity, qhj, norm
n_states = 3
tol_spectrum = 1e-3
tol_stationary = 1e-4
tol_continuity = 1e-4
tol_qhj = 1e-4
""")

_add("chetaev-classical-ho", "classical oscillator: symplectic flow, variational basis, Poincare invariant, zero exponents", """
[system]
potential = harmonic
[initial]
q0 = 1.0
p0 = 0.0
[evolution]
classical_dt = 0.01
classical_t_final = 100.0
[analysis]
operations = classical_flow, variational, poincare, exponents
""")

_add("chetaev-focusing", "focusing free action: L = 1/t, reduced variations xi ~ t, exp(int L dt) = t/t0 with zero exponent", """
[system]
potential = free
[initial]
q0 = 0.5
t0 = 1.0
[evolution]
classical_dt = 0.04
classical_t_final = 1999.0
[analysis]
operations = action_L, reduced_variational, exp_integral
action = focusing
action_param = 0.0
""")

_add("sweep-gaussian-width", "perturbation action J(sigma) across Gaussian widths and the minimizer of <U> + J", """
[system]
potential = harmonic
[grid]
lower = -20.0
upper = 20.0
points = 512
[analysis]
operations = sweep_width
sweep_widths = 0.5, 0.6, 0.7071067811865476, 0.8, 1.0, 1.25, 1.5, 1.75, 2.0
""")


def scenario_ids() -> list[str]:
    return list(_CATALOG)


def describe() -> list[tuple[str, str]]:
    return [(k, v[0]) for k, v in _CATALOG.items()]


def scenario_text(name: str) -> str:
    if name not in _CATALOG:
        raise KeyError(f"unknown scenario {name!r}; valid ids: {', '.join(_CATALOG)}")
    return _CATALOG[name][1]


def load_scenario(name: str) -> ScenarioConfig:
    return parse_config(scenario_text(name), name)
