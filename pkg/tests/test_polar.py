import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chetaev_lab import states
from chetaev_lab.dynamics import EvolverConfig, evolve
from chetaev_lab.grid import ComplexField, Grid, Metric
from chetaev_lab.polar import (bohm_velocity, chetaev_condition_psi, continuity_residual, decompose,
                               perturbation_action, q_from_energy_balance, qhj_residual, quantum_potential,
                               recompose)
from chetaev_lab.potentials import Potential

M1 = Metric((1.0,))
G = Grid.line(-10, 10, 256)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.5, 2.0), st.floats(-2, 2), st.floats(-3, 3), st.floats(0.0, 3.0))
def test_decompose_recompose_roundtrip(sigma, center, momentum, t):
    psi = states.free_gaussian(G, sigma, t, center, momentum)
    back = recompose(decompose(psi))
    assert np.max(np.abs(back.values - psi.values)) < 1e-12


def test_decomposed_action_is_unwrapped():
    psi = states.gaussian(G, 1.5, 0.0, 4.0)
    pol = decompose(psi)
    ok = ~pol.node_mask
    assert np.max(np.abs(np.diff(pol.action[ok]))) < np.pi
    # S = p x up to a constant
    resid = pol.action[ok] - 4.0 * G.axis()[ok]
    assert np.ptp(resid) < 1e-9


def test_nodes_are_masked_and_split_components():
    psi = states.oscillator_eigenstate(G, 3)
    pol = decompose(psi)
    assert pol.node_mask[128]  # x = 0 is a node of odd states
    core = np.abs(G.axis()) < 4
    # the other two nodes fall between grid points and stay above the threshold
    assert np.flatnonzero(pol.node_mask & core).tolist() == [128]
    assert pol.node_mask[0] and pol.node_mask[-1]
    # a sign change of a real state is a phase jump of pi
    x = G.axis()
    assert abs(abs(pol.action[np.argmin(np.abs(x - 0.6))] - pol.action[np.argmin(np.abs(x - 2.0))]) - np.pi) < 1e-12


def test_quantum_potential_of_eigenstates():
    x = G.axis()
    for n in range(3):
        q = quantum_potential(decompose(states.oscillator_eigenstate(G, n)), M1)
        sel = (np.abs(x) < 4) & ~q.mask
        # away from nodes U + Q = E_n
        near_node = np.zeros_like(sel)
        for z in np.flatnonzero(q.mask):
            near_node[max(z - 3, 0):z + 4] = True
        sel &= ~near_node
        assert np.max(np.abs(0.5 * x**2 + q.values - (n + 0.5))[sel]) < 1e-6


def test_plane_wave_has_zero_quantum_potential():
    q = quantum_potential(decompose(states.plane_wave(G, 3)), M1)
    assert np.max(np.abs(q.values)) < 1e-10


def test_bohm_velocity_of_moving_packet():
    psi = states.gaussian(G, 1.0, 0.0, 1.7)
    (v,) = bohm_velocity(decompose(psi), Metric((2.0,)))
    core = np.abs(G.axis()) < 4
    assert np.allclose(v.values[core], 1.7 / 2.0, atol=1e-9)


def test_perturbation_action_of_gaussians():
    g = Grid.line(-20, 20, 512)
    for sigma in (0.5, 1.0, 2.0):
        j = perturbation_action(states.gaussian(g, sigma, 0.3, 1.2), Metric((3.0,)))
        assert j == pytest.approx(1 / (8 * 3.0 * sigma**2), abs=1e-10)


def test_perturbation_action_needs_normalized_field():
    with pytest.raises(ValueError, match="normalized"):
        perturbation_action(ComplexField(G, 2 * states.gaussian(G).values), M1)


def test_continuity_gap_identity_and_small_residuals():
    s = evolve(states.coherent_state(G, 2.0), Potential("harmonic"), M1, EvolverConfig(0.01, 1.0))
    full, reduced = continuity_residual(s, M1)
    assert full.details["gap_identity"] < 1e-8
    assert full.l2 < 1e-4
    # the reduced form drops P g lap S; the coherent state has lap S = 0
    assert reduced.l2 < 1e-4
    q = qhj_residual(s, Potential("harmonic"), M1)
    assert q.l2 < 1e-4
    # the density form of Q loses digits in the far tails, so compare the forms on the core
    core = qhj_residual(s, Potential("harmonic"), M1, core_mass=0.999)
    assert core.details["q_form_gap"] < 1e-9


def test_reduced_form_differs_for_spreading_packet():
    g = Grid.line(-40, 40, 512)
    s = evolve(states.free_gaussian(g, 1.0), Potential("free"), M1, EvolverConfig(0.02, 2.0))
    full, reduced = continuity_residual(s, M1)
    assert full.l2 < 1e-4
    assert reduced.l2 > 100 * full.l2


def test_energy_balance_kinetic_identity():
    s = evolve(states.coherent_state(G, 2.0), Potential("harmonic"), M1, EvolverConfig(0.01, 1.0))
    eb = q_from_energy_balance(s, Potential("harmonic"), M1, 0.8)
    assert eb.kinetic_identity_residual < 1e-8
    assert eb.disagreement(np.abs(s.values[1:-1]) ** 2, G, 0.8) < 1e-3


def test_chetaev_identity_for_real_and_complex_fields():
    real = chetaev_condition_psi(states.oscillator_eigenstate(G, 0), M1, threshold=1e-6)
    assert real.details["L_max"] < 1e-12
    assert real.details["identity_residual"] < 1e-6
    g = Grid.line(-40, 40, 512)
    psi = states.free_gaussian(g, 1.0, 2.0)
    rep = chetaev_condition_psi(psi, M1, threshold=1e-6)
    # L = S'' = t / (4 sigma0^4 + t^2) for the spreading packet
    assert rep.details["L_max"] == pytest.approx(2.0 / 8.0, rel=1e-3)
    assert rep.details["identity_residual"] < 1e-6
