import numpy as np
import pytest

from chetaev_lab import states
from chetaev_lab.dynamics import (CRANK_NICOLSON, EvolverConfig, box_artifact_check, energy, evolve,
                                  hamiltonian_apply, solve_stationary)
from chetaev_lab.grid import ComplexField, Grid, Metric
from chetaev_lab.potentials import Potential

M1 = Metric((1.0,))
HO = Potential("harmonic")


def test_step_lands_on_final_time():
    cfg = EvolverConfig(0.3, 1.0)
    assert cfg.n_steps == 4 and cfg.step == pytest.approx(0.25)
    assert EvolverConfig(0.1, 0.0).n_steps == 0


def test_config_rejects_bad_values():
    for kw in ({"dt": 0.0, "t_final": 1}, {"dt": 0.1, "t_final": -1}, {"dt": 0.1, "t_final": 1, "scheme": "euler"},
               {"dt": 0.1, "t_final": 1, "direction": 0}):
        with pytest.raises(ValueError):
            EvolverConfig(**kw)


def test_scheme_grid_compatibility():
    g = Grid.line(-5, 5, 64)
    with pytest.raises(ValueError, match="box grids"):
        evolve(states.gaussian(g), HO, M1, EvolverConfig(0.1, 0.1, CRANK_NICOLSON))
    gb = Grid.line(-5, 5, 64, "box")
    with pytest.raises(ValueError, match="periodic"):
        evolve(states.gaussian(gb), HO, M1, EvolverConfig(0.1, 0.1))


def test_ground_state_only_rotates_phase():
    g = Grid.line(-10, 10, 256)
    psi = states.oscillator_eigenstate(g)
    s = evolve(psi, HO, M1, EvolverConfig(0.01, 1.0))
    exact = psi.values * np.exp(-0.5j * s.times[-1])
    assert np.max(np.abs(s.values[-1] - exact)) < 1e-4


def test_free_gaussian_matches_closed_form():
    g = Grid.line(-40, 40, 512)
    s = evolve(states.free_gaussian(g, 1.0, 0.0, 0.0, 0.7), Potential("free"), M1, EvolverConfig(0.05, 2.0))
    exact = states.free_gaussian(g, 1.0, 2.0, 0.0, 0.7).values
    # free flow: the split-step kinetic factor is exact
    assert np.max(np.abs(s.values[-1] - exact)) < 1e-10


def test_norm_and_energy_conserved():
    g = Grid.line(-10, 10, 256)
    psi = states.coherent_state(g, 2.0)
    s = evolve(psi, HO, M1, EvolverConfig(0.01, 3.0, store_every=50))
    norms = [s.field(k).norm_squared() for k in range(len(s))]
    es = [energy(s.field(k), HO, M1) for k in range(len(s))]
    assert np.max(np.abs(np.array(norms) - 1)) < 1e-12
    assert np.max(np.abs(np.array(es) - es[0])) < 1e-4


def test_crank_nicolson_box_well_stationary():
    g = Grid.line(0, np.pi, 401, "box")
    psi = ComplexField(g, np.sqrt(2 / np.pi) * np.sin(g.axis()) + 0j)
    s = evolve(psi, Potential("box_well"), M1, EvolverConfig(0.01, 1.0, CRANK_NICOLSON))
    assert abs(s.field(len(s) - 1).norm_squared() - psi.norm_squared()) < 1e-12
    exact = psi.values * np.exp(-0.5j * 1.0)
    assert np.max(np.abs(s.values[-1] - exact)) < 1e-4


def test_backward_evolution_undoes_forward():
    g = Grid.line(-10, 10, 128)
    psi = states.coherent_state(g, 1.5)
    fwd = evolve(psi, HO, M1, EvolverConfig(0.01, 1.0))
    back = evolve(fwd.field(len(fwd) - 1), HO, M1, EvolverConfig(0.01, 1.0, direction=-1))
    assert np.max(np.abs(back.values[-1] - psi.values)) < 1e-10


def test_hamiltonian_apply_on_eigenstate():
    g = Grid.line(-10, 10, 256)
    psi = states.oscillator_eigenstate(g, 2)
    h = hamiltonian_apply(psi, HO, M1)
    assert np.max(np.abs(h.values - 2.5 * psi.values)) < 1e-10


def test_time_dependent_potential_is_used():
    g = Grid.line(-10, 10, 128)
    pot = Potential("harmonic", modulation=lambda t: 1.0 + t)
    psi = states.oscillator_eigenstate(g)
    s = evolve(psi, pot, M1, EvolverConfig(0.01, 1.0))
    assert np.max(np.abs(np.abs(s.values[-1]) - np.abs(psi.values))) > 1e-3


def test_oscillator_spectrum():
    spec = solve_stationary(HO, M1, Grid.line(-10, 10, 400, "box"), 4)
    assert np.allclose(spec.energies, [0.5, 1.5, 2.5, 3.5], atol=1e-4)
    for k, st in enumerate(spec.states):
        assert st.norm_squared() == pytest.approx(1.0, abs=1e-8)


def test_two_dimensional_spectrum_degeneracy():
    g = Grid((-8, -8), (8, 8), (81, 81), "box")
    spec = solve_stationary(HO, Metric.for_grid(g), g, 3)
    assert np.allclose(spec.energies, [1.0, 2.0, 2.0], atol=1e-3)
    assert "iterative" in spec.method


def test_box_well_levels():
    spec = solve_stationary(Potential("box_well"), M1, Grid.line(0, np.pi, 201, "box"), 3)
    assert np.allclose(spec.energies, [0.5, 2.0, 4.5], atol=1e-5)


def test_stationary_needs_box():
    with pytest.raises(ValueError):
        solve_stationary(HO, M1, Grid.line(-5, 5, 64), 2)


def test_box_artifact_flags():
    g = Grid.line(-8, 8, 161, "box")
    inv = box_artifact_check(Potential("inverted_harmonic"), M1, g, 2)
    assert inv.flags == ("box-artifact", "box-artifact")
    ho = box_artifact_check(HO, M1, Grid.line(-10, 10, 201, "box"), 2)
    assert ho.flags == ("stable", "stable")
