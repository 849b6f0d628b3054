import numpy as np
import pytest

from chetaev_lab import states
from chetaev_lab.dynamics import EvolverConfig, FieldSeries, evolve
from chetaev_lab.grid import Grid, Metric, integrate
from chetaev_lab.potentials import Potential
from chetaev_lab.trajectories import (TrajectoryError, deposit, equivariance_check, integrate_trajectories,
                                      sample_positions)

M1 = Metric((1.0,))
G = Grid.line(-10, 10, 256)


def test_sampling_is_seeded_and_prefix_stable():
    d = np.abs(states.gaussian(G).values) ** 2
    a = sample_positions(d, G, "density", 100, seed=3)
    b = sample_positions(d, G, "density", 100, seed=3)
    c = sample_positions(d, G, "density", 300, seed=3)
    assert np.array_equal(a, b)
    # one stream per trajectory: enlarging the ensemble keeps the first draws
    assert np.array_equal(a, c[:100])
    assert not np.array_equal(a, sample_positions(d, G, "density", 100, seed=4))


def test_density_sampling_matches_moments():
    d = np.abs(states.gaussian(G, 1.5, 2.0).values) ** 2
    x = sample_positions(d, G, "density", 20000, seed=0)[:, 0]
    assert x.mean() == pytest.approx(2.0, abs=0.05)
    assert x.var() == pytest.approx(1.5**2, rel=0.05)


def test_uniform_and_explicit_laws():
    u = sample_positions(None, G, "uniform", 500, seed=1)
    assert u.min() >= -10 and u.max() < 10
    e = sample_positions(None, G, "explicit", 0, seed=0, explicit=[0.5, 1.5])
    assert e.shape == (2, 1)
    with pytest.raises(ValueError):
        sample_positions(None, G, "gridded", 5, 0)


def test_deposit_has_unit_mass():
    pts = np.random.default_rng(0).normal(size=(1000, 1))
    assert integrate(deposit(pts, G), G) == pytest.approx(1.0)
    g2 = Grid((-5, -5), (5, 5), (32, 32))
    pts2 = np.random.default_rng(1).normal(size=(500, 2))
    assert integrate(deposit(pts2, g2), g2) == pytest.approx(1.0)


def test_eigenstate_trajectories_rest():
    s = evolve(states.oscillator_eigenstate(G), Potential("harmonic"), M1, EvolverConfig(0.01, 1.0, store_every=5))
    ens = integrate_trajectories(s, M1, "density", 200, seed=2)
    # only the splitting error of the evolved eigenstate moves them
    assert np.max(np.abs(ens.positions - ens.positions[0])) < 1e-4


def test_coherent_trajectories_follow_classical_path():
    s = evolve(states.coherent_state(G, 2.0), Potential("harmonic"), M1, EvolverConfig(0.01, 3.0))
    ens = integrate_trajectories(s, M1, "density", 100, seed=5)
    shift = 2.0 * (np.cos(ens.times) - 1)
    expected = ens.positions[0][None] + shift[:, None, None]
    assert np.max(np.abs(ens.positions - expected)) < 1e-3


def test_plane_wave_trajectories_wrap_unwrapped():
    g = Grid.line(-10, 10, 128)
    s = evolve(states.plane_wave(g, 3), Potential("free"), M1, EvolverConfig(0.01, 4.0))
    ens = integrate_trajectories(s, M1, "explicit", explicit=[9.0])
    v = 2 * np.pi * 3 / 20
    assert ens.positions[-1, 0, 0] == pytest.approx(9.0 + 4.0 * v, abs=1e-8)  # past the seam


def test_sparse_slices_are_rejected():
    s = evolve(states.coherent_state(G, 2.0), Potential("harmonic"), M1, EvolverConfig(0.01, 3.0, store_every=100))
    with pytest.raises(TrajectoryError, match="too sparse"):
        integrate_trajectories(s, M1, "density", 10, seed=0)


def test_leaving_a_box_grid_is_an_error():
    # uniform flow v = 1 towards the right wall
    g = Grid.line(-3, 3, 121, "box")
    times = np.linspace(0, 1, 21)
    vals = np.array([np.exp(1j * (g.axis() - 0.5 * t)) for t in times])
    s = FieldSeries(g, times, vals)
    ens = integrate_trajectories(s, M1, "explicit", explicit=[1.0])
    # second-order differences give v = sin(h)/h
    assert ens.positions[-1, 0, 0] == pytest.approx(1.0 + np.sin(0.05) / 0.05, abs=1e-8)
    with pytest.raises(TrajectoryError, match="left the grid"):
        integrate_trajectories(s, M1, "explicit", explicit=[2.5])


def test_equivariance_for_resting_ensemble():
    s = evolve(states.oscillator_eigenstate(G), Potential("harmonic"), M1, EvolverConfig(0.01, 1.0, store_every=10))
    ens = integrate_trajectories(s, M1, "density", 5000, seed=0)
    l1 = equivariance_check(ens, s)
    assert np.max(l1) < 0.05
    assert np.ptp(l1) < 1e-6
