import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chetaev_lab import states
from chetaev_lab.grid import ComplexField, Grid, Metric
from chetaev_lab.observables import (max_phase_gradient, moments, momentum_moments, position_moments,
                                     spectral_momentum_second_moment, verify_uncertainty)

M1 = Metric((1.0,))
G = Grid.line(-20, 20, 512)
WIDE = Grid.line(-40, 40, 1024)


def test_ground_state_moments():
    rep = moments(states.oscillator_eigenstate(G), M1)
    assert rep.var_x[0] == pytest.approx(0.5, abs=1e-12)
    assert rep.var_p[0] == pytest.approx(0.5, abs=1e-12)
    assert rep.mean_q == pytest.approx(0.25, abs=1e-12)
    assert rep.product[0] == pytest.approx(0.25, abs=1e-12)


def test_excited_state_product():
    rep = moments(states.oscillator_eigenstate(G, 1), M1)
    assert rep.product[0] == pytest.approx(2.25, abs=1e-10)


def test_moving_gaussian_moments():
    psi = states.gaussian(G, 2.0 ** 0.5, 1.0, 0.8)
    x1, x2 = position_moments(psi)
    p1, p2 = momentum_moments(psi)
    assert x1[0] == pytest.approx(1.0) and x2[0] - x1[0] ** 2 == pytest.approx(2.0)
    assert p1[0] == pytest.approx(0.8) and p2[0] - p1[0] ** 2 == pytest.approx(0.125)


def test_parseval_for_second_momentum_moment():
    psi = states.gaussian(G, 0.7, -1.0, 2.0)
    assert spectral_momentum_second_moment(psi)[0] == pytest.approx(momentum_moments(psi)[1][0], abs=1e-12)


def test_plane_wave_is_flagged_and_uniform():
    g = Grid.line(-10, 10, 128)
    psi = states.plane_wave(g, 2)
    x1, x2 = position_moments(psi)
    assert x2[0] - x1[0] ** 2 == pytest.approx(20.0**2 / 12, rel=1e-12)
    rep = verify_uncertainty(psi, M1)
    assert "non-normalizable-limit" in rep.flags
    assert rep.inequality_ok is None


def test_real_state_flag_and_gap():
    rep = verify_uncertainty(states.oscillator_eigenstate(G, 2), M1)
    assert rep.real_state and rep.gap_ok
    moving = verify_uncertainty(states.gaussian(G, 1.0, 0.0, 0.5), M1)
    assert not moving.real_state and moving.gap_ok is None
    # the gap is closed by the phase spread
    assert moving.decomposition_residual < 1e-10


def test_complex_gap_equals_phase_spread():
    psi = states.free_gaussian(G, 1.0, 2.0)
    rep = verify_uncertainty(psi, M1)
    # the chirp of the spreading packet carries var_p - 2m<Q>
    assert rep.gap[0] == pytest.approx(rep.phase_spread[0], abs=1e-10)
    assert rep.gap[0] > 0.1


def test_two_dimensional_moments():
    g = Grid((-16, -16), (16, 16), (128, 128))
    psi = states.gaussian(g, (1.0, 2.0))
    rep = moments(psi, Metric.for_grid(g, (1.0, 2.0)))
    assert rep.var_x == pytest.approx([1.0, 4.0])
    assert rep.var_p == pytest.approx([0.25, 1 / 16])
    assert rep.q_axes == pytest.approx([1 / 8, 1 / (8 * 2 * 4)])


def test_max_phase_gradient():
    assert max_phase_gradient(states.oscillator_eigenstate(G, 3)) < 1e-12
    assert max_phase_gradient(states.gaussian(G, 1.0, 0.0, 1.5)) == pytest.approx(1.5, rel=1e-9)


def test_unnormalized_field_rejected():
    with pytest.raises(ValueError):
        moments(ComplexField(G, 2 * states.gaussian(G).values), M1)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.4, 2.5), st.floats(-3, 3), st.floats(-2, 2), st.floats(0, 3),
       st.floats(-1, 1), st.floats(-1, 1))
def test_heisenberg_floor(sigma, center, momentum, t, c1, c2):
    # superposition of a spreading packet and two oscillator eigenstates, on a grid wide enough to hold it
    g = WIDE
    v = (states.free_gaussian(g, sigma, t, center, momentum).values
         + c1 * states.oscillator_eigenstate(g, 1).values + 1j * c2 * states.oscillator_eigenstate(g, 2).values)
    psi = ComplexField(g, v).normalized()
    rep = verify_uncertainty(psi, M1)
    assert rep.localized
    assert rep.inequality_ok
    assert moments(psi, M1).product[0] >= 0.25 - 1e-9
