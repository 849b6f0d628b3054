import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chetaev_lab import states
from chetaev_lab.actions import (ACTION_KINDS, ActionField, L_functional, ValidityError,
                                 exp_integral_characteristic, reduced_variational)
from chetaev_lab.classical import integrate_hamiltonian
from chetaev_lab.grid import Grid, Metric, RealField
from chetaev_lab.polar import decompose

M1 = Metric((1.0,))


def _all_actions(mass=1.0):
    return [ActionField("plane", 0.7, mass), ActionField("focusing", 0.3, mass),
            ActionField("oscillator", 1.5, mass, 1.2), ActionField("hyperbolic", 0.8, mass)]


def test_catalog_solves_hamilton_jacobi():
    for m in (1.0, 2.5):
        for a in _all_actions(m):
            assert a.kind in ACTION_KINDS
            assert a.hj_residual() < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.9, 0.9), st.floats(0.3, 4.0))
def test_derivatives_match_finite_differences(u, t):
    eps = 1e-6
    for a in _all_actions():
        q = u * (a.turning_point if a.kind == "oscillator" else 3.0)
        fd_q = (a.S(q + eps, t) - a.S(q - eps, t)) / (2 * eps)
        fd_qq = (a.S_q(q + eps, t) - a.S_q(q - eps, t)) / (2 * eps)
        fd_t = (a.S(q, t + eps) - a.S(q, t - eps)) / (2 * eps)
        assert a.S_q(q, t) == pytest.approx(fd_q, abs=1e-6)
        assert a.S_qq(q, t) == pytest.approx(fd_qq, abs=1e-5)
        assert a.S_t(q, t) == pytest.approx(fd_t, abs=1e-6)


def test_validity_domains():
    with pytest.raises(ValidityError):
        ActionField("focusing").S(0.0, -1.0)
    osc = ActionField("oscillator", 0.5)
    with pytest.raises(ValidityError):
        osc.S_qq(0.99 * osc.turning_point, 0.0)
    with pytest.raises(ValueError):
        ActionField("spiral")
    with pytest.raises(ValueError):
        ActionField("hyperbolic", -1.0)


def test_analytic_L():
    q = np.linspace(-2, 2, 9)
    assert np.all(L_functional(ActionField("plane", 2.0), M1, (q, 1.0)) == 0)
    t = np.array([0.5, 1.0, 4.0])
    assert np.allclose(L_functional(ActionField("focusing", 0.0, 2.0), Metric((2.0,)), (0.3, t)), 1 / t, rtol=0, atol=0)
    assert np.all(L_functional(ActionField("hyperbolic", 0.6), M1, (q, 0.0)) == 0.6)
    with pytest.raises(ValueError, match="mass"):
        L_functional(ActionField("plane"), Metric((2.0,)), (q, 0.0))


def test_polar_L_of_spreading_packet():
    g = Grid.line(-40, 40, 512)
    t = 1.5
    lf = L_functional(decompose(states.free_gaussian(g, 1.0, t)), M1)
    assert isinstance(lf, RealField)
    core = (np.abs(g.axis()) < 5) & ~lf.mask
    assert np.allclose(lf.values[core], t / (4 + t**2), atol=1e-8)


def test_focusing_reduced_variations_grow_linearly():
    act = ActionField("focusing", 0.0)
    base = integrate_hamiltonian(act.system(), act.base_state(0.5, 1.0), 0.01, 6.0)
    red = reduced_variational(act, M1, base, 1.0)
    assert np.allclose(red.xi, red.t / red.t[0], atol=1e-9)
    assert red.deviation < 1e-8


def test_oscillator_reduced_flow_and_turning_point():
    act = ActionField("oscillator", 0.5)
    base = integrate_hamiltonian(act.system(), act.base_state(0.0, 0.0), 0.001, 0.8)
    red = reduced_variational(act, M1, base, 1.0)
    assert red.deviation < 1e-6
    long = integrate_hamiltonian(act.system(), act.base_state(0.0, 0.0), 0.01, 3.0)
    with pytest.raises(ValidityError, match="validity domain"):
        reduced_variational(act, M1, long, 1.0)
    rep = exp_integral_characteristic(act, M1, long)
    assert rep.truncated_at is not None and rep.truncated_at < 1.5


def test_exp_integral_of_focusing_action():
    act = ActionField("focusing", 0.0)
    base = integrate_hamiltonian(act.system(), act.base_state(0.5, 1.0), 0.05, 50.0)
    rep = exp_integral_characteristic(act, M1, base)
    assert np.allclose(rep.log_f, np.log(rep.times), atol=1e-5)
    assert rep.characteristic_number == -rep.exponent
    assert rep.as_dict()["truncated_at"] is None


def test_hyperbolic_exponent_equals_c():
    act = ActionField("hyperbolic", 1.7)
    base = integrate_hamiltonian(act.system(), act.base_state(0.2, 0.0), 0.01, 4.0)
    rep = exp_integral_characteristic(act, M1, base)
    assert rep.exponent == pytest.approx(1.7, rel=1e-10)
    assert not rep.stable
