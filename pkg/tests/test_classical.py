import numpy as np
import pytest

from chetaev_lab.classical import (HamiltonianSystem, canonical_basis, characteristic_numbers,
                                   integrate_hamiltonian, integrate_variational, linear_fit, poincare_invariant,
                                   symplectic_pairing)
from chetaev_lab.grid import ClassicalState, Metric, VariationalState
from chetaev_lab.potentials import Potential

HO = HamiltonianSystem(Potential("harmonic"), Metric((1.0,)), 1)


def _start(q=1.0, p=0.0, t=0.0):
    return ClassicalState(np.array([q]), np.array([p]), t)


def test_oscillator_orbit_and_energy():
    tr = integrate_hamiltonian(HO, _start(), 0.01, 10.0)
    assert np.max(np.abs(tr.q[:, 0] - np.cos(tr.t))) < 1e-8
    assert np.max(np.abs(tr.energy - 0.5)) < 1e-9


def test_fourth_order_convergence():
    errs = []
    for dt in (0.1, 0.05):
        tr = integrate_hamiltonian(HO, _start(), dt, 10.0)
        errs.append(abs(tr.q[-1, 0] - np.cos(10.0)))
    assert errs[0] / errs[1] == pytest.approx(16, rel=0.1)


def test_variational_matches_finite_difference():
    sys = HamiltonianSystem(Potential("harmonic", omega=1.3, mass=(2.0,)), Metric((2.0,)), 1)
    eps = 1e-6
    a = integrate_hamiltonian(sys, _start(0.5, 0.2), 0.01, 5.0)
    b = integrate_hamiltonian(sys, _start(0.5 + eps, 0.2), 0.01, 5.0)
    var = integrate_variational(sys, a, VariationalState(np.array([1.0]), np.array([0.0]), 0.0))
    fd = (b.q - a.q) / eps
    assert np.max(np.abs(var.xi - fd)) < 1e-6


def test_poincare_invariant_conserved():
    for pot, dt, t in ((Potential("harmonic"), 0.01, 50.0), (Potential("inverted_harmonic"), 0.001, 5.0)):
        sys = HamiltonianSystem(pot, Metric((1.0,)), 1)
        base = integrate_hamiltonian(sys, _start(0.3), dt, t)
        u, v = (integrate_variational(sys, base, b) for b in canonical_basis(1))
        inv = poincare_invariant(u, v)
        assert inv.c[0] == 1.0
        assert inv.drift < 1e-9


def test_pairing_is_antisymmetric():
    rng = np.random.default_rng(0)
    a, b, c, d = rng.normal(size=(4, 3))
    assert symplectic_pairing(a, b, c, d) == pytest.approx(-symplectic_pairing(c, d, a, b))


def test_two_dimensional_basis():
    basis = canonical_basis(2)
    assert len(basis) == 4
    assert basis[2].eta.tolist() == [1.0, 0.0]


def test_variational_must_start_with_base():
    base = integrate_hamiltonian(HO, _start(), 0.1, 1.0)
    with pytest.raises(ValueError, match="does not start"):
        integrate_variational(HO, base, VariationalState(np.array([1.0]), np.array([0.0]), 0.5))


def test_degenerate_basis_rejected():
    base = integrate_hamiltonian(HO, _start(), 0.1, 5.0)
    v = VariationalState(np.array([1.0]), np.array([0.0]), 0.0)
    with pytest.raises(ValueError, match="degenerate"):
        characteristic_numbers(HO, base, [v, v])


def test_oscillator_exponents_vanish():
    base = integrate_hamiltonian(HO, _start(), 0.01, 100.0)
    rep = characteristic_numbers(HO, base, canonical_basis(1))
    assert rep.stable and rep.pair_inequality_holds
    assert np.array_equal(rep.characteristic, -rep.modern)


def test_inverted_exponents_and_renormalization():
    sys = HamiltonianSystem(Potential("inverted_harmonic", omega=2.0), Metric((1.0,)), 1)
    base = integrate_hamiltonian(sys, _start(0.0), 1e-3, 10.0)
    # growth e^20 forces several renormalizations
    rep = characteristic_numbers(sys, base, canonical_basis(1))
    assert sorted(rep.modern) == pytest.approx([-2.0, 2.0], rel=1e-3)
    assert not rep.stable
    assert rep.pair_inequality_holds
    # renormalizing late loses the contracting direction to round-off
    late = characteristic_numbers(sys, base, canonical_basis(1), renorm_threshold=1e8)
    assert abs(min(late.modern) + 2.0) > 1e-2


def test_linear_fit_window():
    t = np.linspace(0, 10, 101)
    y = np.where(t < 5, 0.0, 3 * (t - 5))
    slope, resid, t0, t1 = linear_fit(t, y, 0.5)
    assert slope == pytest.approx(3.0) and resid < 1e-12 and (t0, t1) == (5.0, 10.0)
    with pytest.raises(ValueError):
        linear_fit(t, y, 1.5)
