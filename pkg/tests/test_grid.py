import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chetaev_lab.grid import (ComplexField, Grid, GridError, Metric, derivative, grid_errors,
                              highest_density_region, inner_product, integrate, stencil_derivatives)


def test_periodic_excludes_upper_end():
    g = Grid.line(0.0, 1.0, 10)
    assert g.spacing == (0.1,)
    assert g.axis()[-1] == pytest.approx(0.9)


def test_box_includes_both_ends():
    g = Grid.line(0.0, 1.0, 11, "box")
    assert g.spacing == (0.1,)
    assert g.axis()[-1] == pytest.approx(1.0)


def test_grid_errors_are_collected():
    errs = grid_errors((1.0,), (0.0,), (4,), "torus")
    assert len(errs) == 3
    with pytest.raises(GridError, match="points >= 8"):
        Grid.line(0, 1, 4)


def test_two_dimensional_shape_and_volume():
    g = Grid((0, 0), (2, 4), (8, 16))
    assert g.shape == (8, 16) and g.size == 128
    assert g.cell_volume == pytest.approx(0.25 * 0.25)
    assert [m.shape for m in g.mesh()] == [(8, 16), (8, 16)]


def test_metric_inverse_masses():
    g = Grid((0, 0), (1, 1), (8, 8))
    m = Metric.for_grid(g, (2.0, 4.0))
    assert m.g == (0.5, 0.25)
    with pytest.raises(ValueError):
        Metric((0.0,))


def test_spectral_derivative_is_exact_for_trig():
    g = Grid.line(0, 2 * np.pi, 32)
    x = g.axis()
    assert np.allclose(derivative(np.sin(3 * x), g, 0, 1), 3 * np.cos(3 * x), atol=1e-12)
    assert np.allclose(derivative(np.sin(3 * x), g, 0, 2), -9 * np.sin(3 * x), atol=1e-11)


def test_box_second_difference_exact_on_quadratics():
    g = Grid.line(-1, 2, 31, "box")
    x = g.axis()
    assert np.allclose(derivative(x**2, g, 0, 2), 2.0, atol=1e-10)
    assert np.allclose(derivative(x**2, g, 0, 1), 2 * x, atol=1e-10)


def test_box_derivative_second_order_convergence():
    # x^2 is differentiated exactly, so the order is measured on a transcendental function
    errs = []
    for n in (41, 81, 161):
        g = Grid.line(0, 1, n, "box")
        x = g.axis()
        errs.append(np.max(np.abs(derivative(np.exp(x), g, 0, 2) - np.exp(x))[1:-1]))
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(4, rel=0.05)


def test_integrate_gaussian():
    for g in (Grid.line(-10, 10, 128), Grid.line(-10, 10, 257, "box")):
        x = g.axis()
        assert integrate(np.exp(-x**2), g) == pytest.approx(np.sqrt(np.pi), rel=1e-10)


def test_stencil_derivatives_skip_invalid_nodes():
    g = Grid.line(0, 1, 11, "box")
    f = g.axis() ** 2
    valid = np.ones(11, bool)
    valid[5] = False
    d1, d2 = stencil_derivatives(f, g, 0, valid)
    assert np.isnan(d2[[0, 4, 5, 6, 10]]).all()
    assert np.allclose(d2[[1, 2, 3, 7, 8, 9]], 2.0)
    assert np.allclose(d1[3], 2 * g.axis()[3])


def test_highest_density_region_holds_fraction():
    g = Grid.line(-10, 10, 256)
    d = np.exp(-g.axis() ** 2)
    reg = highest_density_region(d, 0.8)
    held = d[reg].sum() / d.sum()
    assert 0.8 <= held < 0.8 + d.max() / d.sum()


def test_field_normalization_and_nodes():
    g = Grid.line(-5, 5, 64)
    psi = ComplexField(g, np.exp(-g.axis() ** 2) * g.axis())
    assert not psi.is_normalized()
    n = psi.normalized()
    assert n.is_normalized(1e-12)
    assert n.node_mask()[32]  # x = 0


def test_inner_product_rejects_mismatched_grids():
    a = ComplexField(Grid.line(0, 1, 8), np.ones(8))
    b = ComplexField(Grid.line(0, 2, 8), np.ones(8))
    with pytest.raises(GridError):
        inner_product(a, b)


coeffs = st.lists(st.floats(-3, 3), min_size=4, max_size=4)


def _trig(x, c, L):
    k = 2 * np.pi / L
    return c[0] * np.sin(k * x) + c[1] * np.cos(2 * k * x) + c[2] * np.sin(3 * k * x) + c[3]


@settings(max_examples=30, deadline=None)
@given(coeffs, coeffs, st.floats(-2, 2))
def test_derivative_is_linear(c1, c2, a):
    g = Grid.line(0, 3.0, 32)
    x = g.axis()
    f, h = _trig(x, c1, 3.0), _trig(x, c2, 3.0)
    for order in (1, 2):
        lhs = derivative(a * f + h, g, 0, order)
        rhs = a * derivative(f, g, 0, order) + derivative(h, g, 0, order)
        assert np.allclose(lhs, rhs, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(coeffs, coeffs)
def test_summation_by_parts_on_periodic_grid(c1, c2):
    g = Grid.line(0, 3.0, 32)
    x = g.axis()
    f, h = _trig(x, c1, 3.0), _trig(x, c2, 3.0)
    lhs = integrate(f * derivative(h, g, 0, 1), g)
    rhs = -integrate(derivative(f, g, 0, 1) * h, g)
    assert lhs == pytest.approx(rhs, abs=1e-10)
