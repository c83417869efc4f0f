"""Grid, quadrature and differencing contracts."""

import numpy as np
import pytest

from relfp.grid import (
    AxisGrid,
    PhaseField,
    PhaseGrid,
    gradient_p,
    gradient_x,
    integrate_phase,
    radius_for_tail,
)


def test_axis_invariants():
    ax = AxisGrid.make(3.0, 31)
    assert np.all(np.diff(ax.nodes) > 0)
    assert np.max(np.abs(ax.nodes)) <= 3.0 + 1e-15
    assert ax.spacing > 0
    assert abs(np.sum(ax.weights) - 6.0) <= 1e-12
    assert ax.boundary_kind == "no_flux"


def test_axis_validation():
    with pytest.raises(ValueError):
        AxisGrid.make(3.0, 3)
    with pytest.raises(ValueError):
        AxisGrid.make(-1.0, 31)
    with pytest.raises(ValueError):
        AxisGrid.make(3.0, 31, boundary_kind="periodic")


def test_axis_integrate_constant_and_linear():
    ax = AxisGrid.make(2.5, 41)
    assert abs(ax.integrate(np.ones(ax.n)) - 5.0) <= 1e-12
    # trapezoid is exact on degree <= 1
    assert abs(ax.integrate(1.0 + 0.3 * ax.nodes) - 5.0) <= 1e-12
    with pytest.raises(ValueError):
        ax.integrate(np.ones(ax.n - 1))


def test_integrate_phase_constant_area():
    g = PhaseGrid.make(1.0, 1.0, 17, 19)
    one = np.ones(g.shape)
    assert abs(integrate_phase(g, one, one) - 4.0) <= 1e-12
    assert integrate_phase(g, np.zeros(g.shape)) == 0.0


def test_integrate_phase_gaussian_oracle():
    # int e^{-x^2-p^2} over the plane = pi; tails at R=8 are ~1e-28
    g = PhaseGrid.make(8.0, 8.0, 161, 161)
    fx = np.exp(-g.x.nodes**2)
    fp = np.exp(-g.p.nodes**2)
    val = integrate_phase(g, np.outer(fx, fp))
    assert abs(val - np.pi) <= 1e-10


def test_integrate_phase_bilinear_symmetric():
    g = PhaseGrid.make(2.0, 2.0, 13, 15)
    rng = np.random.default_rng(0)
    a = rng.standard_normal(g.shape)
    b = rng.standard_normal(g.shape)
    assert abs(integrate_phase(g, a, b) - integrate_phase(g, b, a)) <= 1e-13
    lin = integrate_phase(g, 2.0 * a + b) - 2.0 * integrate_phase(g, a) - integrate_phase(g, b)
    assert abs(lin) <= 1e-13


def test_gradients_exact_on_low_degree():
    g = PhaseGrid.make(3.0, 2.0, 21, 23)
    X = np.broadcast_to(g.x.nodes[:, None], g.shape)
    P = np.broadcast_to(g.p.nodes[None, :], g.shape)
    assert np.max(np.abs(gradient_x(g, X) - 1.0)) <= 1e-12
    assert np.max(np.abs(gradient_p(g, P**2) - 2.0 * P)) <= 1e-12


def test_gradient_convergence_order():
    errs = []
    for n in (41, 81):
        g = PhaseGrid.make(3.0, 2.0, n, 7)
        f = np.sin(g.x.nodes)[:, None] * np.ones((1, 7))
        df = np.cos(g.x.nodes)[:, None] * np.ones((1, 7))
        errs.append(np.max(np.abs(gradient_x(g, f) - df)))
    ratio = errs[0] / errs[1]
    assert 3.5 <= ratio <= 4.6
    order = np.log2(ratio)
    assert order >= 1.9


def test_phase_field_validation():
    g = PhaseGrid.make(1.0, 1.0, 5, 6)
    f = PhaseField(g, np.zeros(g.shape), kind="absolute_density")
    assert f.values.shape == g.shape
    with pytest.raises(ValueError):
        PhaseField(g, np.zeros((5, 5)))
    with pytest.raises(ValueError):
        PhaseField(g, np.zeros(g.shape), kind="mystery")
    bad = np.zeros(g.shape)
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        PhaseField(g, bad)
    c = f.copy()
    c.values[0, 0] = 1.0
    assert f.values[0, 0] == 0.0


def test_radius_for_tail_exponential():
    R = radius_for_tail(lambda r: np.exp(-r), tol=1e-13)
    assert np.exp(-R) <= 1e-13
    # minimality: just inside the returned radius the tail still exceeds tol
    assert np.exp(-(R - 0.01)) > 1e-13
