"""Collision, transport, projection and full right-hand side contracts."""

import numpy as np
import pytest

from relfp.grid import PhaseGrid, integrate_phase
from relfp.potentials import harmonic, zero_potential
from relfp.equilibrium import build_equilibrium, default_radii
from relfp.operators import (
    DiffusionTensorField,
    apply_collision,
    apply_rhs,
    apply_transport,
    collision_tridiagonal,
    diffusion_profile,
    log_mean,
    pi_complement,
    projection_pi,
)


def make_eq(V=None, nx=65, npts=257, c=1.0):
    V = V or harmonic()
    rx, rp = default_radii(V, c)
    return build_equilibrium(PhaseGrid.make(rx, rp, nx, npts), V, c)


def weighted_dot(eq, a, b):
    return integrate_phase(eq.grid, a * b, eq.f_inf)


def interior_noise(shape, seed, margin=2):
    field = np.zeros(shape)
    rng = np.random.default_rng(seed)
    field[margin:-margin, margin:-margin] = rng.standard_normal(
        (shape[0] - 2 * margin, shape[1] - 2 * margin)
    )
    return field


def test_log_mean_stable():
    a = np.array([1.0, 2.0, 1e-300, 5.0])
    b = np.array([1.0, 2.0 * (1 + 1e-9), 1e-300, 20.0])
    lm = log_mean(a, b)
    assert abs(lm[0] - 1.0) <= 1e-15
    assert abs(lm[1] - 2.0) <= 1e-8
    assert lm[2] == 1e-300
    assert abs(lm[3] - 15.0 / np.log(4.0)) <= 1e-12


def test_collision_annihilates_constants():
    eq = make_eq()
    out = apply_collision(np.ones(eq.grid.shape), eq)
    assert np.max(np.abs(out)) <= 1e-13


def test_collision_on_p_matches_symbolic():
    errs = []
    for npts in (257, 513):
        eq = make_eq(npts=npts)
        p = eq.grid.p.nodes
        L = apply_collision(np.tile(p, (eq.grid.x.n, 1)), eq)
        exact = p / np.sqrt(1 + p * p) - p
        inner = np.abs(p) <= 8.0
        errs.append(np.max(np.abs(L[:, inner] - exact[None, inner])))
        assert errs[-1] <= 0.6 * eq.grid.p.spacing ** 2
    assert errs[0] / errs[1] >= 3.5


def test_collision_symmetric_and_conservative():
    eq = make_eq(nx=33, npts=129)
    for flux in ("chang_cooper", "centered"):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            h = rng.standard_normal(eq.grid.shape)
            g = rng.standard_normal(eq.grid.shape)
            Lh = apply_collision(h, eq, flux)
            Lg = apply_collision(g, eq, flux)
            nh = np.sqrt(weighted_dot(eq, h, h))
            ng = np.sqrt(weighted_dot(eq, g, g))
            assert abs(weighted_dot(eq, Lh, g) - weighted_dot(eq, h, Lg)) <= 1e-11 * nh * ng
            assert abs(integrate_phase(eq.grid, Lh, eq.f_inf)) <= 1e-12 * nh
            assert weighted_dot(eq, Lh, h) <= 1e-13 * nh * nh


def test_collision_dirichlet_identity():
    # <Lh, h> equals minus the face-form Dirichlet energy exactly
    eq = make_eq(nx=33, npts=129)
    b, _ = collision_tridiagonal(eq.grid.p, eq.maxwellian, eq.light_speed)
    rng = np.random.default_rng(11)
    h = rng.standard_normal(eq.grid.shape)
    lhs = weighted_dot(eq, apply_collision(h, eq), h)
    face = b * np.diff(h, axis=1) ** 2
    dirichlet = float(np.sum(eq.grid.x.weights * eq.rho_inf * np.sum(face, axis=1)))
    assert abs(lhs + dirichlet) <= 1e-10 * max(1.0, dirichlet)


def test_collision_stationary_on_sampled_maxwellian():
    eq = make_eq()
    h = eq.maxwellian[None, :] / eq.maxwellian[None, :]  # constant one
    out = apply_collision(np.broadcast_to(h, eq.grid.shape).copy(), eq)
    assert np.max(np.abs(out)) <= 1e-13


def test_transport_kernel_and_linear():
    eq = make_eq()
    assert np.max(np.abs(apply_transport(np.ones(eq.grid.shape), eq))) <= 1e-13
    X = np.broadcast_to(eq.grid.x.nodes[:, None], eq.grid.shape).copy()
    got = apply_transport(X, eq)
    p = eq.grid.p.nodes
    target = np.broadcast_to((p / np.sqrt(1 + p * p))[None, :], eq.grid.shape)
    assert np.max(np.abs(got - target)) <= 1e-12
    up = apply_transport(X, eq, scheme="upwind")
    assert np.max(np.abs(up - target)) <= 1e-12


def test_transport_skew_on_interior_fields():
    # central stencil is skew-adjoint in the flat product away from edges
    eq = make_eq(nx=41, npts=121)
    cell = eq.grid.x.spacing * eq.grid.p.spacing
    for seed in range(10):
        a = interior_noise(eq.grid.shape, seed)
        b = interior_noise(eq.grid.shape, 100 + seed)
        Ta = apply_transport(a, eq)
        Tb = apply_transport(b, eq)
        na = np.sqrt(cell * np.sum(a * a))
        nb = np.sqrt(cell * np.sum(b * b))
        resid = abs(cell * np.sum(Ta * b) + cell * np.sum(a * Tb))
        assert resid <= 1e-9 * na * nb


def test_projection_contracts():
    eq = make_eq(nx=41, npts=121)
    u = np.sin(eq.grid.x.nodes)
    lifted = np.broadcast_to(u[:, None], eq.grid.shape).copy()
    assert np.max(np.abs(projection_pi(lifted, eq) - u)) <= 1e-12
    rng = np.random.default_rng(5)
    h = rng.standard_normal(eq.grid.shape)
    once = projection_pi(h, eq)
    twice = projection_pi(np.broadcast_to(once[:, None], eq.grid.shape).copy(), eq)
    assert np.max(np.abs(twice - once)) <= 1e-14 * max(1.0, np.max(np.abs(once)))
    # Pi T Pi = 0: the momentum average of velocity vanishes by symmetry
    t_of_lift = apply_transport(lifted, eq)
    assert np.max(np.abs(projection_pi(t_of_lift, eq))) <= 1e-12
    # complement really removes the projected part
    assert np.max(np.abs(projection_pi(pi_complement(h, eq), eq))) <= 1e-13


def test_projection_symmetric():
    eq = make_eq(nx=33, npts=65)
    rng = np.random.default_rng(8)
    h = rng.standard_normal(eq.grid.shape)
    g = rng.standard_normal(eq.grid.shape)
    Ph = np.broadcast_to(projection_pi(h, eq)[:, None], eq.grid.shape)
    Pg = np.broadcast_to(projection_pi(g, eq)[:, None], eq.grid.shape)
    assert abs(weighted_dot(eq, Ph, g) - weighted_dot(eq, h, Pg)) <= 1e-12


def test_rhs_equilibrium_fixed_point():
    eq = make_eq()
    out = apply_rhs(eq.f_inf, eq)
    assert np.max(np.abs(out)) <= 1e-13
    # centered flux is only second-order accurate on the equilibrium
    res = []
    for nx, npts in ((65, 257), (129, 513)):
        eqr = make_eq(nx=nx, npts=npts)
        res.append(np.max(np.abs(apply_rhs(eqr.f_inf, eqr, flux="centered"))))
    assert res[0] > 1e-6
    assert res[0] / res[1] >= 3.0


def test_rhs_mass_conservation():
    eq = make_eq()
    rng = np.random.default_rng(7)
    f = eq.f_inf * (1.0 + np.clip(0.3 * rng.standard_normal(eq.grid.shape), -0.9, 0.9))
    for flux in ("chang_cooper", "centered"):
        assert abs(integrate_phase(eq.grid, apply_rhs(f, eq, flux=flux))) <= 1e-12


def test_rhs_homogeneous_reduction():
    V = zero_potential()
    g = PhaseGrid.make(5.0, default_radii(harmonic())[1], 33, 257)
    eq = build_equilibrium(g, V)
    phi = np.exp(-np.sqrt(1 + g.p.nodes**2)) * (1 + 0.3 * np.sin(g.p.nodes))
    phi /= g.p.integrate(phi)
    f = np.tile(phi, (g.x.n, 1))
    out = apply_rhs(f, eq)
    hom = apply_collision(np.tile(phi / eq.maxwellian, (g.x.n, 1)), eq) * eq.maxwellian[None, :]
    assert np.max(np.abs(out - hom)) <= 1e-13


def test_rhs_shape_and_scheme_validation():
    eq = make_eq(nx=17, npts=33)
    with pytest.raises(ValueError):
        apply_rhs(np.zeros((3, 3)), eq)
    with pytest.raises(ValueError):
        apply_rhs(eq.f_inf, eq, flux="exotic")
    with pytest.raises(ValueError):
        apply_transport(eq.f_inf, eq, scheme="exotic")


def test_diffusion_tensor_identities():
    rng = np.random.default_rng(2)
    for d in (1, 2, 3, 5):
        p = rng.standard_normal((200, d)) * rng.uniform(0.1, 10, (200, 1))
        field = DiffusionTensorField.from_momenta(p)
        eye = np.eye(d)
        prod = field.matrices @ field.inverses
        e = np.sqrt(1 + np.sum(p * p, axis=1))
        # rounding in the product scales with the matrix magnitude p0
        assert np.max(np.abs(prod - eye)) <= 1e-14 * np.max(e) ** 2
        assert np.max(np.abs(field.matrices - np.swapaxes(field.matrices, 1, 2))) == 0.0
        w = np.linalg.eigvalsh(field.matrices)
        assert np.max(np.abs(w[:, -1] - e)) <= 1e-12 * np.max(e)
        if d > 1:
            # 1/p0 eigenvalue has multiplicity d - 1, orthogonal to p
            assert np.max(np.abs(w[:, 0] - 1.0 / e)) <= 1e-12
    # d = 1 reduces to the scalar profile p0
    pline = np.linspace(-5, 5, 41)
    field = DiffusionTensorField.from_momenta(pline[:, None])
    assert np.max(np.abs(field.matrices[:, 0, 0] - diffusion_profile(pline))) <= 1e-14
