"""Norms, entropy, the auxiliary operator A, the weight field P and S_P."""

import numpy as np
import pytest

from relfp.grid import PhaseGrid, integrate_phase
from relfp.potentials import double_well, harmonic, v0
from relfp.equilibrium import build_equilibrium, default_radii
from relfp.operators import projection_pi
from relfp.functionals import (
    DiagnosticsRecord,
    LyapunovConfig,
    a_operator,
    build_P,
    dirichlet_form,
    e_functional,
    entropy,
    evaluate_diagnostics,
    h1_norm,
    h_delta,
    l2_norm,
    q_matrix,
    s_p_functional,
    sp_time_derivative_check,
    weighted_gradient_terms,
)
from relfp.solver import SolverConfig, capture_snapshots


def make_eq(V=None, nx=49, npts=193, c=1.0):
    V = V or harmonic()
    rx, rp = default_radii(V, c)
    return build_equilibrium(PhaseGrid.make(rx, rp, nx, npts), V, c)


def smooth_field(eq, seed, amplitude=1.0):
    """Random low-order polynomial times a resolved Gaussian bump."""
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(6)
    X = eq.grid.x.nodes[:, None] / max(eq.grid.x.radius / 3.0, 1.0)
    P = eq.grid.p.nodes[None, :] / 3.0
    poly = a[0] + a[1] * X + a[2] * P + a[3] * X * P + a[4] * X * X + a[5] * P * P
    h = poly * np.exp(-0.5 * (X * X + P * P))
    return amplitude * h / np.max(np.abs(h))


# ---------------------------------------------------------------- norms


def test_l2_norm_basic_values():
    eq = make_eq()
    assert l2_norm(np.zeros(eq.grid.shape), eq) == 0.0
    # f_inf is normalised, so the constant 1 has unit norm
    assert abs(l2_norm(np.ones(eq.grid.shape), eq) - 1.0) <= 1e-12


def test_h1_reduces_to_l2_on_flat_fields():
    eq = make_eq()
    h = np.ones(eq.grid.shape)
    assert abs(h1_norm(h, eq, harmonic()) - 1.0) <= 1e-10
    hs = smooth_field(eq, 3)
    assert h1_norm(hs, eq, harmonic()) >= l2_norm(hs, eq) ** 2


def test_weighted_gradients_nonnegative_and_anisotropic():
    eq = make_eq()
    # a field varying only in x feeds only the x term
    h = np.tanh(eq.grid.x.nodes)[:, None] * np.ones(eq.grid.p.n)[None, :]
    tx, tp = weighted_gradient_terms(h, eq, harmonic())
    assert tx > 0.0
    assert tp <= 1e-20


# -------------------------------------------------------------- entropy


def test_entropy_zero_at_equilibrium():
    eq = make_eq()
    assert abs(entropy(eq.f_inf, eq)) <= 1e-14


def test_entropy_rejects_negative_density():
    eq = make_eq()
    f = eq.f_inf.copy()
    f[10, 20] = -1e-6
    with pytest.raises(ValueError):
        entropy(f, eq)


def test_entropy_csiszar_kullback_pinsker():
    # H(f | f_inf) >= ||f - f_inf||_1^2 / 2 for normalised densities
    eq = make_eq()
    for seed in range(100):
        s = smooth_field(eq, seed, amplitude=0.9)
        f = eq.f_inf * (1.0 + s)
        f = f / integrate_phase(eq.grid, f)
        H = entropy(f, eq)
        tv = integrate_phase(eq.grid, np.abs(f - eq.f_inf))
        assert H >= 0.5 * tv * tv - 1e-10


def test_entropy_quadratic_in_small_shifts():
    eq = make_eq()
    h = smooth_field(eq, 7)
    h = h - integrate_phase(eq.grid, h, eq.f_inf)
    half_norm = 0.5 * integrate_phase(eq.grid, h * h, eq.f_inf)
    for eps in (1e-2, 1e-3):
        H = entropy(eq.f_inf * (1.0 + eps * h), eq)
        assert abs(H / (eps * eps * half_norm) - 1.0) <= 5.0 * eps


# ------------------------------------------------------------ dirichlet


def test_dirichlet_zero_on_momentum_constants():
    eq = make_eq()
    h = np.tanh(eq.grid.x.nodes)[:, None] * np.ones(eq.grid.p.n)[None, :]
    assert dirichlet_form(h, eq) <= 1e-24


def test_dirichlet_positive_on_generic_fields():
    eq = make_eq()
    h = smooth_field(eq, 1)
    assert dirichlet_form(h, eq) > 0.0


# ----------------------------------------------------------- operator A


def test_a_operator_kills_velocity_free_profiles():
    eq = make_eq()
    V = harmonic()
    # x-only profiles carry no velocity moment, nor do p-even fields
    h = np.cos(eq.grid.x.nodes)[:, None] * np.ones(eq.grid.p.n)[None, :]
    assert np.max(np.abs(a_operator(h, eq, V))) <= 1e-10
    h = np.outer(np.sin(eq.grid.x.nodes), eq.grid.p.nodes**2)
    assert np.max(np.abs(a_operator(h, eq, V))) <= 1e-10
    assert np.max(np.abs(a_operator(np.ones(eq.grid.shape), eq, V))) <= 1e-12


def test_a_operator_matches_dense_oracle():
    # same elliptic system assembled from scratch, generic dense solve
    eq = make_eq(nx=41, npts=161)
    V = harmonic()
    n = eq.grid.x.n
    dx = eq.grid.x.spacing
    D = np.zeros((n, n))
    idx = np.arange(1, n - 1)
    D[idx, idx - 1] = -0.5 / dx
    D[idx, idx + 1] = 0.5 / dx
    D[0, :3] = np.array([-1.5, 2.0, -0.5]) / dx
    D[-1, -3:] = np.array([0.5, -2.0, 1.5]) / dx
    wrho = eq.grid.x.weights * eq.rho_inf
    vel = eq.grid.p.nodes / eq.p0
    a_q = eq.grid.p.integrate(eq.maxwellian * vel * vel)
    G = np.diag(wrho) + a_q * D.T @ (wrho[:, None] * D)
    rng = np.random.default_rng(5)
    for _ in range(5):
        h = rng.standard_normal(eq.grid.shape)
        moment = h @ (eq.grid.p.weights * eq.maxwellian * vel)
        u_ref = np.linalg.solve(G, D.T @ (wrho * moment))
        u = a_operator(h, eq, V)
        scale = max(np.max(np.abs(u_ref)), 1e-30)
        assert np.max(np.abs(u - u_ref)) <= 1e-8 * scale


def test_a_operator_resolvent_bound():
    # |<A h, Pi h>| <= ||h|| ||(1 - Pi) h|| / 2
    eq = make_eq(nx=41, npts=161)
    V = harmonic()
    rng = np.random.default_rng(17)
    worst = 0.0
    for _ in range(20):
        h = rng.standard_normal(eq.grid.shape)
        u = a_operator(h, eq, V)
        bar = projection_pi(h, eq)
        cross = abs(np.sum(eq.grid.x.weights * eq.rho_inf * u * bar))
        rest = h - bar[:, None]
        bound = 0.5 * l2_norm(h, eq) * l2_norm(rest, eq)
        worst = max(worst, cross / bound)
    assert worst <= 0.5


# -------------------------------------------------------------- H_delta


def test_h_delta_equals_half_norm_without_velocity_moment():
    eq = make_eq()
    V = harmonic()
    h = np.outer(np.sin(eq.grid.x.nodes), np.exp(-0.1 * eq.grid.p.nodes**2))
    h = h - integrate_phase(eq.grid, h, eq.f_inf)
    expect = 0.5 * integrate_phase(eq.grid, h * h, eq.f_inf)
    assert abs(h_delta(h, 0.1, eq, V) - expect) <= 1e-12 * max(1.0, expect)


def test_h_delta_two_sided_bounds():
    eq = make_eq()
    V = harmonic()
    for delta in (0.05, 0.5, 1.5):
        for seed in range(30):
            h = smooth_field(eq, seed)
            h = h - integrate_phase(eq.grid, h, eq.f_inf)
            n2 = integrate_phase(eq.grid, h * h, eq.f_inf)
            val = h_delta(h, delta, eq, V)
            assert 0.25 * (2.0 - delta) * n2 - 1e-12 <= val
            assert val <= 0.25 * (2.0 + delta) * n2 + 1e-12


def test_h_delta_rejects_bad_delta():
    eq = make_eq()
    h = smooth_field(eq, 0)
    for delta in (0.0, -0.3, 2.0, 2.5):
        with pytest.raises(ValueError):
            h_delta(h, delta, eq, harmonic())


def test_lyapunov_config_validation():
    LyapunovConfig(0.1, 1.0, 0.1)
    with pytest.raises(ValueError):
        LyapunovConfig(2.0, 1.0, 0.1)
    with pytest.raises(ValueError):
        LyapunovConfig(0.1, 0.0, 0.1)
    with pytest.raises(ValueError):
        LyapunovConfig(0.1, 1.0, -0.2)
    with pytest.raises(ValueError):
        LyapunovConfig(0.1, 1.0, 0.1, eta=0.7)


# -------------------------------------------------------- weight field P


def test_build_p_center_values():
    # at x = p = 0 with eps = 1 the matrix is [[2, 1], [1, 2]]
    grid = PhaseGrid.make(6.0, 12.0, 25, 49)
    P = build_P(grid, harmonic(), 1.0)
    center = P.matrices[12, 24]
    assert np.max(np.abs(center - np.array([[2.0, 1.0], [1.0, 2.0]]))) <= 1e-14


def test_build_p_entries_match_formulas():
    grid = PhaseGrid.make(3.0, 10.0, 17, 33)
    V = double_well()
    eps = 0.37
    P = build_P(grid, V, eps)
    w0 = v0(V, grid.x.nodes)[:, None]
    e = np.sqrt(1.0 + grid.p.nodes**2)[None, :]
    assert np.allclose(P.matrices[..., 0, 0], 2.0 * eps**3 / (w0**3 * e**5), rtol=1e-14)
    assert np.allclose(P.matrices[..., 0, 1], eps**2 / (w0**2 * e**2), rtol=1e-14)
    assert np.allclose(P.matrices[..., 1, 1], 2.0 * eps * e / w0, rtol=1e-14)


def test_build_p_positive_and_sandwiched():
    for V in (harmonic(), double_well(), harmonic(4.0)):
        grid = PhaseGrid.make(4.0, 15.0, 33, 65)
        for eps in (0.05, 0.3, 1.0):
            P = build_P(grid, V, eps)
            scale = np.max(np.abs(P.matrices))
            assert P.min_eigenvalues().min() >= -1e-12 * scale
            lo, up = P.sandwich_margins()
            assert min(lo, up) >= -1e-12 * scale
            # spot-check the sandwich with a generic eigensolver
            rng = np.random.default_rng(2)
            for _ in range(20):
                i = rng.integers(grid.x.n)
                j = rng.integers(grid.p.n)
                M = P.matrices[i, j]
                diag = np.diag(np.diag(M))
                assert np.linalg.eigvalsh(M - 0.5 * diag).min() >= -1e-12 * scale
                assert np.linalg.eigvalsh(1.5 * diag - M).min() >= -1e-12 * scale


def test_build_p_time_scaled_starts_at_zero():
    grid = PhaseGrid.make(4.0, 10.0, 17, 33)
    P = build_P(grid, harmonic(), 0.5, time_scaled=True, t=0.0)
    assert np.max(np.abs(P.matrices)) == 0.0
    P1 = build_P(grid, harmonic(), 0.5, time_scaled=True, t=2.0)
    static = build_P(grid, harmonic(), 1.0)
    assert np.allclose(P1.matrices, static.matrices, rtol=1e-13)


def test_build_p_validates_arguments():
    grid = PhaseGrid.make(4.0, 10.0, 17, 33)
    with pytest.raises(ValueError):
        build_P(grid, harmonic(), 0.0)
    with pytest.raises(ValueError):
        build_P(grid, harmonic(), 0.5, time_scaled=True, t=-1.0)
    P = build_P(grid, harmonic(), 0.5)
    with pytest.raises(ValueError):
        P.at_time(1.0)


def test_q_matrix_entries():
    grid = PhaseGrid.make(3.0, 8.0, 9, 17)
    V = double_well()
    q = q_matrix(grid, V)
    e3 = np.sqrt(1.0 + grid.p.nodes**2) ** 3
    assert np.max(np.abs(q[..., 0, 0])) == 0.0
    assert np.allclose(q[..., 0, 1], (1.0 / e3)[None, :], rtol=1e-14)
    assert np.allclose(q[..., 1, 0], -V.hess(grid.x.nodes)[:, None], rtol=1e-14)
    assert np.allclose(q[..., 1, 1], (1.0 - 1.0 / e3)[None, :], rtol=1e-14)


# ------------------------------------------------------------------ S_P


def test_s_p_zero_on_constants():
    eq = make_eq()
    P = build_P(eq.grid, harmonic(), 0.2)
    assert s_p_functional(np.ones(eq.grid.shape), P) <= 1e-24


def test_s_p_between_weighted_gradient_functionals():
    # P11/2 = eps^3 wx and P22/2 = eps wp, so the sandwich gives exact
    # two-sided bounds in terms of the Sobolev gradient terms
    eq = make_eq()
    V = harmonic()
    eps = 0.3
    P = build_P(eq.grid, V, eps)
    for seed in range(20):
        h = smooth_field(eq, seed)
        tx, tp = weighted_gradient_terms(h, eq, V)
        val = s_p_functional(h, P)
        lo = eps**3 * tx + eps * tp
        assert lo - 1e-12 <= val <= 3.0 * lo + 1e-12


def test_e_functional_dominates_scaled_l2():
    eq = make_eq()
    V = harmonic()
    cfg = LyapunovConfig(0.1, 1.4, 0.1)
    assert e_functional(np.zeros(eq.grid.shape), cfg, eq, V) == 0.0
    for seed in range(5):
        h = smooth_field(eq, seed)
        h = h - integrate_phase(eq.grid, h, eq.f_inf)
        l2sq = integrate_phase(eq.grid, h * h, eq.f_inf)
        assert e_functional(h, cfg, eq, V) >= cfg.gamma * l2sq - 1e-12


# --------------------------------------------- d/dt S_P identity checks


def run_snapshots(nx, npts, times, dt=0.0025):
    V = harmonic()
    rx, rp = default_radii(V)
    grid = PhaseGrid.make(rx, rp, nx, npts)
    cfg = SolverConfig(
        dt=dt,
        t_final=max(times),
        ic_x0=0.5,
        ic_p_shift=0.3,
        lyapunov=LyapunovConfig(0.1, 1.0, 0.1),
    )
    return grid, capture_snapshots(cfg, V, grid, times)


def test_sp_check_zero_on_stationary_state():
    eq = make_eq()
    V = harmonic()
    P = build_P(eq.grid, V, 0.1)
    z = np.zeros(eq.grid.shape)
    rep = sp_time_derivative_check([(0.0, z), (0.1, z), (0.2, z)], P, eq, V)
    assert abs(rep.lhs) <= 1e-12
    assert abs(rep.rhs) <= 1e-12


def test_sp_check_rejects_uneven_spacing():
    eq = make_eq()
    V = harmonic()
    P = build_P(eq.grid, V, 0.1)
    z = np.zeros(eq.grid.shape)
    with pytest.raises(ValueError):
        sp_time_derivative_check([(0.0, z), (0.1, z), (0.3, z)], P, eq, V)
    with pytest.raises(ValueError):
        sp_time_derivative_check([(0.0, z), (0.1, z)], P, eq, V)


def test_sp_derivative_identity_converges_with_grid():
    # the residual is the spatial discretisation floor: second-order decay
    V = harmonic()
    times = (0.95, 1.0, 1.05)
    rels = {}
    for nx, npts, tol in ((64, 128, 0.12), (96, 192, 0.075)):
        grid, snaps = run_snapshots(nx, npts, times)
        eq = build_equilibrium(grid, V)
        P = build_P(grid, V, 0.1)
        rep = sp_time_derivative_check(snaps, P, eq, V)
        assert rep.relative_residual <= tol
        rels[nx] = rep.relative_residual
    assert rels[64] / rels[96] >= 1.4


def test_sp_derivative_identity_time_scaled():
    V = harmonic()
    grid, snaps = run_snapshots(64, 128, (0.95, 1.0, 1.05))
    eq = build_equilibrium(grid, V)
    P = build_P(grid, V, 0.1, time_scaled=True, t=1.0)
    rep = sp_time_derivative_check(snaps, P, eq, V)
    assert rep.relative_residual <= 0.10


def test_p_derivatives_match_numeric_differentiation():
    # second-order agreement with np.gradient of the P entries nails all
    # nine analytic derivative formulas individually
    from relfp.functionals import _p_derivatives

    V = double_well()
    for time_scaled, t in ((False, 0.0), (True, 1.7)):
        errs = []
        for nx_nodes in (201, 401):
            grid = PhaseGrid.make(2.0, 6.0, nx_nodes, 2 * nx_nodes - 1)
            P = build_P(grid, V, 0.21, time_scaled=time_scaled, t=t)
            dxP, dpP, dpg = _p_derivatives(grid, V, 0.21, time_scaled, t)
            e = np.sqrt(1.0 + grid.p.nodes**2)[None, :]
            worst = np.zeros(3)
            for k, entry in enumerate(P.entries()):
                gx = np.gradient(entry, grid.x.spacing, axis=0, edge_order=2)
                gp = np.gradient(entry, grid.p.spacing, axis=1, edge_order=2)
                gg = np.gradient(e * gp, grid.p.spacing, axis=1, edge_order=2)
                core = np.s_[2:-2, 2:-2]
                for r, (num, ana) in enumerate(((gx, dxP[k]), (gp, dpP[k]), (gg, dpg[k]))):
                    s = max(np.max(np.abs(ana)), 1e-14)
                    worst[r] = max(worst[r], np.max(np.abs(num - ana)[core]) / s)
            errs.append(worst)
        coarse, fine = errs
        assert np.all(fine <= 0.05)
        assert np.all(coarse / np.maximum(fine, 1e-15) >= 3.0)


# ---------------------------------------------------------- diagnostics


def test_diagnostics_record_validation():
    good = DiagnosticsRecord(
        mass=1.0, l2=2.0, h1=2.5, entropy=1.0, dirichlet=0.3,
        s_p=0.1, h_delta=2.0, e_func=6.1,
        grad_x_weighted=0.2, grad_p_weighted=0.3,
    )
    good.validate(0.5)
    with pytest.raises(ValueError):
        DiagnosticsRecord(
            mass=1.0, l2=2.0, h1=2.5, entropy=1.0, dirichlet=0.3,
            s_p=0.1, h_delta=3.5, e_func=6.1,
            grad_x_weighted=0.2, grad_p_weighted=0.3,
        ).validate(0.5)
    with pytest.raises(ValueError):
        DiagnosticsRecord(
            mass=1.0, l2=-2.0, h1=2.5, entropy=1.0, dirichlet=0.3,
            s_p=0.1, h_delta=2.0, e_func=6.1,
            grad_x_weighted=0.2, grad_p_weighted=0.3,
        ).validate(0.5)
    with pytest.raises(ValueError):
        DiagnosticsRecord(
            mass=np.nan, l2=2.0, h1=2.5, entropy=1.0, dirichlet=0.3,
            s_p=0.1, h_delta=2.0, e_func=6.1,
            grad_x_weighted=0.2, grad_p_weighted=0.3,
        ).validate(0.5)


def test_evaluate_diagnostics_consistency():
    eq = make_eq()
    V = harmonic()
    cfg = LyapunovConfig(0.1, 1.0, 0.1)
    h = smooth_field(eq, 9, amplitude=0.5)
    h = h - integrate_phase(eq.grid, h, eq.f_inf)
    row = evaluate_diagnostics(h, eq, V, cfg)
    row.validate(cfg.delta)
    assert abs(row.mass - integrate_phase(eq.grid, eq.f_inf * (1.0 + h))) <= 1e-13
    assert abs(row.l2 - l2_norm(h, eq)) <= 1e-13
    assert abs(row.e_func - (cfg.gamma * row.l2**2 + row.h_delta + row.s_p)) <= 1e-12
    P = build_P(eq.grid, V, cfg.epsilon)
    assert abs(row.s_p - s_p_functional(h, P)) <= 1e-13
