"""Scalar functionals driving the decay estimates.

Everything here is a quadrature of the relative density h (or the
absolute density f) against the equilibrium weight: the plain and
weighted Sobolev norms, the Boltzmann entropy, the Dirichlet form of the
collision operator, the shifted quadratic functional H_delta built from
the auxiliary elliptic operator A, the gradient functional S_P with its
2d x 2d weight matrix field, and the combined Lyapunov functional E.

Two discrete-exactness choices matter.  The Dirichlet form is summed
over momentum faces with the same conductances as the collision stencil,
so <L h, h> = -dirichlet_form(h) holds to rounding, not just to O(dp^2).
The A operator is realised as (I + S*S)^{-1} S* where S is a fixed
discretisation of the projected transport and S* its exact adjoint in
the discrete weighted product; the operator-norm bound |<A h, h>| <=
||h||^2 / 2 is then inherited algebraically, so the two-sided bounds on
H_delta hold for arbitrary grid fields instead of only asymptotically.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg
from scipy.special import xlogy

from .equilibrium import EquilibriumState, build_equilibrium
from .grid import PhaseGrid, _diff_matrix, gradient_p, gradient_x, integrate_phase
from .operators import collision_tridiagonal, projection_pi
from .potentials import PotentialSpec, v0 as _v0

__all__ = [
    "DiagnosticsRecord",
    "LyapunovConfig",
    "WeightMatrixField",
    "SpDerivativeReport",
    "l2_norm",
    "h1_norm",
    "entropy",
    "dirichlet_form",
    "a_operator",
    "h_delta",
    "build_P",
    "q_matrix",
    "s_p_functional",
    "e_functional",
    "sp_time_derivative_check",
    "evaluate_diagnostics",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DiagnosticsRecord:
    """One row of trajectory diagnostics (time itself lives with the solver)."""

    mass: float
    l2: float
    h1: float
    entropy: float
    dirichlet: float
    s_p: float
    h_delta: float
    e_func: float
    grad_x_weighted: float
    grad_p_weighted: float

    FIELDS = (
        "mass",
        "l2",
        "h1",
        "entropy",
        "dirichlet",
        "s_p",
        "h_delta",
        "e_func",
        "grad_x_weighted",
        "grad_p_weighted",
    )

    def validate(self, delta: float) -> None:
        vals = [getattr(self, name) for name in self.FIELDS]
        if not all(np.isfinite(vals)):
            raise ValueError(f"non-finite diagnostics: {vals}")
        for name in ("l2", "h1", "s_p", "dirichlet", "grad_x_weighted", "grad_p_weighted"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        lo = 0.25 * (2.0 - delta) * self.l2**2
        hi = 0.25 * (2.0 + delta) * self.l2**2
        slack = 1e-12 * max(1.0, self.l2**2)
        if not (lo - slack <= self.h_delta <= hi + slack):
            raise ValueError(f"h_delta {self.h_delta} outside [{lo}, {hi}]")


@dataclass(frozen=True)
class LyapunovConfig:
    """Parameters (delta, gamma, epsilon, eta) of the Lyapunov functional E.

    delta must additionally stay below the delta0 threshold computed by
    the constants module; that comparison happens where delta0 is known
    (the certification path), not here.
    """

    delta: float
    gamma: float
    epsilon: float
    eta: float = 2.0 / 3.0

    def __post_init__(self):
        if not 0.0 < self.delta < 2.0:
            raise ValueError("delta must lie in (0, 2)")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not 0.0 < self.eta <= 2.0 / 3.0:
            raise ValueError("eta must lie in (0, 2/3]")


def l2_norm(h, eq: EquilibriumState) -> float:
    """Equilibrium-weighted L2 norm of a relative density."""
    h = np.asarray(h, dtype=float)
    eq.grid.check_field(h)
    return float(np.sqrt(max(integrate_phase(eq.grid, h * h, eq.f_inf), 0.0)))


def h1_norm(h, eq: EquilibriumState, V: PotentialSpec) -> float:
    """Squared weighted Sobolev norm ||h||^2 + weighted gradient terms.

    In one dimension the x-weight matrix V0^-3 p0^-3 (I - p p/p0^2)
    collapses to the scalar V0^-3 p0^-5 and the p-weight V0^-1 p0^-1
    (I + p p) to p0/V0.
    """
    gx2, gp2 = weighted_gradient_terms(h, eq, V)
    h = np.asarray(h, dtype=float)
    return float(integrate_phase(eq.grid, h * h, eq.f_inf) + gx2 + gp2)


def weighted_gradient_terms(h, eq: EquilibriumState, V: PotentialSpec) -> tuple[float, float]:
    """The two anisotropic gradient functionals of the Sobolev norm."""
    h = np.asarray(h, dtype=float)
    eq.grid.check_field(h)
    w0 = _v0(V, eq.grid.x.nodes)
    e = eq.p0
    gx = gradient_x(eq.grid, h)
    gp = gradient_p(eq.grid, h)
    wx = np.outer(1.0 / w0**3, 1.0 / e**5)
    wp = np.outer(1.0 / w0, e)
    tx = integrate_phase(eq.grid, gx * gx * wx, eq.f_inf)
    tp = integrate_phase(eq.grid, gp * gp * wp, eq.f_inf)
    return float(max(tx, 0.0)), float(max(tp, 0.0))


def entropy(f, eq: EquilibriumState) -> float:
    """Relative entropy int f log(f/f_inf) of an absolute density."""
    f = np.asarray(f, dtype=float)
    eq.grid.check_field(f)
    if f.min() < -1e-12:
        raise ValueError(f"density has negative part {f.min()}")
    f = np.clip(f, 0.0, None)
    val = integrate_phase(eq.grid, xlogy(f, f / eq.f_inf))
    return float(val)


def dirichlet_form(h, eq: EquilibriumState, flux: str = "chang_cooper") -> float:
    """Momentum Dirichlet energy, summed over the collision faces.

    Built from the identical face conductances as apply_collision, so
    the summation-by-parts identity <L h, h> = -dirichlet_form(h) is
    exact for any grid field.
    """
    h = np.asarray(h, dtype=float)
    eq.grid.check_field(h)
    b, _ = collision_tridiagonal(eq.grid.p, eq.maxwellian, eq.light_speed, flux)
    face = b * np.diff(h, axis=1) ** 2
    return float(np.sum(eq.grid.x.weights * eq.rho_inf * np.sum(face, axis=1)))


def _velocity_moment(h, eq):
    # int (p/p0) h M dp at each x node
    w = eq.grid.p.weights * eq.maxwellian * (eq.grid.p.nodes / eq.p0)
    return h @ w


def _a_system(eq):
    """Weighted stiffness G = diag(w rho) + a Dc^T diag(w rho) Dc and its pieces."""
    n = eq.grid.x.n
    dc = _diff_matrix(n, eq.grid.x.spacing)
    wrho = eq.grid.x.weights * eq.rho_inf
    moment2 = eq.grid.p.integrate(eq.maxwellian * (eq.grid.p.nodes / eq.p0) ** 2)
    gram = np.diag(wrho) + moment2 * dc.T @ (wrho[:, None] * dc)
    return gram, dc, wrho


def a_operator(h, eq: EquilibriumState, V: PotentialSpec) -> np.ndarray:
    """Auxiliary operator u = A h = (I + S*S)^-1 S* h on the x grid.

    S is the projected transport v -> (p/p0) d_x (Pi v), discretised with
    the central difference matrix, and S* its exact adjoint in the
    weighted product, which is the flux form of -Pi T.  S*S is then a
    discrete u -> -(a/rho) div_x(rho grad u) with the quadrature value
    a = int (p/p0)^2 M dp, and the resolvent bound |<A h, h>| <=
    ||h||^2/2 holds at the matrix level.
    """
    h = np.asarray(h, dtype=float)
    eq.grid.check_field(h)
    gram, dc, wrho = _a_system(eq)
    rhs = dc.T @ (wrho * _velocity_moment(h, eq))
    try:
        return scipy.linalg.solve(gram, rhs, assume_a="pos")
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise RuntimeError(f"elliptic system for A is singular: {exc}") from exc


def h_delta(h, delta: float, eq: EquilibriumState, V: PotentialSpec) -> float:
    """Shifted quadratic functional ||h||^2/2 + delta <A h, h>."""
    if not 0.0 < delta < 2.0:
        raise ValueError("delta must lie in (0, 2)")
    h = np.asarray(h, dtype=float)
    eq.grid.check_field(h)
    mean = integrate_phase(eq.grid, h, eq.f_inf)
    if abs(mean) > 1e-14 * max(1.0, float(np.max(np.abs(h)))):
        log.debug("h_delta: removing f_inf-mean %.3e", mean)
    h = h - mean
    u = a_operator(h, eq, V)
    bar = projection_pi(h, eq)
    cross = float(np.sum(eq.grid.x.weights * eq.rho_inf * u * bar))
    return float(0.5 * integrate_phase(eq.grid, h * h, eq.f_inf) + delta * cross)


@dataclass(frozen=True)
class WeightMatrixField:
    """Symmetric 2x2 weight matrices P(x, p) on every phase node (d = 1)."""

    grid: PhaseGrid
    potential: PotentialSpec
    epsilon: float
    time_scaled: bool
    t: float
    matrices: np.ndarray  # (nx, np, 2, 2)
    weight: np.ndarray  # equilibrium density f_inf used by S_P

    def entries(self):
        m = self.matrices
        return m[..., 0, 0], m[..., 0, 1], m[..., 1, 1]

    def min_eigenvalues(self) -> np.ndarray:
        a, b, c = self.entries()
        half = 0.5 * (a + c)
        return half - np.sqrt(0.25 * (a - c) ** 2 + b * b)

    def sandwich_margins(self) -> tuple[float, float]:
        """Smallest eigenvalue of P - lower bound and of upper bound - P."""
        a, b, c = self.entries()
        lo11, lo22 = 0.5 * a, 0.5 * c
        lo = _min_eig2(a - lo11, b, c - lo22)
        up = _min_eig2(3.0 * lo11 - a, -b, 3.0 * lo22 - c)
        return float(lo.min()), float(up.min())

    def at_time(self, t: float) -> "WeightMatrixField":
        if not self.time_scaled:
            raise ValueError("at_time is only meaningful for time-scaled fields")
        fresh = build_P(self.grid, self.potential, self.epsilon, time_scaled=True, t=t)
        # the weight is time independent; keep it so c != 1 weights survive
        return replace(fresh, weight=self.weight)

    def check_same_grid(self, h: np.ndarray) -> None:
        if h.shape != self.grid.shape:
            raise ValueError(f"field shape {h.shape} does not match grid {self.grid.shape}")


def _min_eig2(a, b, c):
    return 0.5 * (a + c) - np.sqrt(0.25 * (a - c) ** 2 + b * b)


def _p_blocks(grid, V, epsilon, time_scaled, t):
    # scalar prefactors of the three distinct entries; d = 1 collapses
    # the matrix blocks to 2 eps^3/(V0^3 p0^5), eps^2/(V0^2 p0^2),
    # and 2 eps p0 / V0
    if time_scaled:
        e3, e2, e1 = (epsilon * t) ** 3, (epsilon * t) ** 2, epsilon * t
    else:
        e3, e2, e1 = epsilon**3, epsilon**2, epsilon
    w0 = _v0(V, grid.x.nodes)[:, None]
    e = np.sqrt(1.0 + grid.p.nodes**2)[None, :]
    p11 = 2.0 * e3 / (w0**3 * e**5)
    p12 = e2 / (w0**2 * e**2)
    p22 = 2.0 * e1 * e / w0
    return p11, p12, p22


def build_P(
    grid: PhaseGrid,
    V: PotentialSpec,
    epsilon: float,
    time_scaled: bool = False,
    t: float = 0.0,
    light_speed: float = 1.0,
) -> WeightMatrixField:
    """Assemble the weight matrix field and verify its invariants.

    The matrix entries are the unit-speed formulas; light_speed only selects
    the equilibrium used as quadrature weight so S_P integrals match the
    equilibrium of the run being monitored.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if time_scaled and t < 0:
        raise ValueError("t must be nonnegative")
    p11, p12, p22 = _p_blocks(grid, V, epsilon, time_scaled, t)
    m = np.empty(grid.shape + (2, 2))
    m[..., 0, 0] = p11
    m[..., 0, 1] = p12
    m[..., 1, 0] = p12
    m[..., 1, 1] = p22
    field = WeightMatrixField(
        grid=grid,
        potential=V,
        epsilon=float(epsilon),
        time_scaled=bool(time_scaled),
        t=float(t),
        matrices=m,
        weight=build_equilibrium(grid, V, light_speed).f_inf,
    )
    scale = max(float(np.max(np.abs(m))), 1.0)
    if field.min_eigenvalues().min() < -1e-12 * scale:
        raise ValueError("weight matrix field is not positive semi-definite")
    lo, up = field.sandwich_margins()
    if min(lo, up) < -1e-12 * scale:
        raise ValueError(f"sandwich margins violated: {lo}, {up}")
    return field


def q_matrix(grid: PhaseGrid, V: PotentialSpec) -> np.ndarray:
    """First-order coupling matrix Q(x, p) of the gradient evolution (d = 1).

    Q = [[0, 1/p0^3], [-V'', 1 - 1/p0^3]]: the off-diagonal entries are
    the d = 1 values of p0^-1 (I - p p/p0^2) and -V'', the lower-right
    block is I - (d/p0)(I - p p/p0^2).
    """
    e = np.sqrt(1.0 + grid.p.nodes**2)[None, :]
    vpp = V.hess(grid.x.nodes)[:, None]
    q = np.zeros(grid.shape + (2, 2))
    q[..., 0, 1] = 1.0 / e**3
    q[..., 1, 0] = -vpp
    q[..., 1, 1] = 1.0 - 1.0 / e**3
    return q


def s_p_functional(h, P: WeightMatrixField) -> float:
    """Gradient functional int (grad h)^T P (grad h) f_inf."""
    h = np.asarray(h, dtype=float)
    P.check_same_grid(h)
    gx = gradient_x(P.grid, h)
    gp = gradient_p(P.grid, h)
    p11, p12, p22 = P.entries()
    quad = p11 * gx * gx + 2.0 * p12 * gx * gp + p22 * gp * gp
    return float(integrate_phase(P.grid, quad, P.weight))


def e_functional(h, cfg: LyapunovConfig, eq: EquilibriumState, V: PotentialSpec) -> float:
    """Lyapunov functional E = gamma ||h||^2 + H_delta + S_P."""
    h = np.asarray(h, dtype=float)
    eq.grid.check_field(h)
    P = build_P(eq.grid, V, cfg.epsilon, light_speed=eq.light_speed)
    l2sq = integrate_phase(eq.grid, h * h, eq.f_inf)
    return float(cfg.gamma * l2sq + h_delta(h, cfg.delta, eq, V) + s_p_functional(h, P))


@dataclass(frozen=True)
class SpDerivativeReport:
    """Comparison of d/dt S_P against its four-term expansion."""

    lhs: float
    rhs: float
    terms: dict
    residual: float
    relative_residual: float


def _p_derivatives(grid, V, epsilon, time_scaled, t):
    """Analytic d_x P, d_p P, and d_p(p0 d_p P) entry by entry."""
    if time_scaled:
        e3, e2, e1 = (epsilon * t) ** 3, (epsilon * t) ** 2, epsilon * t
    else:
        e3, e2, e1 = epsilon**3, epsilon**2, epsilon
    x = grid.x.nodes
    gv = V.grad(x)
    hv = V.hess(x)
    w0 = _v0(V, x)
    a1 = (gv * hv / w0)[:, None]  # d_x V0
    w0 = w0[:, None]
    p = grid.p.nodes[None, :]
    e = np.sqrt(1.0 + p * p)
    dx = (
        -6.0 * e3 * a1 / (w0**4 * e**5),
        -2.0 * e2 * a1 / (w0**3 * e**2),
        -2.0 * e1 * e * a1 / w0**2,
    )
    dp = (
        -10.0 * e3 * p / (w0**3 * e**7),
        -2.0 * e2 * p / (w0**2 * e**4),
        2.0 * e1 * p / (w0 * e),
    )
    # g = p0 d_p P, then d_p g
    dpg = (
        -10.0 * e3 * (e * e - 6.0 * p * p) / (w0**3 * e**8),
        -2.0 * e2 * (e * e - 3.0 * p * p) / (w0**2 * e**5),
        2.0 * e1 / w0 * np.ones_like(e),
    )
    return dx, dp, dpg


def sp_time_derivative_check(
    h_snapshots,
    P: WeightMatrixField,
    eq: EquilibriumState,
    V: PotentialSpec,
) -> SpDerivativeReport:
    """Compare the centered time difference of S_P with its expansion.

    h_snapshots is a sequence of three (time, field) pairs at uniform
    spacing; the outer pair feeds the centered difference and the middle
    one the four assembled integrals.
    """
    snaps = list(h_snapshots)
    if len(snaps) < 3:
        raise ValueError("need three consecutive snapshots")
    (t0, h0), (t1, h1), (t2, h2) = snaps[:3]
    dt1, dt2 = t1 - t0, t2 - t1
    if dt1 <= 0 or abs(dt1 - dt2) > 1e-12 * max(dt1, dt2):
        raise ValueError("snapshots must be uniformly spaced in time")
    h0, h1, h2 = (np.asarray(a, dtype=float) for a in (h0, h1, h2))
    for a in (h0, h1, h2):
        P.check_same_grid(a)

    P_lo = P.at_time(t0) if P.time_scaled else P
    P_hi = P.at_time(t2) if P.time_scaled else P
    P_mid = P.at_time(t1) if P.time_scaled else P
    lhs = (s_p_functional(h2, P_hi) - s_p_functional(h0, P_lo)) / (t2 - t0)

    grid = eq.grid
    gx = gradient_x(grid, h1)
    gp = gradient_p(grid, h1)
    gpx = gradient_x(grid, gp)
    gpp = gradient_p(grid, gp)
    p11, p12, p22 = P_mid.entries()
    e = eq.p0[None, :]
    p = grid.p.nodes[None, :]
    w = eq.f_inf

    quad1 = (p11 * gpx * gpx + 2.0 * p12 * gpx * gpp + p22 * gpp * gpp) * e
    term1 = -2.0 * integrate_phase(grid, quad1, w)

    term2 = 2.0 * integrate_phase(grid, (p12 * gx + p22 * gp) * (p / e) * gpp, w)

    q = q_matrix(grid, V)
    q11, q12 = q[..., 0, 0], q[..., 0, 1]
    q21, q22 = q[..., 1, 0], q[..., 1, 1]
    qp11 = q11 * p11 + q12 * p12
    qp12 = q11 * p12 + q12 * p22
    qp21 = q21 * p11 + q22 * p12
    qp22 = q21 * p12 + q22 * p22
    s11, s12, s22 = 2.0 * qp11, qp12 + qp21, 2.0 * qp22
    if P.time_scaled:
        if t1 <= 0:
            raise ValueError("time-scaled check needs t > 0")
        s11 -= 3.0 * p11 / t1
        s12 -= 2.0 * p12 / t1
        s22 -= p22 / t1
    term3 = -integrate_phase(grid, s11 * gx * gx + 2.0 * s12 * gx * gp + s22 * gp * gp, w)

    dxP, dpP, dpg = _p_derivatives(grid, V, P.epsilon, P.time_scaled, t1)
    gvx = V.grad(grid.x.nodes)[:, None]
    r = [
        (p / e) * dxP[k] - gvx * dpP[k] + dpg[k] - p * dpP[k]
        for k in range(3)
    ]
    term4 = integrate_phase(grid, r[0] * gx * gx + 2.0 * r[1] * gx * gp + r[2] * gp * gp, w)

    terms = {
        "second_order": float(term1),
        "mixed_coupling": float(term2),
        "q_form": float(term3),
        "p_transport": float(term4),
    }
    rhs = float(term1 + term2 + term3 + term4)
    residual = float(lhs - rhs)
    scale = max(abs(lhs), abs(rhs), 1e-300)
    return SpDerivativeReport(
        lhs=float(lhs),
        rhs=rhs,
        terms=terms,
        residual=residual,
        relative_residual=abs(residual) / scale,
    )


def evaluate_diagnostics(
    h,
    eq: EquilibriumState,
    V: PotentialSpec,
    cfg: LyapunovConfig,
    P: WeightMatrixField | None = None,
) -> DiagnosticsRecord:
    """Assemble the full diagnostics row for one snapshot."""
    h = np.asarray(h, dtype=float)
    eq.grid.check_field(h)
    if P is None:
        P = build_P(eq.grid, V, cfg.epsilon, light_speed=eq.light_speed)
    f = eq.absolute(h)
    mass = integrate_phase(eq.grid, f)
    l2 = l2_norm(h, eq)
    gx2, gp2 = weighted_gradient_terms(h, eq, V)
    h1 = np.sqrt(max(l2 * l2 + gx2 + gp2, 0.0))
    sp = s_p_functional(h, P)
    hd = h_delta(h, cfg.delta, eq, V)
    return DiagnosticsRecord(
        mass=float(mass),
        l2=float(l2),
        h1=float(h1),
        entropy=float(entropy(np.clip(f, 0.0, None), eq)),
        dirichlet=float(dirichlet_form(h, eq)),
        s_p=float(sp),
        h_delta=float(hd),
        e_func=float(cfg.gamma * l2 * l2 + hd + sp),
        grad_x_weighted=float(gx2),
        grad_p_weighted=float(gp2),
    )
