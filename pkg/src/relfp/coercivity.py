"""Certified constants of the decay machinery.

kappa1 and kappa2 are the spectral gaps of the momentum and spatial
Dirichlet forms.  Both are computed as generalized symmetric tridiagonal
eigenproblems whose face conductances are shared with the PDE stencils,
so the coercivity inequalities they certify hold exactly for the
discrete operators, not only in the continuum limit.  lambda_m,
lambda_M, delta0, kappa3 and kappa4 are closed formulas on top of those
gaps; C_M is an operator-norm estimate of the auxiliary-operator bound,
obtained by power iteration on densely assembled A T (I - Pi) and
A L (I - Pi) on a coarse grid; fit_decay_rate extracts empirical
exponential or power-law rates from recorded trajectories.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .equilibrium import EquilibriumState, a_constant, velocity
from .grid import AxisGrid, _diff_matrix
from .operators import collision_tridiagonal, log_mean
from .potentials import PotentialSpec

__all__ = [
    "HypocoercivityConstants",
    "RateFit",
    "spectral_gap",
    "poincare_constant_p",
    "poincare_constant_x",
    "lambda_macro",
    "delta0",
    "kappa3",
    "kappa4",
    "estimate_cm",
    "fit_decay_rate",
    "compute_constants",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HypocoercivityConstants:
    """The certified constant set; every entry is a positive real."""

    kappa1: float
    kappa2: float
    kappa3: float
    kappa4: float
    lambda_m: float
    lambda_M: float
    c_m_estimate: float
    delta0: float
    a_coeff: float

    def __post_init__(self):
        vals = self.as_dict()
        for name, v in vals.items():
            if not np.isfinite(v) or v <= 0:
                raise ValueError(f"{name} must be a positive real, got {v}")
        if self.delta0 > 2.0:
            raise ValueError("delta0 must lie in (0, 2]")
        if self.delta0 > self.lambda_m + 1e-12:
            raise ValueError("delta0 cannot exceed lambda_m")

    def as_dict(self) -> dict:
        return {
            "kappa1": self.kappa1,
            "kappa2": self.kappa2,
            "kappa3": self.kappa3,
            "kappa4": self.kappa4,
            "lambda_m": self.lambda_m,
            "lambda_M": self.lambda_M,
            "c_m_estimate": self.c_m_estimate,
            "delta0": self.delta0,
            "a_coeff": self.a_coeff,
        }


@dataclass(frozen=True)
class RateFit:
    """Log-space least-squares rate extracted from a trajectory column."""

    rate: float
    window: tuple
    r_squared: float
    model: str

    def __post_init__(self):
        if self.model not in ("exponential", "power_law"):
            raise ValueError(f"unknown model {self.model!r}")
        if not 0.0 <= self.r_squared <= 1.0:
            raise ValueError("r_squared must lie in [0, 1]")

    @property
    def accepted(self) -> bool:
        return self.r_squared >= 0.98


def spectral_gap(conductance, node_mass) -> float:
    """Smallest nonzero eigenvalue of sum_f b (dh)^2 over sum_j m h^2.

    conductance holds the n-1 face values b, node_mass the n positive
    node masses m.  The stiffness matrix annihilates constants, so the
    gap is the second eigenvalue of the mass-normalised tridiagonal.
    """
    b = np.asarray(conductance, dtype=float)
    m = np.asarray(node_mass, dtype=float)
    n = m.size
    if b.shape != (n - 1,):
        raise ValueError(f"expected {n - 1} face conductances, got {b.shape}")
    if np.any(m <= 0) or np.any(b < 0):
        raise ValueError("node masses must be positive, conductances nonnegative")
    diag = np.zeros(n)
    diag[:-1] += b
    diag[1:] += b
    r = 1.0 / np.sqrt(m)
    # similarity transform M^-1/2 S M^-1/2 keeps the tridiagonal shape
    d = diag * r * r
    e = -b * r[:-1] * r[1:]
    try:
        vals = scipy.linalg.eigh_tridiagonal(
            d, e, select="i", select_range=(0, 1), eigvals_only=True
        )
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise RuntimeError(f"gap eigensolver failed: {exc}") from exc
    if abs(vals[0]) > 1e-8 * max(vals[1], 1e-300):
        raise RuntimeError(f"kernel eigenvalue did not converge: {vals[0]:.3e}")
    return float(vals[1])


def poincare_constant_p(eq: EquilibriumState) -> float:
    """Gap kappa1 of the D-weighted momentum Dirichlet form in L2(M)."""
    b, m = collision_tridiagonal(eq.grid.p, eq.maxwellian, eq.light_speed)
    return spectral_gap(b, m)


def poincare_constant_x(eq: EquilibriumState, V: PotentialSpec | None = None) -> float:
    """Gap kappa2 of the spatial Dirichlet form int |h'|^2 rho in L2(rho)."""
    axis = eq.grid.x
    rho = eq.rho_inf
    b = log_mean(rho[:-1], rho[1:]) / axis.spacing
    return spectral_gap(b, axis.weights * rho)


def lambda_macro(eq: EquilibriumState, kappa2: float) -> float:
    """Macroscopic coercivity constant kappa2 / int p0^-3 M dp."""
    if kappa2 <= 0:
        raise ValueError("kappa2 must be positive")
    return kappa2 / a_constant(eq.grid.p, eq.maxwellian)


def delta0(lambda_m: float, lambda_M: float, c_M: float) -> float:
    """Admissible coupling threshold min{2, lm, 4 lm lM/(4 lM + CM^2(1+lM))}."""
    if lambda_m <= 0 or lambda_M <= 0 or c_M <= 0:
        raise ValueError("delta0 needs positive lambda_m, lambda_M, C_M")
    third = 4.0 * lambda_m * lambda_M / (4.0 * lambda_M + c_M * c_M * (1.0 + lambda_M))
    return float(min(2.0, lambda_m, third))


def kappa3(c1: float, c2: float, kappa2: float) -> float:
    """Weighted Poincare constant kappa2 (1 - c2) / (2 (c1 + 2 kappa2)).

    Certifies int h^2 |V'|^2 rho <= (1/kappa3) int |h'|^2 rho for
    rho-mean-zero h.  The constant follows from the ground-state split
    sqrt(rho) h' = (h sqrt(rho))' + (h sqrt(rho)/2) V', integration by
    parts against Delta V <= c1 + (c2/2)|V'|^2, and the spatial
    Poincare inequality to absorb the c1 term.
    """
    if not 0.0 <= c2 < 1.0:
        raise ValueError("c2 must lie in [0, 1)")
    if c1 <= 0 or kappa2 <= 0:
        raise ValueError("c1 and kappa2 must be positive")
    return kappa2 * (1.0 - c2) / (2.0 * (c1 + 2.0 * kappa2))


def kappa4(kappa2_: float, kappa3_: float, c3: float, v0_norm4: float) -> float:
    """Second weighted Poincare constant from its reciprocal formula.

    1/kappa4 = 4 ||V0||^4 / kappa2 + 8 c3^2 / kappa3^2 + 4 / kappa3,
    with v0_norm4 the fourth power of the L2(rho) norm of V0.  It
    certifies int h^2 V0^2 |V'|^2 rho <= (1/kappa4) int |h'|^2 V0^2 rho
    for rho-mean-zero h: apply the kappa3 inequality to h V0 centred at
    its rho-mean, expand the product gradient with |V''| <= c3 (1+|V'|),
    and close the cross term by Cauchy-Schwarz and the Poincare bound
    on the mean.
    """
    if min(kappa2_, kappa3_, v0_norm4) <= 0 or c3 < 0:
        raise ValueError("kappa4 needs positive kappa2, kappa3, ||V0||^4")
    inv = (
        4.0 * v0_norm4 / kappa2_
        + 8.0 * c3 * c3 / (kappa3_ * kappa3_)
        + 4.0 / kappa3_
    )
    return 1.0 / inv


def _power_norm(mat, iters=5000, tol=1e-13, seed=0) -> float:
    """Largest singular value of a rectangular matrix by power iteration."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(mat.shape[1])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = mat.T @ (mat @ v)
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        v = w / nrm
        if abs(nrm - lam) <= tol * nrm:
            lam = nrm
            break
        lam = nrm
    return float(np.sqrt(lam))


def _assemble_auxiliary(eq: EquilibriumState, V: PotentialSpec, chunk=512):
    """Dense matrices for A T (I - Pi) and A L (I - Pi), columns by basis.

    Both map a flattened phase field to an x profile; the row weights
    wrho (output, L2(rho)) and the node weights wrho x wp_m (input,
    L2(f_inf)) are returned alongside.
    """
    grid = eq.grid
    n = grid.x.n * grid.p.n
    nx, npts = grid.shape
    wp_m = grid.p.weights * eq.maxwellian
    vel = velocity(grid.p.nodes, eq.light_speed)
    # the auxiliary operator takes the unit-speed moment either way
    wvel = wp_m * (grid.p.nodes / eq.p0)
    wrho = grid.x.weights * eq.rho_inf
    force = np.asarray(V.grad(grid.x.nodes), dtype=float)

    dc = _diff_matrix(nx, grid.x.spacing)
    moment2 = grid.p.integrate(eq.maxwellian * (grid.p.nodes / eq.p0) ** 2)
    gram = np.diag(wrho) + moment2 * dc.T @ (wrho[:, None] * dc)
    gram_f = scipy.linalg.cho_factor(gram)

    dp = _diff_matrix(npts, grid.p.spacing)
    b, m = collision_tridiagonal(grid.p, eq.maxwellian, eq.light_speed)
    up = np.zeros(npts)
    lo = np.zeros(npts)
    dg = np.zeros(npts)
    up[:-1] = b / m[:-1]
    lo[1:] = b / m[1:]
    dg[:-1] -= b / m[:-1]
    dg[1:] -= b / m[1:]

    cols_t = np.empty((nx, n))
    cols_l = np.empty((nx, n))
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        basis = np.zeros((stop - start, n))
        basis[np.arange(stop - start), np.arange(start, stop)] = 1.0
        H = basis.reshape(-1, nx, npts)
        bar = H @ wp_m
        G = H - bar[:, :, None]
        TG = vel[None, None, :] * np.einsum("xy,byp->bxp", dc, G)
        TG -= force[None, :, None] * np.einsum("bxp,qp->bxq", G, dp)
        LG = dg[None, None, :] * G
        LG[:, :, :-1] += up[None, None, :-1] * G[:, :, 1:]
        LG[:, :, 1:] += lo[None, None, 1:] * G[:, :, :-1]
        for src, out in ((TG, cols_t), (LG, cols_l)):
            moment = src @ wvel
            rhs = (moment * wrho[None, :]) @ dc
            out[:, start:stop] = scipy.linalg.cho_solve(gram_f, rhs.T)
    return cols_t, cols_l, wrho, wp_m


def estimate_cm(
    eq: EquilibriumState,
    V: PotentialSpec,
    max_nodes: int = 16384,
    chunk: int = 512,
) -> float:
    """Operator norm estimate ||A T (I - Pi)|| + ||A L (I - Pi)||.

    Assembles both operators densely as maps from phase fields with the
    equilibrium-weighted norm to x profiles in L2(rho); the restriction
    to the fluctuation range is the (I - Pi) factor baked into the
    assembly (it is exact: the supremum over all fields equals the one
    over the range, since projecting the input only shrinks the
    denominator).  Norms come from power iteration on the weighted
    matrices.
    """
    n = eq.grid.x.n * eq.grid.p.n
    if n > max_nodes:
        raise ValueError(
            f"dense estimate needs nx*np <= {max_nodes}, got {n}; use a coarser grid"
        )
    cols_t, cols_l, wrho, wp_m = _assemble_auxiliary(eq, V, chunk)
    win = np.sqrt(np.outer(wrho, wp_m).reshape(n))
    wout = np.sqrt(wrho)
    norm_t = _power_norm(wout[:, None] * cols_t / win[None, :])
    norm_l = _power_norm(wout[:, None] * cols_l / win[None, :])
    log.info("C_M estimate: ||AT(I-Pi)|| = %.6g, ||AL(I-Pi)|| = %.6g", norm_t, norm_l)
    return norm_t + norm_l


def fit_decay_rate(record, column: str, model: str = "exponential", window=None) -> RateFit:
    """Least-squares rate of a recorded column in log space.

    The exponential model fits ln(value) against t and reports the decay
    rate lambda of e^(-lambda t) (positive when the column decays); the
    power_law model fits ln(value) against ln(t) and reports the
    exponent.  Without an explicit window the first 10% of the horizon
    is dropped as transient.
    """
    t = np.asarray(record.times, dtype=float)
    y = np.asarray(record.column(column), dtype=float)
    if window is None:
        window = (t[0] + 0.1 * (t[-1] - t[0]), t[-1])
    lo, hi = float(window[0]), float(window[1])
    if lo < t[0] or hi > t[-1] or lo >= hi:
        raise ValueError(f"window {window} must lie inside the recorded times")
    keep = (t >= lo) & (t <= hi)
    if int(np.sum(keep)) < 10:
        raise ValueError("need at least 10 samples in the fit window")
    t, y = t[keep], y[keep]
    if np.any(y <= 0):
        raise ValueError(f"column {column} has nonpositive values in the window")
    if model == "exponential":
        abscissa = t
    elif model == "power_law":
        if np.any(t <= 0):
            raise ValueError("power_law fit needs strictly positive times")
        abscissa = np.log(t)
    else:
        raise ValueError(f"unknown model {model!r}")
    logy = np.log(y)
    slope, intercept = np.polyfit(abscissa, logy, 1)
    fitted = slope * abscissa + intercept
    ss_res = float(np.sum((logy - fitted) ** 2))
    ss_tot = float(np.sum((logy - np.mean(logy)) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    rate = -float(slope) if model == "exponential" else float(slope)
    return RateFit(rate=rate, window=(lo, hi), r_squared=min(r2, 1.0), model=model)


def compute_constants(
    eq: EquilibriumState,
    V: PotentialSpec,
    assumptions=None,
    c_m: float | None = None,
    coarse: tuple = (64, 64),
) -> HypocoercivityConstants:
    """Assemble the full constant set for one equilibrium.

    assumptions may carry precomputed (c1, c2, c3); c_m a precomputed
    operator-norm estimate (otherwise a coarse-grid estimate on the same
    radii is run here).
    """
    from .equilibrium import build_equilibrium
    from .grid import PhaseGrid
    from .potentials import assumption_constants

    k1 = poincare_constant_p(eq)
    k2 = poincare_constant_x(eq)
    lM = lambda_macro(eq, k2)
    if c_m is None:
        coarse_grid = PhaseGrid.make(eq.grid.x.radius, eq.grid.p.radius, *coarse)
        coarse_eq = build_equilibrium(coarse_grid, V, eq.light_speed)
        c_m = estimate_cm(coarse_eq, V)
    ac = assumptions or assumption_constants(V, grid=eq.grid.x)
    k3 = kappa3(ac.c1, ac.c2, k2)
    v0sq = eq.grid.x.integrate(eq.v0**2 * eq.rho_inf)
    k4 = kappa4(k2, k3, ac.c3, v0sq * v0sq)
    return HypocoercivityConstants(
        kappa1=k1,
        kappa2=k2,
        kappa3=k3,
        kappa4=k4,
        lambda_m=k1,
        lambda_M=lM,
        c_m_estimate=float(c_m),
        delta0=delta0(k1, lM, c_m),
        a_coeff=a_constant(eq.grid.p, eq.maxwellian),
    )
