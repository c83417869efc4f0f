"""Weighted elliptic solver on the x axis and the regularity certificates.

The equation u - (a/rho) (rho u')' = w is discretised with the same
no-flux flux-form stiffness that backs the spatial Poincare eigensolver:
face conductances are the log-mean of rho over the spacing, so the
system matrix diag(m) + a K is a symmetric tridiagonal M-matrix.  Three
structural consequences are relied on throughout: fluxes telescope, so
the solve maps rho-mean-zero data to rho-mean-zero solutions exactly;
the solution is a weighted average of the data, so the discrete maximum
principle max|u| <= max|w| holds; and the energy identity
int u^2 rho + a int |u'|^2 rho = int u w rho holds at matrix level.

On top of the solver sit two certificates.  verify_regularity solves the
equation for the leading eigenfunctions of the weighted Laplacian and
checks the measured Rayleigh ratios for the gradient and Hessian
estimates against the constructive constants C1 and C2 assembled from
(kappa2, kappa3, kappa4, c3).  verify_weighted_poincare checks the two
weighted Poincare inequalities on random mean-zero fields with the same
constants.  Both certificates inherit the truncated-domain caveat: the
constants are certified on the grid box, not on the whole line.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .coercivity import kappa3 as _kappa3, kappa4 as _kappa4, poincare_constant_x
from .equilibrium import EquilibriumState
from .operators import log_mean
from .potentials import PotentialSpec, assumption_constants, v0

__all__ = [
    "EllipticProblem",
    "RegularityReport",
    "PoincareReport",
    "solve_elliptic",
    "x_dirichlet_form",
    "basis_functions",
    "constructive_constants",
    "verify_regularity",
    "verify_weighted_poincare",
]

log = logging.getLogger(__name__)

MEAN_TOL = 1e-10
RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class EllipticProblem:
    """Right-hand side and diffusion strength for the x-space solve."""

    a_coeff: float
    rhs: np.ndarray
    boundary: str = "no_flux"

    def __post_init__(self):
        if not np.isfinite(self.a_coeff) or self.a_coeff <= 0:
            raise ValueError("a_coeff must be a positive real")
        if self.boundary != "no_flux":
            raise ValueError(f"unsupported boundary {self.boundary!r}")
        rhs = np.asarray(self.rhs, dtype=float)
        if rhs.ndim != 1 or rhs.size < 3 or not np.all(np.isfinite(rhs)):
            raise ValueError("rhs must be a finite 1d nodal function")
        object.__setattr__(self, "rhs", rhs)


def _flux_system(eq: EquilibriumState, a: float):
    """Node masses m, face conductances b and the banded matrix m + a K."""
    axis = eq.grid.x
    rho = eq.rho_inf
    m = axis.weights * rho
    b = log_mean(rho[:-1], rho[1:]) / axis.spacing
    diag = m.copy()
    diag[:-1] += a * b
    diag[1:] += a * b
    banded = np.zeros((2, axis.n))
    banded[0] = diag
    banded[1, :-1] = -a * b
    return m, b, banded


def x_dirichlet_form(u, eq: EquilibriumState) -> float:
    """Discrete weighted Dirichlet form sum b (du)^2 ~ int |u'|^2 rho."""
    u = np.asarray(u, dtype=float)
    b = log_mean(eq.rho_inf[:-1], eq.rho_inf[1:]) / eq.grid.x.spacing
    return float(np.sum(b * np.diff(u) ** 2))


def solve_elliptic(prob: EllipticProblem, eq: EquilibriumState, V=None) -> np.ndarray:
    """Solve u - (a/rho)(rho u')' = w with no-flux ends on the x grid.

    The data must be rho-mean-zero; the tiny quadrature mean is projected
    out so the solution is exactly mean-free.  The banded Cholesky solve
    is verified a posteriori against the assembled system.
    """
    m, _, banded = _flux_system(eq, prob.a_coeff)
    rhs = prob.rhs
    if rhs.shape != (eq.grid.x.n,):
        raise ValueError(f"rhs has shape {rhs.shape}, grid has {eq.grid.x.n} nodes")
    mass = float(np.sum(m))
    mean = float(np.sum(m * rhs)) / mass
    if abs(mean) > MEAN_TOL * max(1.0, float(np.sum(m * np.abs(rhs))) / mass):
        raise ValueError(f"rhs must be rho-mean-zero, got mean {mean:.3e}")
    data = m * (rhs - mean)
    try:
        u = scipy.linalg.solveh_banded(banded, data, lower=True)
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise RuntimeError(f"elliptic system is singular: {exc}") from exc
    # a-posteriori residual of the assembled tridiagonal system
    a = prob.a_coeff
    resid = banded[0] * u - data
    resid[:-1] += banded[1, :-1] * u[1:]
    resid[1:] += banded[1, :-1] * u[:-1]
    rel = float(np.linalg.norm(resid)) / max(float(np.linalg.norm(data)), 1e-300)
    if rel > RESIDUAL_TOL:
        raise RuntimeError(f"elliptic solve residual {rel:.3e} exceeds {RESIDUAL_TOL}")
    log.debug("solve_elliptic: a=%g residual=%.3e", a, rel)
    return u - float(np.sum(m * u)) / mass


def basis_functions(eq: EquilibriumState, basis_size: int) -> tuple[np.ndarray, np.ndarray]:
    """Leading nonconstant eigenpairs of u -> -(1/rho)(rho u')'.

    Returns (values, vectors) with vectors of shape (basis_size, n),
    rho-orthonormal and rho-mean-zero: the pencil K y = lambda M y is
    symmetrised by M^(-1/2), where the constants kernel becomes sqrt(m),
    so every higher mode is exactly mean-free.
    """
    axis = eq.grid.x
    if not 1 <= basis_size <= axis.n - 2:
        raise ValueError("basis_size must lie in [1, n - 2]")
    m, b, _ = _flux_system(eq, 1.0)
    diag = np.zeros(axis.n)
    diag[:-1] += b
    diag[1:] += b
    r = 1.0 / np.sqrt(m)
    d = diag * r * r
    e = -b * r[:-1] * r[1:]
    try:
        vals, vecs = scipy.linalg.eigh_tridiagonal(
            d, e, select="i", select_range=(0, basis_size)
        )
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise RuntimeError(f"basis eigensolver failed: {exc}") from exc
    if abs(vals[0]) > 1e-8 * max(vals[1], 1e-300):
        raise RuntimeError(f"kernel eigenvalue did not converge: {vals[0]:.3e}")
    return vals[1:], (r[:, None] * vecs[:, 1:]).T


def constructive_constants(
    a: float,
    kappa3_val: float,
    kappa4_val: float,
    c3: float,
    delta: float | None = None,
    epsilon: float | None = None,
) -> tuple[float, float, float, float]:
    """Explicit regularity constants (C1, C2, delta, epsilon).

    C1 = [1/(2 delta) + delta/(4 a kappa4)
          + (2 c3^2 a^2/epsilon)(1 + 1/(2 a kappa3))] / (a - epsilon
          - delta/(2 kappa4)) requires a - epsilon - delta/(2 kappa4) > 0.
    Since kappa4 < 1/16 always, the naive split delta = epsilon = a/4
    never satisfies it; the default keeps epsilon = a/4 but scales
    delta = a kappa4 / 2 so the kappa4 term also spends a/4 of the
    budget and the denominator is exactly a/2.  C2 = (2 sqrt(d)/a
    + sqrt(C1))^2 with d = 1.
    """
    if a <= 0 or kappa3_val <= 0 or kappa4_val <= 0 or c3 < 0:
        raise ValueError("need positive a, kappa3, kappa4 and c3 >= 0")
    if epsilon is None:
        epsilon = a / 4.0
    if delta is None:
        delta = a * kappa4_val / 2.0
    if delta <= 0 or epsilon <= 0:
        raise ValueError("delta and epsilon must be positive")
    denom = a - epsilon - delta / (2.0 * kappa4_val)
    if denom <= 0:
        raise ValueError(
            f"no coercivity left: a - epsilon - delta/(2 kappa4) = {denom:.3e}; "
            "shrink delta or epsilon"
        )
    c1_bound = (
        1.0 / (2.0 * delta)
        + delta / (4.0 * a * kappa4_val)
        + (2.0 * c3 * c3 * a * a / epsilon) * (1.0 + 1.0 / (2.0 * a * kappa3_val))
    ) / denom
    c2_bound = (2.0 / a + np.sqrt(c1_bound)) ** 2
    return float(c1_bound), float(c2_bound), float(delta), float(epsilon)


@dataclass(frozen=True)
class RegularityReport:
    """Measured Rayleigh ratios against the constructive C1, C2 bounds."""

    a_coeff: float
    basis_size: int
    delta: float
    epsilon: float
    kappa2: float
    kappa3: float
    kappa4: float
    c1_bound: float
    c2_bound: float
    gradient_ratios: np.ndarray
    hessian_ratios: np.ndarray
    passed: bool

    def as_dict(self) -> dict:
        return {
            "a_coeff": self.a_coeff,
            "basis_size": self.basis_size,
            "delta": self.delta,
            "epsilon": self.epsilon,
            "kappa2": self.kappa2,
            "kappa3": self.kappa3,
            "kappa4": self.kappa4,
            "c1_bound": self.c1_bound,
            "c2_bound": self.c2_bound,
            "max_gradient_ratio": float(np.max(self.gradient_ratios)),
            "max_hessian_ratio": float(np.max(self.hessian_ratios)),
            "passed": self.passed,
        }


def _weighted_constants(eq, V):
    """(kappa2, kappa3, kappa4, constants) certified on the grid box."""
    ac = assumption_constants(V, grid=eq.grid.x)
    kappa2 = poincare_constant_x(eq)
    w0 = v0(V, eq.grid.x.nodes)
    v0_norm4 = float(np.sum(eq.grid.x.weights * eq.rho_inf * w0 * w0)) ** 2
    k3 = _kappa3(ac.c1, ac.c2, kappa2)
    k4 = _kappa4(kappa2, k3, ac.c3, v0_norm4)
    return kappa2, k3, k4, ac


def verify_regularity(
    eq: EquilibriumState,
    V: PotentialSpec,
    a: float = 1.0,
    basis_size: int = 16,
    delta: float | None = None,
    epsilon: float | None = None,
) -> RegularityReport:
    """Solve for the leading weighted-Laplacian modes and check C1, C2.

    For each rho-normalised basis function w the solve yields u, and the
    two ratios int |u'|^2 |V'|^2 rho / int w^2 rho and
    int |u''|^2 rho / int w^2 rho are measured by quadrature and
    compared with the constructive constants.
    """
    kappa2, k3, k4, ac = _weighted_constants(eq, V)
    c1_bound, c2_bound, delta, epsilon = constructive_constants(
        a, k3, k4, ac.c3, delta, epsilon
    )
    _, basis = basis_functions(eq, basis_size)
    axis = eq.grid.x
    wrho = axis.weights * eq.rho_inf
    vprime2 = V.grad(axis.nodes) ** 2
    ratios1 = np.empty(basis_size)
    ratios2 = np.empty(basis_size)
    for k, w in enumerate(basis):
        u = solve_elliptic(EllipticProblem(a, w), eq, V)
        du = np.gradient(u, axis.spacing, edge_order=2)
        d2u = np.gradient(du, axis.spacing, edge_order=2)
        denom = float(np.sum(wrho * w * w))
        ratios1[k] = float(np.sum(wrho * du * du * vprime2)) / denom
        ratios2[k] = float(np.sum(wrho * d2u * d2u)) / denom
    passed = bool(np.max(ratios1) <= c1_bound and np.max(ratios2) <= c2_bound)
    return RegularityReport(
        a_coeff=float(a),
        basis_size=basis_size,
        delta=delta,
        epsilon=epsilon,
        kappa2=kappa2,
        kappa3=k3,
        kappa4=k4,
        c1_bound=c1_bound,
        c2_bound=c2_bound,
        gradient_ratios=ratios1,
        hessian_ratios=ratios2,
        passed=passed,
    )


@dataclass(frozen=True)
class PoincareReport:
    """Worst sampled ratios of the two weighted Poincare inequalities."""

    kappa2: float
    kappa3: float
    kappa4: float
    trials: int
    worst_ratio1: float
    worst_ratio2: float
    grad_moment: float
    grad_moment_bound: float
    passed: bool

    def as_dict(self) -> dict:
        return {
            "kappa2": self.kappa2,
            "kappa3": self.kappa3,
            "kappa4": self.kappa4,
            "trials": self.trials,
            "worst_ratio1": self.worst_ratio1,
            "worst_ratio2": self.worst_ratio2,
            "grad_moment": self.grad_moment,
            "grad_moment_bound": self.grad_moment_bound,
            "passed": self.passed,
        }


def _random_fields(axis, rho, trials, seed):
    """Smooth random mean-zero fields: cubic + trig modes, rho-centred."""
    rng = np.random.default_rng(seed)
    s = axis.nodes / axis.radius
    modes = np.stack(
        [s, s * s, s**3, np.sin(np.pi * s), np.cos(np.pi * s), np.sin(2 * np.pi * s)]
    )
    coeff = rng.standard_normal((trials, modes.shape[0]))
    fields = coeff @ modes
    mass = axis.weights * rho
    fields -= (fields @ mass)[:, None] / np.sum(mass)
    return fields


def verify_weighted_poincare(
    eq: EquilibriumState, V: PotentialSpec, trials: int = 100, seed: int = 0
) -> PoincareReport:
    """Check both weighted Poincare inequalities on random mean-zero h.

    Ratio 1 tests int h^2 |V'|^2 rho <= (1/kappa3) int |h'|^2 rho and
    ratio 2 tests int h^2 V0^2 |V'|^2 rho <= (1/kappa4) int |h'|^2 V0^2
    rho; both must stay below one.  The gradient moment bound
    int |V'|^2 rho <= 2 c1/(2 - c2) is reproduced by quadrature.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    kappa2, k3, k4, ac = _weighted_constants(eq, V)
    axis = eq.grid.x
    wrho = axis.weights * eq.rho_inf
    vprime2 = V.grad(axis.nodes) ** 2
    w0sq = 1.0 + vprime2
    worst1 = worst2 = 0.0
    for h in _random_fields(axis, eq.rho_inf, trials, seed):
        dh = np.gradient(h, axis.spacing, edge_order=2)
        lhs1 = float(np.sum(wrho * h * h * vprime2))
        rhs1 = float(np.sum(wrho * dh * dh)) / k3
        lhs2 = float(np.sum(wrho * h * h * w0sq * vprime2))
        rhs2 = float(np.sum(wrho * dh * dh * w0sq)) / k4
        worst1 = max(worst1, lhs1 / rhs1)
        worst2 = max(worst2, lhs2 / rhs2)
    grad_moment = float(np.sum(wrho * vprime2))
    grad_bound = 2.0 * ac.c1 / (2.0 - ac.c2)
    passed = bool(worst1 <= 1.0 and worst2 <= 1.0 and grad_moment <= grad_bound)
    log.info(
        "weighted Poincare: worst ratios %.4f / %.4f over %d fields",
        worst1,
        worst2,
        trials,
    )
    return PoincareReport(
        kappa2=kappa2,
        kappa3=k3,
        kappa4=k4,
        trials=trials,
        worst_ratio1=worst1,
        worst_ratio2=worst2,
        grad_moment=grad_moment,
        grad_moment_bound=grad_bound,
        passed=passed,
    )
