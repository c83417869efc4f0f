"""Stationary state of the relativistic kinetic equation.

The equilibrium factorises as f_inf(x, p) = rho_inf(x) M(p) with

    rho_inf proportional to exp(-V(x)),
    M       proportional to exp(-c sqrt(c^2 + |p|^2)),

the Maxwell-Juttner distribution; the default units set the speed of
light c = 1, and the general-c family feeds the Newtonian-limit study.
Both factors are normalised against the grid quadrature, so the discrete
mass of f_inf is exactly one and the collision kernel built from the
sampled M is exactly stationary.

The sharpest closed-form spectral-gap bound for the momentum generator
is the Bakry-Emery curvature value kappa1(c), defined for c >= 2.  Near
the Newtonian limit 1 - kappa1 falls off like ~42/c^5, which a naive
evaluation rounds away; `kappa1_complement` keeps every term of the
rearranged formula positive so the complement survives far beyond the
point where kappa1 itself rounds to 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import AxisGrid, PhaseGrid, integrate_phase, radius_for_tail
from .potentials import PotentialSpec, v0 as _v0

__all__ = [
    "p0",
    "energy",
    "velocity",
    "diffusion_profile",
    "juttner_exponent",
    "juttner",
    "spatial_density",
    "EquilibriumState",
    "build_equilibrium",
    "default_radii",
    "a_constant",
    "kappa1_complement",
    "kappa1_bakry_emery",
]


def p0(p) -> np.ndarray:
    """Relativistic energy sqrt(1 + p^2) in c = 1 units."""
    p = np.asarray(p, dtype=float)
    return np.sqrt(1.0 + p * p)


def energy(p, c: float = 1.0) -> np.ndarray:
    """Kinetic energy c sqrt(c^2 + p^2); equals p0 at c = 1."""
    p = np.asarray(p, dtype=float)
    return c * np.sqrt(c * c + p * p)


def velocity(p, c: float = 1.0) -> np.ndarray:
    """Group velocity d(energy)/dp = c p / sqrt(c^2 + p^2), bounded by c."""
    p = np.asarray(p, dtype=float)
    return c * p / np.sqrt(c * c + p * p)


def diffusion_profile(p, c: float = 1.0) -> np.ndarray:
    """Scalar momentum diffusion coefficient sqrt(c^2 + p^2)/c (one dimension).

    At c = 1 this is exactly p0.  The Juttner density is its stationary
    state: D M' + p M = 0 with M' = -velocity * M.
    """
    p = np.asarray(p, dtype=float)
    return np.sqrt(c * c + p * p) / c


def juttner_exponent(p, c: float = 1.0) -> np.ndarray:
    """Shifted energy c (sqrt(c^2 + p^2) - c), zero at p = 0.

    Written as c p^2 / (sqrt(c^2 + p^2) + c) to avoid both the
    cancellation of the raw difference and the underflow of exp(-c^2)
    that the unshifted exponent would trigger for large c.
    """
    p = np.asarray(p, dtype=float)
    if c <= 0:
        raise ValueError("light speed must be positive")
    return c * p * p / (np.sqrt(c * c + p * p) + c)


def juttner(axis: AxisGrid, c: float = 1.0) -> np.ndarray:
    """Quadrature-normalised Maxwell-Juttner density on a momentum axis."""
    m = np.exp(-juttner_exponent(axis.nodes, c))
    return m / axis.integrate(m)


def spatial_density(axis: AxisGrid, V: PotentialSpec) -> np.ndarray:
    """Quadrature-normalised density exp(-V) on a spatial axis."""
    e = V(axis.nodes)
    r = np.exp(-(e - e.min()))
    return r / axis.integrate(r)


@dataclass(frozen=True)
class EquilibriumState:
    """Discrete steady state f_inf = rho_inf x maxwellian and its weights.

    z_x and z_p are the partition sums of the shift-stabilised exponents
    (exp(min V) int e^{-V} and exp(c^2) int e^{-c sqrt(c^2+p^2)}), which
    is what the normalisation actually divides by.
    """

    grid: PhaseGrid
    potential: PotentialSpec
    light_speed: float
    rho_inf: np.ndarray  # (nx,)
    maxwellian: np.ndarray  # (np,)
    f_inf: np.ndarray  # (nx, np)
    z_x: float
    z_p: float
    p0: np.ndarray  # (np,) energy weight sqrt(1+p^2)
    v0: np.ndarray  # (nx,) anisotropy weight sqrt(1+V'^2)

    @property
    def mass(self) -> float:
        return integrate_phase(self.grid, self.f_inf)

    @property
    def a_constant(self) -> float:
        return a_constant(self.grid.p, self.maxwellian)

    def relative(self, f: np.ndarray) -> np.ndarray:
        """h = (f - f_inf)/f_inf for an absolute density sampled on the grid."""
        self.grid.check_field(np.asarray(f))
        return f / self.f_inf - 1.0

    def absolute(self, h: np.ndarray) -> np.ndarray:
        """f = f_inf (1 + h) for a relative density."""
        self.grid.check_field(np.asarray(h))
        return self.f_inf * (1.0 + h)


def build_equilibrium(grid: PhaseGrid, V: PotentialSpec, c: float = 1.0) -> EquilibriumState:
    """Assemble the normalised steady state on ``grid`` for light speed ``c``."""
    ex = V(grid.x.nodes)
    zx = grid.x.integrate(np.exp(-(ex - ex.min())))
    zp = grid.p.integrate(np.exp(-juttner_exponent(grid.p.nodes, c)))
    rho = spatial_density(grid.x, V)
    M = juttner(grid.p, c)
    return EquilibriumState(
        grid=grid,
        potential=V,
        light_speed=float(c),
        rho_inf=rho,
        maxwellian=M,
        f_inf=np.outer(rho, M),
        z_x=float(zx),
        z_p=float(zp),
        p0=p0(grid.p.nodes),
        v0=_v0(V, grid.x.nodes),
    )


def default_radii(V: PotentialSpec, c: float = 1.0, tol: float = 1e-13) -> tuple[float, float]:
    """Truncation radii keeping both equilibrium tail masses below ``tol``.

    The bounds are int_R^inf e^{-E(p)} dp <= e^{-E(R)}/E'(R) (E convex)
    and likewise for e^{-V}; both are doubled for the two tails and
    normalised crudely, so the returned radii are conservative.  Mass
    conservation of the flux-form operators leaks only through ghost
    boundary faces, so the 1e-12 mass budget needs radii at this scale.
    """

    def p_tail(R):
        slope = max(velocity(R, c), 0.1)
        return 2.0 * np.exp(-juttner_exponent(R, c)) / slope

    def x_tail(R):
        # reference at V(0) >= min V keeps the estimate conservative
        slope = max(abs(float(V.grad(np.array(R)))), 0.1)
        return 2.0 * float(np.exp(-(V(np.array(R)) - V(np.array(0.0))))) / slope

    return radius_for_tail(x_tail, tol), radius_for_tail(p_tail, tol)


def a_constant(p_axis: AxisGrid, M: np.ndarray | None = None) -> float:
    """Macroscopic mobility a = int p0^-3 M dp = int (p/p0)^2 M dp.

    The two forms agree by integration by parts against M' = -(p/p0) M;
    this evaluates the first, tests cross-check against the second.
    """
    if M is None:
        M = juttner(p_axis)
    e = p0(p_axis.nodes)
    return p_axis.integrate(M / e**3)


def kappa1_complement(c) -> np.ndarray:
    """1 - kappa1(c) without cancellation; decays like ~42/c^5.

    With s = sqrt(4c^4 - 39) and u = (2c^2 + cs)/13 the complement is
    (u (13u - 2c^3) + c^2) / (2c u^3), and 13u - 2c^3 rearranges to
    2c^2 - 39c/(s + 2c^2): every term stays positive and of its own
    magnitude, so no digits cancel even when kappa1 rounds to 1.
    """
    c = np.asarray(c, dtype=float)
    if np.any(c < 2.0):
        raise ValueError("kappa1 is defined for c >= 2")
    s = np.sqrt(4.0 * c**4 - 39.0)
    u = (2.0 * c * c + c * s) / 13.0
    rem = 2.0 * c * c - 39.0 * c / (s + 2.0 * c * c)
    return (u * rem + c * c) / (2.0 * c * u**3)


def kappa1_bakry_emery(c) -> np.ndarray:
    """Bakry-Emery spectral-gap bound for the momentum generator, c >= 2.

    Strictly increasing in c with kappa1(2) = 0.362482... and limit 1;
    beyond c ~ 5e3 the value rounds to exactly 1.0 in float64, so tests
    of monotonicity or of the distance to 1 use `kappa1_complement`.
    """
    return 1.0 - kappa1_complement(c)
