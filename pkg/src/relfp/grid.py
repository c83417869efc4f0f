"""Tensor-product phase-space grids, quadrature and finite differences.

The computational domain is a box [-R_x, R_x] x [-R_p, R_p] holding the
position axis first and the momentum axis second.  Axes are uniform and
node-centred (both endpoints are nodes), integration uses trapezoid
weights, and derivatives use second-order central differences with
one-sided second-order closures at the endpoints.

The same node/weight layout doubles as a vertex-centred finite-volume
mesh: node i owns the cell bounded by the midpoints to its neighbours,
whose width is exactly the trapezoid weight.  Conservative operators
built on faces therefore telescope exactly against `integrate`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


BOUNDARY_KINDS = ("no_flux", "zero_extension")


@dataclass(frozen=True)
class AxisGrid:
    """Uniform 1D grid on [-radius, radius] with trapezoid quadrature.

    boundary_kind selects how flux operators close the last cells:
    'no_flux' (default, conserves mass against the degenerate diffusion)
    or 'zero_extension' (diagnostics of compactly supported fields).
    """

    nodes: np.ndarray
    spacing: float
    radius: float
    weights: np.ndarray = field(repr=False)
    boundary_kind: str = "no_flux"

    def __post_init__(self):
        if self.boundary_kind not in BOUNDARY_KINDS:
            raise ValueError(
                f"unknown boundary kind {self.boundary_kind!r}, expected one of {BOUNDARY_KINDS}"
            )

    @classmethod
    def make(cls, radius: float, n: int, boundary_kind: str = "no_flux") -> "AxisGrid":
        if n < 4:
            raise ValueError(f"axis needs at least 4 nodes, got {n}")
        if radius <= 0:
            raise ValueError(f"axis radius must be positive, got {radius}")
        nodes = np.linspace(-radius, radius, n)
        h = nodes[1] - nodes[0]
        w = np.full(n, h)
        w[0] = w[-1] = 0.5 * h
        return cls(
            nodes=nodes,
            spacing=float(h),
            radius=float(radius),
            weights=w,
            boundary_kind=boundary_kind,
        )

    @property
    def n(self) -> int:
        return self.nodes.size

    @property
    def faces(self) -> np.ndarray:
        """Midpoints between adjacent nodes (n-1 interior faces)."""
        return 0.5 * (self.nodes[:-1] + self.nodes[1:])

    def integrate(self, values: np.ndarray) -> float:
        values = np.asarray(values)
        if values.shape != (self.n,):
            raise ValueError(f"expected shape ({self.n},), got {values.shape}")
        return float(np.sum(self.weights * values))


@dataclass(frozen=True)
class PhaseGrid:
    """Tensor grid over (x, p); fields are arrays of shape (nx, np)."""

    x: AxisGrid
    p: AxisGrid

    @classmethod
    def make(cls, x_radius: float, p_radius: float, nx: int, npts: int) -> "PhaseGrid":
        return cls(x=AxisGrid.make(x_radius, nx), p=AxisGrid.make(p_radius, npts))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.x.n, self.p.n)

    @property
    def weights(self) -> np.ndarray:
        """Outer product of the two trapezoid weight vectors."""
        return np.outer(self.x.weights, self.p.weights)

    def check_field(self, values: np.ndarray) -> None:
        if values.shape != self.shape:
            raise ValueError(f"field shape {values.shape} does not match grid {self.shape}")


FIELD_KINDS = ("absolute_density", "relative_density")


@dataclass
class PhaseField:
    """Nodal values of a phase-space function together with its role.

    kind: 'absolute_density' (f, nonnegative up to round-off) or
    'relative_density' (h = (f - f_inf)/f_inf and other signed test
    functions measured against f_inf).
    """

    grid: PhaseGrid
    values: np.ndarray
    kind: str = "relative_density"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.grid.check_field(self.values)
        if self.kind not in FIELD_KINDS:
            raise ValueError(f"unknown field kind {self.kind!r}, expected one of {FIELD_KINDS}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite entries")

    def copy(self) -> "PhaseField":
        return PhaseField(self.grid, self.values.copy(), self.kind)


def integrate_phase(grid: PhaseGrid, values: np.ndarray, weight: np.ndarray | None = None) -> float:
    """Trapezoid integral of ``values`` (optionally times ``weight``) over the box.

    Reductions go through numpy's pairwise summation, so the result is
    deterministic for a fixed grid and input.
    """
    grid.check_field(values)
    integrand = values if weight is None else values * weight
    return float(np.einsum("i,j,ij->", grid.x.weights, grid.p.weights, integrand, optimize=True))


def _diff_matrix(n: int, h: float) -> np.ndarray:
    """Dense second-order differentiation matrix (central + one-sided edges)."""
    G = np.zeros((n, n))
    idx = np.arange(1, n - 1)
    G[idx, idx - 1] = -0.5 / h
    G[idx, idx + 1] = 0.5 / h
    G[0, :3] = np.array([-1.5, 2.0, -0.5]) / h
    G[-1, -3:] = np.array([0.5, -2.0, 1.5]) / h
    return G


def gradient_x(grid: PhaseGrid, values: np.ndarray) -> np.ndarray:
    """d/dx along axis 0, exact on polynomials of degree <= 2."""
    grid.check_field(values)
    return np.gradient(values, grid.x.spacing, axis=0, edge_order=2)


def gradient_p(grid: PhaseGrid, values: np.ndarray) -> np.ndarray:
    """d/dp along axis 1, exact on polynomials of degree <= 2."""
    grid.check_field(values)
    return np.gradient(values, grid.p.spacing, axis=1, edge_order=2)


def radius_for_tail(decay, tol: float = 1e-13, lo: float = 1.0, hi: float = 1e6) -> float:
    """Smallest radius R with decay(R) <= tol, by bisection on a monotone tail.

    ``decay`` maps R to an upper bound of the mass of the density outside
    [-R, R]; it must be decreasing.
    """
    if decay(hi) > tol:
        raise ValueError("tail tolerance unreachable within bracket")
    if decay(lo) <= tol:
        return lo
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if decay(mid) <= tol:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-9 * hi:
            break
    return hi
