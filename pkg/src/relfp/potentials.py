"""Confining potentials and their admissibility constants.

A potential V confines the spatial density exp(-V).  The decay and
regularity analysis requires three constants:

    Laplacian bound      Delta V <= c1 + (c2/2) |grad V|^2,   c2 in [0, 1),
    Hessian bound        ||Hess V||_F <= c3 (1 + |grad V|),

and the weight V0(x) = sqrt(1 + |grad V|^2) shows up throughout the
anisotropic norms.  `assumption_constants` certifies (c1, c2, c3) by a
grid search over the computational domain; the reported values are
therefore valid on that domain (which is all the solver ever sees) and
converge to the global constants as the scan domain grows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

__all__ = [
    "PotentialSpec",
    "harmonic",
    "even_power",
    "polynomial",
    "double_well",
    "zero_potential",
    "v0",
    "AssumptionConstants",
    "assumption_constants",
]


@dataclass(frozen=True)
class PotentialSpec:
    """A C^2 potential on the line: value, first and second derivative."""

    name: str
    value: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x):
        return self.value(np.asarray(x, dtype=float))


def harmonic(omega: float = 1.0) -> PotentialSpec:
    """V(x) = omega x^2 / 2."""
    return PotentialSpec(
        name=f"harmonic(omega={omega:g})",
        value=lambda x: 0.5 * omega * x * x,
        grad=lambda x: omega * x,
        hess=lambda x: omega * np.ones_like(x),
    )


def even_power(r: float, k: int) -> PotentialSpec:
    """V(x) = r |x|^(2k), the admissible polynomial-growth family."""
    if k < 1 or r <= 0:
        raise ValueError("even_power needs r > 0 and integer k >= 1")
    m = 2 * k
    return PotentialSpec(
        name=f"even_power(r={r:g}, k={k})",
        value=lambda x: r * x**m,
        grad=lambda x: r * m * x ** (m - 1),
        hess=lambda x: r * m * (m - 1) * x ** (m - 2),
    )


def polynomial(coeffs) -> PotentialSpec:
    """V from ascending power-basis coefficients; confinement is not checked here."""
    c = np.asarray(coeffs, dtype=float)
    d1 = np.polynomial.polynomial.polyder(c)
    d2 = np.polynomial.polynomial.polyder(c, 2)
    pv = np.polynomial.polynomial.polyval
    return PotentialSpec(
        name=f"polynomial(degree={len(c) - 1})",
        value=lambda x: pv(x, c),
        grad=lambda x: pv(x, d1) * np.ones_like(x),
        hess=lambda x: pv(x, d2) * np.ones_like(x),
    )


def double_well(a: float = 1.0, b: float = 1.0) -> PotentialSpec:
    """V(x) = a (x^2 - b)^2, two wells at +-sqrt(b); a = b = 1 is (x^2-1)^2."""
    if a <= 0 or b <= 0:
        raise ValueError("double_well needs positive a and b")
    return PotentialSpec(
        name=f"double_well(a={a:g}, b={b:g})",
        value=lambda x: a * (x * x - b) ** 2,
        grad=lambda x: 4.0 * a * x * (x * x - b),
        hess=lambda x: 4.0 * a * (3.0 * x * x - b),
    )


def zero_potential() -> PotentialSpec:
    """V = 0 (no confinement); used for homogeneous-reduction checks."""
    z = lambda x: np.zeros_like(np.asarray(x, dtype=float))
    return PotentialSpec(name="zero", value=z, grad=z, hess=z)


def v0(V: PotentialSpec, x) -> np.ndarray:
    """Anisotropy weight sqrt(1 + |V'(x)|^2) >= 1."""
    g = V.grad(np.asarray(x, dtype=float))
    return np.sqrt(1.0 + g * g)


@dataclass(frozen=True)
class AssumptionConstants:
    """Certified admissibility constants with their active grid points.

    Valid on [-certified_radius, certified_radius]; the analytic
    conditions are global, so reports must carry the radius along.
    """

    c1: float
    c2: float
    c3: float
    argmax_c1: float
    argmax_c3: float
    certified_radius: float

    def as_dict(self) -> dict:
        return {
            "c1": self.c1,
            "c2": self.c2,
            "c3": self.c3,
            "argmax_c1": self.argmax_c1,
            "argmax_c3": self.argmax_c3,
            "certified_radius": self.certified_radius,
        }


# c1 must stay positive: a flat potential still satisfies the Laplacian
# bound with any c1 > 0, so the scan floors it at this value.
_C1_FLOOR = 1e-12

_C2_SCAN = tuple(np.round(np.arange(0.0, 0.95, 0.1), 10))


def _refined_max(fun, x_star: float, h: float, lo: float, hi: float) -> tuple[float, float]:
    """Polish a grid argmax inside +-h so denser sampling cannot beat it."""
    a = max(lo, x_star - h)
    b = min(hi, x_star + h)
    res = minimize_scalar(lambda x: -fun(np.array(x)), bounds=(a, b), method="bounded",
                          options={"xatol": 1e-10})
    val = float(-res.fun)
    base = float(fun(np.array(x_star)))
    if val >= base:
        return val, float(res.x)
    return base, x_star


def assumption_constants(
    V: PotentialSpec,
    grid=None,
    c2: float | None = None,
    scan_radius: float = 30.0,
    n_scan: int = 20001,
) -> AssumptionConstants:
    """Certify (c1, c2, c3) for V by dense sampling of [-R, R].

    ``grid`` may be an AxisGrid whose nodes set the sample set and R;
    otherwise a fresh dense scan of [-scan_radius, scan_radius] is used.
    For each candidate c2 in {0, 0.1, ..., 0.9} the smallest admissible
    c1 is max_x (V'' - c2/2 V'^2); the reported pair minimises c1 (ties
    resolved toward small c2).  Pass ``c2`` to pin the candidate instead.
    c3 is max_x |V''| / (1 + |V'|), independent of the pair.
    """
    if grid is not None:
        x = np.asarray(grid.nodes, dtype=float)
        radius = float(grid.radius)
    else:
        x = np.linspace(-scan_radius, scan_radius, n_scan)
        radius = float(scan_radius)
    lap = V.hess(x)
    g2 = V.grad(x) ** 2

    h = float(np.max(np.diff(x))) if x.size > 1 else radius

    candidates = (float(c2),) if c2 is not None else _C2_SCAN
    best = None
    for cand in candidates:
        if not 0.0 <= cand < 1.0:
            raise ValueError(f"c2 must lie in [0, 1), got {cand}")
        profile = lap - 0.5 * cand * g2
        i = int(np.argmax(profile))
        # polish off-grid so a denser revalidation cannot find a larger value
        val, x1 = _refined_max(
            lambda t, cc=cand: V.hess(t) - 0.5 * cc * V.grad(t) ** 2,
            float(x[i]), h, -radius, radius,
        )
        c1 = max(val, _C1_FLOOR)
        if best is None or c1 < best[0] - 1e-15 * abs(best[0]):
            best = (c1, cand, x1)
    c1, c2_sel, x1 = best

    ratio = np.abs(lap) / (1.0 + np.sqrt(g2))
    j = int(np.argmax(ratio))
    c3_val, x3 = _refined_max(
        lambda t: np.abs(V.hess(t)) / (1.0 + np.abs(V.grad(t))),
        float(x[j]), h, -radius, radius,
    )
    c3 = max(c3_val, _C1_FLOOR)

    return AssumptionConstants(
        c1=c1, c2=c2_sel, c3=c3,
        argmax_c1=x1, argmax_c3=x3,
        certified_radius=radius,
    )
