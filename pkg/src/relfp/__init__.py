"""Relativistic kinetic Fokker-Planck solver and verification laboratory.

Structure-preserving finite-volume solver for the kinetic Fokker-Planck
equation with relativistic velocity and diffusion, plus the machinery to
certify its hypocoercive decay and hypoelliptic regularization rates:
discrete steady states, collision/transport operators, Lyapunov
functionals, spectral-gap eigensolvers, matrix-lemma property checks and
weighted elliptic regularity estimates.
"""

from .grid import AxisGrid, PhaseField, PhaseGrid, integrate_phase
from .potentials import (
    AssumptionConstants,
    PotentialSpec,
    assumption_constants,
    double_well,
    even_power,
    harmonic,
    polynomial,
    v0,
    zero_potential,
)
from .equilibrium import (
    EquilibriumState,
    build_equilibrium,
    kappa1_bakry_emery,
    kappa1_complement,
)
from .operators import (
    apply_collision,
    apply_rhs,
    apply_transport,
    projection_pi,
)
from .functionals import (
    DiagnosticsRecord,
    LyapunovConfig,
    WeightMatrixField,
    build_P,
    evaluate_diagnostics,
)
from .solver import (
    SolverConfig,
    StabilityError,
    TrajectoryRecord,
    build_initial_condition,
    capture_snapshots,
    run_simulation,
    solve_homogeneous,
)
from .coercivity import (
    HypocoercivityConstants,
    RateFit,
    compute_constants,
    delta0,
    estimate_cm,
    fit_decay_rate,
    kappa3,
    kappa4,
    lambda_macro,
    poincare_constant_p,
    poincare_constant_x,
    spectral_gap,
)
from .elliptic import (
    EllipticProblem,
    PoincareReport,
    RegularityReport,
    solve_elliptic,
    verify_regularity,
    verify_weighted_poincare,
)
from .matrix_checks import (
    MatrixCheckReport,
    SampleSet,
    certify_p1,
    certify_p2,
    check_diffusion_inverse,
    check_hessian_p0,
    check_kron_sum_p,
    check_kron_sum_x,
    check_young_matrix,
    draw_sample_set,
    evaluate_certificate,
    find_theta_bounds,
    verify_matrix_lemmas,
)

__version__ = "0.1.0"

__all__ = [
    "AxisGrid",
    "PhaseGrid",
    "PhaseField",
    "integrate_phase",
    "PotentialSpec",
    "AssumptionConstants",
    "assumption_constants",
    "harmonic",
    "even_power",
    "polynomial",
    "double_well",
    "zero_potential",
    "v0",
    "EquilibriumState",
    "build_equilibrium",
    "kappa1_bakry_emery",
    "kappa1_complement",
    "apply_collision",
    "apply_transport",
    "apply_rhs",
    "projection_pi",
    "LyapunovConfig",
    "DiagnosticsRecord",
    "WeightMatrixField",
    "build_P",
    "evaluate_diagnostics",
    "SolverConfig",
    "StabilityError",
    "TrajectoryRecord",
    "build_initial_condition",
    "capture_snapshots",
    "run_simulation",
    "solve_homogeneous",
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
    "EllipticProblem",
    "RegularityReport",
    "PoincareReport",
    "solve_elliptic",
    "verify_regularity",
    "verify_weighted_poincare",
    "MatrixCheckReport",
    "SampleSet",
    "draw_sample_set",
    "check_young_matrix",
    "check_kron_sum_x",
    "check_kron_sum_p",
    "check_hessian_p0",
    "check_diffusion_inverse",
    "verify_matrix_lemmas",
    "find_theta_bounds",
    "evaluate_certificate",
    "certify_p1",
    "certify_p2",
    "__version__",
]
