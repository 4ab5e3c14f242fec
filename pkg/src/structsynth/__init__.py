"""Structured state-feedback synthesis via convex singular-value surrogates."""

from .bench import (
    BenchConfig,
    CurveTable,
    TrialRecord,
    histogram,
    run_benchmark,
    scalar_curves,
    write_records_csv,
)
from .bounds import (
    SpreadVector,
    aposteriori_bound_h2,
    subopt_ratio_h2,
    subopt_ratio_hinf,
    ub_h2,
    ub_hinf,
)
from .errors import SolverError, ValidationError
from .lifted import (
    InverseLiftedMap,
    LiftedMap,
    build_forward,
    build_inverse,
    determinant_invariant,
    simulate,
)
from .riccati import GameCertificate, hinf_opt, lq_game_feasible, lqr_h2_opt
from .solver import (
    SolveOptions,
    SolveReport,
    minimize,
    synthesize_con,
    synthesize_ncon,
)
from .specfun import (
    ObjectiveSpec,
    SpectrumReport,
    exact_gradient,
    h2_norm,
    hinf_norm,
    holder_defect_bounds,
    surrogate_gradient,
    surrogate_value,
)
from .sysmodel import (
    ConstraintSet,
    GainSchedule,
    SystemModel,
    Trajectory,
    augment_control_cost,
    augment_output_feedback,
    closed_loop,
    generate_coupled_ensemble,
)

__version__ = "0.1.0"

__all__ = [
    "BenchConfig",
    "ConstraintSet",
    "CurveTable",
    "GainSchedule",
    "GameCertificate",
    "InverseLiftedMap",
    "LiftedMap",
    "ObjectiveSpec",
    "SolveOptions",
    "SolveReport",
    "SolverError",
    "SpectrumReport",
    "SpreadVector",
    "SystemModel",
    "Trajectory",
    "TrialRecord",
    "ValidationError",
    "aposteriori_bound_h2",
    "augment_control_cost",
    "augment_output_feedback",
    "build_forward",
    "build_inverse",
    "closed_loop",
    "determinant_invariant",
    "exact_gradient",
    "generate_coupled_ensemble",
    "h2_norm",
    "hinf_norm",
    "hinf_opt",
    "histogram",
    "holder_defect_bounds",
    "lq_game_feasible",
    "lqr_h2_opt",
    "minimize",
    "run_benchmark",
    "scalar_curves",
    "simulate",
    "subopt_ratio_h2",
    "subopt_ratio_hinf",
    "surrogate_gradient",
    "surrogate_value",
    "synthesize_con",
    "synthesize_ncon",
    "ub_h2",
    "ub_hinf",
    "write_records_csv",
]
