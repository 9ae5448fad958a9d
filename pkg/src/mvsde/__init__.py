"""Constrained delay SDE simulation with mean-field interaction.

The pieces compose bottom-up: set-valued monotone operators and their
resolvents (:mod:`mvsde.monotone`), delay segments and trajectory
storage (:mod:`mvsde.segments`), coefficient catalogues with smoothing
and truncation (:mod:`mvsde.coefficients`), the constrained Euler
scheme plus fixed-point iteration (:mod:`mvsde.solver`), empirical laws
and distribution iteration (:mod:`mvsde.meanfield`), and the named
experiments behind the ``mvsde`` command (:mod:`mvsde.experiments`).
"""
from .coefficients import (
    FunctionCoefficient,
    LinearModulus,
    LogModulus,
    MeanFieldCoefficient,
    ModulusKappa,
    PathCoefficient,
    diffusion_constant,
    diffusion_zero,
    drift_constant,
    drift_linear_delay,
    drift_log_lipschitz,
    drift_zero,
    eval_kappa,
    mf_diffusion_constant,
    mf_drift_linear,
    mf_drift_second_moment,
    mollify_segment,
    smooth_coefficient,
    truncate_coefficient,
)
from .errors import (
    ConfigError,
    DomainViolationError,
    InternalConsistencyError,
    InvalidArgumentError,
    MvsdeError,
    StepEvaluationError,
)
from .meanfield import (
    EmpiricalSegmentLaw,
    MeasureFlow,
    distribution_iterate,
    empirical_moment,
    flow_distances,
    flow_from_ensemble,
    flow_from_initial,
    self_consistent_solve,
    solve_ensemble_frozen,
    wasserstein2,
    wasserstein2_exhaustive,
)
from .monotone import (
    Ball,
    Box,
    Graph1D,
    HalfLine,
    Halfspace,
    NormalCone,
    ZeroOperator,
    domain_contains,
    domain_distance,
    in_normal_cone,
    interior_point,
    operator_contains,
    operator_dim,
    operator_domain,
    project,
    resolvent,
    yosida,
)
from .rng import (
    INITIAL_DATA_STREAM,
    NOISE_STREAM,
    SMOOTHING_STREAM,
    TEST_STREAM,
    RngKey,
)
from .segments import (
    Segment,
    TimeGrid,
    TrajectoryPair,
    constant_segment,
    initial_extension,
    initial_extension_path,
    segment_at,
    sup_norm,
    total_variation,
    write_trajectory_csv,
    write_trajectory_jsonl,
)
from .solver import (
    ContractionReport,
    EnsembleTrajectories,
    NoisePath,
    SolverConfig,
    contraction_horizon,
    contraction_report,
    euler_step,
    integrate,
    picard_iterate,
    picard_iterate_paths,
    sample_noise_matrix,
    solve_path,
    solve_paths,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "MvsdeError",
    "InvalidArgumentError",
    "DomainViolationError",
    "InternalConsistencyError",
    "StepEvaluationError",
    "ConfigError",
    "RngKey",
    "NOISE_STREAM",
    "SMOOTHING_STREAM",
    "INITIAL_DATA_STREAM",
    "TEST_STREAM",
    "ZeroOperator",
    "NormalCone",
    "Graph1D",
    "HalfLine",
    "Box",
    "Ball",
    "Halfspace",
    "project",
    "domain_distance",
    "domain_contains",
    "interior_point",
    "in_normal_cone",
    "resolvent",
    "yosida",
    "operator_dim",
    "operator_domain",
    "operator_contains",
    "TimeGrid",
    "Segment",
    "TrajectoryPair",
    "constant_segment",
    "segment_at",
    "initial_extension",
    "initial_extension_path",
    "sup_norm",
    "total_variation",
    "write_trajectory_csv",
    "write_trajectory_jsonl",
    "ModulusKappa",
    "LinearModulus",
    "LogModulus",
    "eval_kappa",
    "PathCoefficient",
    "MeanFieldCoefficient",
    "FunctionCoefficient",
    "drift_zero",
    "drift_constant",
    "drift_linear_delay",
    "drift_log_lipschitz",
    "diffusion_constant",
    "diffusion_zero",
    "mf_drift_linear",
    "mf_drift_second_moment",
    "mf_diffusion_constant",
    "mollify_segment",
    "smooth_coefficient",
    "truncate_coefficient",
    "SolverConfig",
    "NoisePath",
    "sample_noise_matrix",
    "euler_step",
    "integrate",
    "EnsembleTrajectories",
    "solve_path",
    "solve_paths",
    "picard_iterate",
    "picard_iterate_paths",
    "ContractionReport",
    "contraction_report",
    "contraction_horizon",
    "EmpiricalSegmentLaw",
    "MeasureFlow",
    "wasserstein2",
    "wasserstein2_exhaustive",
    "empirical_moment",
    "flow_from_initial",
    "flow_from_ensemble",
    "flow_distances",
    "solve_ensemble_frozen",
    "distribution_iterate",
    "self_consistent_solve",
]
