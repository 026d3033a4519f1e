"""Bilinear merge systems: exact limit solvers plus finite-N simulators.

The package revolves around one object, a :class:`BilinearSystem`, whose
pairwise merge rate is a bilinear form in conserved and sign-odd particle
coordinates.  Everything else is a view of that rate: the gelation time from
a spectral problem, gel curves from a monotone fixed point, sol moments from
a closed ODE system, and two stochastic counterparts (a particle merge
process and an inhomogeneous random graph) for finite-size validation.
"""

from .errors import (
    BudgetExceeded,
    DegenerateCubic,
    DegenerateMeasure,
    DualNotSubcritical,
    ExplosionReached,
    GelkitError,
    HookViolatesConservation,
    NegativeRate,
    NoConvergence,
    NumericError,
    RateUnderflow,
    SchemaError,
    SlowConvergence,
    ToleranceFailure,
    WindowInvalid,
)
from .fenwick import FenwickTree
from .graphs import (
    ComponentTrack,
    CouplingReport,
    DualityReport,
    GraphRealization,
    UnionFind,
    coupling_test,
    duality_experiment,
    graph_from_measure,
    sample_graph,
    trajectory,
)
from .moments import (
    MomentState,
    explosion_time,
    gel_growth_ode,
    initial_state,
    integrate_subcritical,
    moment_rhs,
    moments_at,
    supercritical_moments,
)
from .particles import (
    DirectPairSimulator,
    ParticleSystem,
    Snapshot,
    StepRecord,
    child_seed,
    init_poisson,
    load_state,
)
from .presets import (
    PRESETS,
    bidisperse,
    from_name,
    kinetic_gas,
    kinetic_gas_sample,
    multiplicative,
)
from .restricted import (
    TruncatedFlory,
    TruncatedState,
    enumerate_types,
    integrate_truncated,
)
from .spectral import (
    SpectralResult,
    criticality_matrix,
    gelation,
    gelation_time,
    spectral_radius,
)
from .survival import (
    SizeBiasReport,
    SurvivalCoefficients,
    critical_slope,
    fixed_point_map,
    gel_curve,
    gel_data,
    size_bias_check,
    solve_fixed_point,
    survival_probabilities,
    tilted_measure,
)
from .system import (
    AtomicMeasure,
    BilinearSystem,
    GelData,
    HypothesisReport,
    TypeVector,
    check_hypotheses,
    first_moments,
    gram_plus,
    load_system,
    merge,
    merge_rate,
    merge_rate_matrix,
    moment_matrix,
    par_bound_constant,
    reflect,
    sample_atoms,
    system_measure_from_json,
    system_measure_to_json,
    total_size,
)

__version__ = "0.1.0"

__all__ = [
    "AtomicMeasure",
    "BilinearSystem",
    "BudgetExceeded",
    "ComponentTrack",
    "CouplingReport",
    "DegenerateCubic",
    "DegenerateMeasure",
    "DirectPairSimulator",
    "DualNotSubcritical",
    "DualityReport",
    "ExplosionReached",
    "FenwickTree",
    "GelData",
    "GelkitError",
    "GraphRealization",
    "HookViolatesConservation",
    "HypothesisReport",
    "MomentState",
    "NegativeRate",
    "NoConvergence",
    "NumericError",
    "PRESETS",
    "ParticleSystem",
    "RateUnderflow",
    "SchemaError",
    "SizeBiasReport",
    "SlowConvergence",
    "Snapshot",
    "SpectralResult",
    "StepRecord",
    "SurvivalCoefficients",
    "ToleranceFailure",
    "TruncatedFlory",
    "TruncatedState",
    "TypeVector",
    "UnionFind",
    "WindowInvalid",
    "bidisperse",
    "check_hypotheses",
    "child_seed",
    "coupling_test",
    "critical_slope",
    "criticality_matrix",
    "duality_experiment",
    "enumerate_types",
    "explosion_time",
    "first_moments",
    "fixed_point_map",
    "from_name",
    "gel_curve",
    "gel_data",
    "gel_growth_ode",
    "gelation",
    "gelation_time",
    "gram_plus",
    "graph_from_measure",
    "init_poisson",
    "initial_state",
    "integrate_subcritical",
    "integrate_truncated",
    "kinetic_gas",
    "kinetic_gas_sample",
    "load_state",
    "load_system",
    "merge",
    "merge_rate",
    "merge_rate_matrix",
    "moment_matrix",
    "moment_rhs",
    "moments_at",
    "multiplicative",
    "par_bound_constant",
    "reflect",
    "sample_atoms",
    "sample_graph",
    "size_bias_check",
    "solve_fixed_point",
    "spectral_radius",
    "supercritical_moments",
    "survival_probabilities",
    "system_measure_from_json",
    "system_measure_to_json",
    "tilted_measure",
    "total_size",
    "trajectory",
]
