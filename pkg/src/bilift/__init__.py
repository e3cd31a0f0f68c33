"""Lifted Gaussian interpolation machinery for bilinearly indexed ensembles."""

from .ensemble import ConfigurationSets, OverlapTables, build_sets, is_unit_norm, load_sets
from .estimator import (
    BudgetError,
    Estimate,
    EvalSettings,
    Evaluator,
    closed_form_single_pair,
    eval_psi,
    eval_psi1,
    eval_psi_s,
    gamma_replica_average,
    gamma_single_average,
    zeta_ladder,
)
from .hamiltonian import (
    GaussianEnvironment,
    LogPartitionState,
    d0_matrix,
    gamma0,
    log_partition,
    sample_environment,
)
from .schedule import (
    DerivedCoefficients,
    LiftingSchedule,
    ValidationReport,
    collapse_equivalent,
    derived_coefficients,
    validate,
)

__all__ = [
    "BudgetError",
    "ConfigurationSets",
    "DerivedCoefficients",
    "Estimate",
    "EvalSettings",
    "Evaluator",
    "GaussianEnvironment",
    "LiftingSchedule",
    "LogPartitionState",
    "OverlapTables",
    "ValidationReport",
    "build_sets",
    "closed_form_single_pair",
    "collapse_equivalent",
    "d0_matrix",
    "derived_coefficients",
    "eval_psi",
    "eval_psi1",
    "eval_psi_s",
    "gamma0",
    "gamma_replica_average",
    "gamma_single_average",
    "is_unit_norm",
    "load_sets",
    "log_partition",
    "sample_environment",
    "validate",
    "zeta_ladder",
]

__version__ = "0.1.0"
