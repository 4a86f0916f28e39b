"""Group-sequential interim monitoring for trials with time-lagged outcomes.

Censoring-aware treatment-effect estimation (inverse-probability-weighted
complete-case and augmented variants), effective-sample-size information
fractions, alpha-spending stopping boundaries, and a Monte Carlo harness
for operating characteristics.
"""

__version__ = "0.1.0"

from .boundaries import (
    BoundaryPlan,
    SequentialDecision,
    compute_boundaries,
    decide,
    spending_value,
)
from .censoring import (
    CensoringCurve,
    MartingaleJumps,
    eval_geq,
    fit_censoring_km,
    martingale_jumps,
)
from .data import (
    BasisSpec,
    InterimSnapshot,
    ModelSpec,
    ObservedSubject,
    SubjectRecord,
    TrialDesign,
    export_snapshot_csv,
    load_design,
    load_trial,
    snapshot_at,
)
from .errors import (
    DataFormatError,
    DegenerateFitError,
    DesignError,
    EstimationError,
    LagseqError,
    NonConvergenceError,
    NumericalError,
)
from .estimators import (
    AnalysisResult,
    analyze_snapshot,
    estimate_aipw,
    estimate_ipwcc,
    estimate_tf_only,
    step2_augmentation_covariates,
    step2_dependent_variable,
)
from .information import (
    InformationReport,
    fixed_sample_report,
    information_based_fraction,
    information_based_report,
    max_information,
    n_ess,
    var_full_aipw,
    var_full_ipw,
)
from .models import (
    InfluenceEvaluator,
    ParamVector,
    compute_G,
    evaluate_M,
    influence,
    solve_weighted,
)
from .scenarios import (
    gen_scenario1,
    gen_scenario2,
    gen_scenario3,
    scenario_design,
    true_beta,
)
from .simulation import (
    AggregateStats,
    ReplicationResult,
    ScenarioConfig,
    aggregate,
    replication_rng,
    run_replication,
    run_simulation,
)

__all__ = [
    "__version__",
    # errors
    "LagseqError", "DataFormatError", "DesignError", "EstimationError",
    "NonConvergenceError", "DegenerateFitError", "NumericalError",
    # data
    "SubjectRecord", "TrialDesign", "ObservedSubject", "InterimSnapshot",
    "ModelSpec", "BasisSpec", "load_trial", "load_design", "snapshot_at",
    "export_snapshot_csv",
    # censoring
    "CensoringCurve", "MartingaleJumps", "fit_censoring_km", "eval_geq",
    "martingale_jumps",
    # models
    "ParamVector", "InfluenceEvaluator", "evaluate_M", "solve_weighted",
    "compute_G", "influence",
    # estimators
    "AnalysisResult", "estimate_tf_only", "estimate_ipwcc", "estimate_aipw",
    "step2_dependent_variable", "step2_augmentation_covariates",
    "analyze_snapshot",
    # information
    "InformationReport", "var_full_ipw", "var_full_aipw", "n_ess",
    "max_information", "information_based_fraction", "fixed_sample_report",
    "information_based_report",
    # boundaries
    "BoundaryPlan", "SequentialDecision", "spending_value",
    "compute_boundaries", "decide",
    # scenarios / simulation
    "scenario_design", "true_beta", "gen_scenario1", "gen_scenario2",
    "gen_scenario3", "ScenarioConfig", "ReplicationResult", "AggregateStats",
    "replication_rng", "run_replication", "run_simulation", "aggregate",
]
