"""Numerical solvers for multi-dimensional backward stochastic equations with
super-linear drivers: plain terminal-value equations on a recombining tree or
a regression Monte Carlo ensemble, Volterra (first-time-indexed) equations via
an outer iteration over families of plain solves, dynamic risk evaluation, and
a-priori-estimate diagnostics.
"""

from .errors import (
    BsvieError,
    ConfigurationError,
    EvaluationDomainError,
    InnerIterationError,
    NumericBlowupError,
    OuterIndexError,
    RegularizationNeededError,
)
from .grids import (
    BinomialTree,
    PathEnsemble,
    RandomStream,
    TimeGrid,
    build_tree,
    conditional_expectation_via_weights,
    make_grid,
    simulate_paths,
    tree_conditional_expectation,
)
from .problems import (
    GENERATOR_FAMILIES,
    FREE_TERM_FUNCTIONALS,
    HYPOTHESIS_IDS,
    AssumptionReport,
    FreeTermSpec,
    GeneratorSpec,
    Problem,
    SampleConfig,
    catalog_list,
    check_assumptions,
    delta_to_power,
    eval_free_term,
    eval_generator,
    power_to_delta,
    sign_flip_generator,
)
from .tree_solver import (
    TreeSolution,
    TreeSolveConfig,
    entropic_reference,
    solve_bsde_tree,
)
from .mc_solver import BasisSpec, McSolveConfig, McSolution, regress, solve_bsde_mc
from .volterra import (
    BsvieSolution,
    FamilySolution,
    PicardConfig,
    PicardReport,
    check_bsde_reduction,
    solve_bsvie,
    solve_inner_family,
    weighted_norm,
    zero_diagonal,
)
from .risk import (
    AxiomCheck,
    AxiomSuiteReport,
    ExtendedRiskResult,
    RiskCurve,
    RiskQuery,
    axiom_suite,
    entropic_risk,
    entropic_risk_mc,
    entropic_risk_via_bsde,
    equilibrium_risk_bsvie,
    extended_risk_bsde,
    membership_statistic,
    naive_odd_power_risk,
    odd_power,
)
from .diagnostics import (
    BmoEstimate,
    BoundCheck,
    ContractionTrace,
    SuperquadDemoReport,
    bmo_estimate,
    bmo_estimate_bsvie,
    contraction_trace,
    exp_moment_bound_check,
    exp_moment_bound_crosscheck,
    exp_power,
    log_exp_power,
    subadditivity_check,
    superquad_demo,
)
from .config import CONFIG_SCHEMA, RunConfig, load_config, validate_config

__version__ = "0.1.0"

__all__ = [
    "BsvieError",
    "ConfigurationError",
    "EvaluationDomainError",
    "InnerIterationError",
    "NumericBlowupError",
    "OuterIndexError",
    "RegularizationNeededError",
    "BinomialTree",
    "PathEnsemble",
    "RandomStream",
    "TimeGrid",
    "build_tree",
    "conditional_expectation_via_weights",
    "make_grid",
    "simulate_paths",
    "tree_conditional_expectation",
    "GENERATOR_FAMILIES",
    "FREE_TERM_FUNCTIONALS",
    "HYPOTHESIS_IDS",
    "AssumptionReport",
    "FreeTermSpec",
    "GeneratorSpec",
    "Problem",
    "SampleConfig",
    "catalog_list",
    "check_assumptions",
    "delta_to_power",
    "eval_free_term",
    "eval_generator",
    "power_to_delta",
    "sign_flip_generator",
    "TreeSolution",
    "TreeSolveConfig",
    "entropic_reference",
    "solve_bsde_tree",
    "BasisSpec",
    "McSolveConfig",
    "McSolution",
    "regress",
    "solve_bsde_mc",
    "BsvieSolution",
    "FamilySolution",
    "PicardConfig",
    "PicardReport",
    "check_bsde_reduction",
    "solve_bsvie",
    "solve_inner_family",
    "weighted_norm",
    "zero_diagonal",
    "AxiomCheck",
    "AxiomSuiteReport",
    "ExtendedRiskResult",
    "RiskCurve",
    "RiskQuery",
    "axiom_suite",
    "entropic_risk",
    "entropic_risk_mc",
    "entropic_risk_via_bsde",
    "equilibrium_risk_bsvie",
    "extended_risk_bsde",
    "membership_statistic",
    "naive_odd_power_risk",
    "odd_power",
    "BmoEstimate",
    "BoundCheck",
    "ContractionTrace",
    "SuperquadDemoReport",
    "bmo_estimate",
    "bmo_estimate_bsvie",
    "contraction_trace",
    "exp_moment_bound_check",
    "exp_moment_bound_crosscheck",
    "exp_power",
    "log_exp_power",
    "subadditivity_check",
    "superquad_demo",
    "CONFIG_SCHEMA",
    "RunConfig",
    "load_config",
    "validate_config",
    "__version__",
]
