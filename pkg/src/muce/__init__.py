"""Multi-dose, multi-indication expansion-cohort trial engine.

Posterior inference for the latent-probit borrowing design, comparator
designs (Simon's two-stage, BBHM, EXNEX), replicated trial simulation with
interim futility stopping, and decision-threshold calibration.
"""

__version__ = "0.1.0"

from .model import (
    HYPER_SETTINGS,
    Hyperparameters,
    McmcConfig,
    TrialDataset,
    TrialLayout,
    binomial_loglik,
    hyper_setting,
    inv_logit,
    logit,
    prior_correlation,
    prior_mixture_weight,
    trunc_cauchy_logpdf,
)
from .mcmc import (
    ChainDiagnostics,
    PosteriorDraws,
    PosteriorReport,
    diagnostics,
    muce_fit,
    sample_trunc_normal,
    update_effects,
    update_theta,
    update_z,
)
from .comparators import (
    BbhmHyper,
    ComparatorReport,
    ExnexHyper,
    SimonDesign,
    bbhm_fit,
    exnex_fit,
    fwer_independent,
    simon_search,
    two_stage_error_rates,
)
from .trial import (
    CalibrationResult,
    DesignSpec,
    OCReport,
    SCENARIOS,
    Scenario,
    TrialResult,
    calibrate_phi1,
    calibrate_phi2,
    conduct_trial,
    merge_oc_reports,
    scenario_by_name,
    simulate_oc,
)

__all__ = [
    "BbhmHyper",
    "CalibrationResult",
    "ComparatorReport",
    "DesignSpec",
    "ExnexHyper",
    "OCReport",
    "SCENARIOS",
    "Scenario",
    "SimonDesign",
    "TrialResult",
    "bbhm_fit",
    "calibrate_phi1",
    "calibrate_phi2",
    "conduct_trial",
    "exnex_fit",
    "fwer_independent",
    "merge_oc_reports",
    "scenario_by_name",
    "simon_search",
    "simulate_oc",
    "two_stage_error_rates",
    "HYPER_SETTINGS",
    "Hyperparameters",
    "McmcConfig",
    "TrialDataset",
    "TrialLayout",
    "binomial_loglik",
    "hyper_setting",
    "inv_logit",
    "logit",
    "prior_correlation",
    "prior_mixture_weight",
    "trunc_cauchy_logpdf",
    "ChainDiagnostics",
    "PosteriorDraws",
    "PosteriorReport",
    "diagnostics",
    "muce_fit",
    "sample_trunc_normal",
    "update_effects",
    "update_theta",
    "update_z",
    "__version__",
]
