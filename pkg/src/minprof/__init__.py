"""Bayesian growth-curve projection of minimum-proficiency rates."""

__version__ = "0.1.0"

from .bma import (BMARegressor, BmaResult, GPriorSpec, ModelId, ModelPriorSpec,  # noqa: E402
                  averaged_prediction, bd_mcmc_bma, enumerate_bma, log_marginal_likelihood,
                  model_prior_log, predictive_density)
from .exceptions import ConfigError, DataError, MinprofError, NumericalError  # noqa: E402
from .impute import ImputationReport, PMMImputer, pmm_impute  # noqa: E402
from .lgcm import (GrowthPosterior, GrowthPriors, LatentGrowthCurve, LoadingSpec,  # noqa: E402
                   McmcConfig, fit_growth, fit_panel, pointwise_log_lik, posterior_slopes,
                   simulate_panel, unconditional_growth)
from .panel import (DesignMatrix, IndicatorTable, OutcomeSeries, drop_collinear,  # noqa: E402
                    inv_logit, load_panel, logit, make_difference_variables, standardize)
from .project import ProjectionResult, change_table, project_country, project_overall  # noqa: E402
from .score import LooResult, kld_gaussian, kld_samples, log_predictive_score, psis_loo  # noqa: E402

__all__ = [
    "BMARegressor", "BmaResult", "GPriorSpec", "ModelId", "ModelPriorSpec",
    "averaged_prediction", "bd_mcmc_bma", "enumerate_bma", "log_marginal_likelihood",
    "model_prior_log", "predictive_density",
    "ConfigError", "DataError", "MinprofError", "NumericalError",
    "ImputationReport", "PMMImputer", "pmm_impute",
    "GrowthPosterior", "GrowthPriors", "LatentGrowthCurve", "LoadingSpec", "McmcConfig",
    "fit_growth", "fit_panel", "pointwise_log_lik", "posterior_slopes", "simulate_panel",
    "unconditional_growth",
    "DesignMatrix", "IndicatorTable", "OutcomeSeries", "drop_collinear", "inv_logit",
    "load_panel", "logit", "make_difference_variables", "standardize",
    "ProjectionResult", "change_table", "project_country", "project_overall",
    "LooResult", "kld_gaussian", "kld_samples", "log_predictive_score", "psis_loo",
]
