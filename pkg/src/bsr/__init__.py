"""Bayesian symbolic regression: description-length scored expression search."""

from .ensemble import learnability_gap, predict_ensemble, predict_map, rashomon_set
from .estimator import BayesianSymbolicRegressor
from .expr import (
    DEFAULT_BASIS,
    ExprTree,
    evaluate,
    parse_expression,
    print_expression,
    structure_signature,
)
from .likelihood import Dataset, FitConfig, fit_params, log_likelihood_mle, sse
from .sampler import SamplerConfig, map_model, sample_posterior
from .score import (
    PriorHyperparams,
    ScoreConfig,
    bic1,
    default_prior_hyperparams,
    description_length,
    fisher_log_det,
    log_prior,
    posterior_weights,
)

__version__ = "0.1.0"

__all__ = [
    "BayesianSymbolicRegressor",
    "Dataset",
    "DEFAULT_BASIS",
    "ExprTree",
    "FitConfig",
    "PriorHyperparams",
    "SamplerConfig",
    "ScoreConfig",
    "bic1",
    "default_prior_hyperparams",
    "description_length",
    "evaluate",
    "fisher_log_det",
    "fit_params",
    "learnability_gap",
    "log_likelihood_mle",
    "log_prior",
    "map_model",
    "parse_expression",
    "posterior_weights",
    "predict_ensemble",
    "predict_map",
    "print_expression",
    "rashomon_set",
    "sample_posterior",
    "sse",
    "structure_signature",
]
