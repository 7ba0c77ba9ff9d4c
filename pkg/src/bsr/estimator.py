"""Scikit-learn style front end for the symbolic regression engine."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .ensemble import EnsembleConfig, predict_ensemble, rashomon_set
from .expr import DEFAULT_BASIS, print_expression
from .likelihood import Dataset, FitConfig
from .sampler import SamplerConfig, geometric_ladder, map_model, sample_posterior
from .score import ScoreConfig, default_prior_hyperparams


class BayesianSymbolicRegressor(BaseEstimator, RegressorMixin):
    """Discover a closed-form model of y(X) by posterior sampling.

    fit() runs tempered MCMC over expression trees scored by description
    length; predict() returns either the MAP model's predictions or the
    posterior-ensemble mean.
    """

    def __init__(
        self,
        basis=DEFAULT_BASIS,
        n_temps=4,
        temp_ratio=1.5,
        steps=600,
        burn_in=200,
        thinning=3,
        max_depth=4,
        restarts=10,
        use_fisher=False,
        prior_hyperparams=None,
        predict_with="map",
        random_state=0,
    ):
        self.basis = basis
        self.n_temps = n_temps
        self.temp_ratio = temp_ratio
        self.steps = steps
        self.burn_in = burn_in
        self.thinning = thinning
        self.max_depth = max_depth
        self.restarts = restarts
        self.use_fisher = use_fisher
        self.prior_hyperparams = prior_hyperparams
        self.predict_with = predict_with
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        data = Dataset(X, y)
        hp = self.prior_hyperparams
        if hp is None:
            hp = default_prior_hyperparams(tuple(self.basis))
        sampler_cfg = SamplerConfig(
            betas=geometric_ladder(self.n_temps, self.temp_ratio),
            steps=self.steps,
            burn_in=self.burn_in,
            thinning=self.thinning,
            max_depth=self.max_depth,
            basis=tuple(self.basis),
            seed=int(self.random_state),
        )
        score_cfg = ScoreConfig(
            use_fisher=self.use_fisher,
            fit=FitConfig(restarts=self.restarts, seed=int(self.random_state)),
        )
        self.trace_ = sample_posterior(data, hp, sampler_cfg, score_cfg)
        tree, breakdown = map_model(self.trace_)
        best = min(self.trace_.records, key=lambda r: (r.energy, r.step))
        self.map_tree_ = tree
        self.map_expression_ = print_expression(tree)
        self.map_score_ = breakdown
        self.map_params_ = best.fit.theta_hat if best.fit else {}
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "trace_")
        X = check_array(X)
        if self.predict_with == "map":
            from .expr import evaluate_batch

            return evaluate_batch(self.map_tree_, self.map_params_, X)
        out = np.empty(X.shape[0])
        cfg = EnsembleConfig(seed=int(self.random_state))
        for i, row in enumerate(X):
            out[i] = predict_ensemble(self.trace_, row, cfg).mean
        return out

    def rashomon_set(self, delta):
        check_is_fitted(self, "trace_")
        return rashomon_set(self.trace_, delta)
