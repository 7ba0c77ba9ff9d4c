"""Gaussian likelihood: datasets, multi-start MLE fitting, log-likelihood at the MLE."""

from __future__ import annotations

import math
import warnings
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .expr import evaluate_batch, strict_signature

LOG_2PI = float(np.log(2.0 * np.pi))

# variance floor used when clamping exact fits, per config flag
EPS_VAR = 1e-12


class FitError(RuntimeError):
    pass


class OverparameterizedModelError(FitError):
    """More distinct parameters than data points."""


class UnfittableModelError(FitError):
    """Every restart produced a non-finite objective."""


class DegenerateFitError(FitError):
    """SSE = 0 makes the MLE noise variance collapse."""


class Dataset:
    """Immutable N x d feature matrix plus length-N target vector."""

    def __init__(self, features, target, column_names=None):
        features = np.atleast_2d(np.asarray(features, dtype=float))
        target = np.asarray(target, dtype=float).ravel()
        if features.shape[0] != target.shape[0]:
            raise ValueError(
                f"feature rows ({features.shape[0]}) != target length ({target.shape[0]})"
            )
        if target.shape[0] < 1:
            raise ValueError("dataset must contain at least one observation")
        if not (np.all(np.isfinite(features)) and np.all(np.isfinite(target))):
            raise ValueError("dataset contains non-finite entries")
        self.features = features
        self.target = target
        self.n = target.shape[0]
        self.n_features = features.shape[1]
        if column_names is None:
            column_names = [f"x{j}" for j in range(self.n_features)]
        self.column_names = list(column_names)
        features.setflags(write=False)
        target.setflags(write=False)


@dataclass(frozen=True)
class FitConfig:
    restarts: int = 10
    max_iters: int = 2000
    tolerance: float = 1e-10
    seed: int = 0
    clamp_zero_sse: bool = True


@dataclass(frozen=True)
class FitResult:
    theta_hat: dict
    sigma_hat: float
    sse: float
    log_likelihood: float
    converged: bool
    restarts_used: int = 0
    param_names: tuple = field(default=())


def _exact_sum_sq(residuals):
    # math.fsum is exactly rounded, so the result cannot depend on the buffer
    # alignment of the intermediate array the way numpy's pairwise reduction
    # can; SSE comparisons between restarts decide fits by ~1e-11 margins
    return math.fsum((residuals * residuals).tolist())


def sse(tree, params, data):
    """Sum of squared residuals; +inf if the model goes non-finite anywhere."""
    pred = evaluate_batch(tree, params, data.features)
    if not np.all(np.isfinite(pred)):
        return float("inf")
    return _exact_sum_sq(data.target - pred)


def log_likelihood_mle(tree, fit, data):
    """Log-likelihood at the MLE: -(N/2)[log 2pi + log(SSE/N) + 1]."""
    return _log_likelihood_from_sse(fit.sse, data.n)


def _log_likelihood_from_sse(sse_value, n):
    if sse_value == 0.0:
        raise DegenerateFitError("SSE = 0: MLE noise variance is zero")
    if not np.isfinite(sse_value):
        return float("-inf")
    return -(n / 2.0) * (LOG_2PI + np.log(sse_value / n) + 1.0)


def _fit_seed(base_seed, signature):
    return np.random.SeedSequence([int(base_seed) & 0xFFFFFFFF, zlib.crc32(signature.encode())])


def fit_params(tree, data, cfg=FitConfig()):
    """Minimize SSE over the tree's parameters by multi-start local descent.

    Heavy-tailed initial draws, coarse trust-region screening on a subsample,
    full-data polish of every improving restart. Deterministic given
    (tree structure, data, cfg.seed).
    """
    names = list(tree.param_names)
    k = len(names)
    if k > data.n:
        raise OverparameterizedModelError(
            f"model has {k} parameters but only {data.n} observations"
        )

    if k == 0:
        sse_val = sse(tree, {}, data)
        if not np.isfinite(sse_val):
            raise UnfittableModelError("parameter-free model is non-finite on the data")
        return _finish(tree, {}, names, sse_val, True, 0, data, cfg)

    y = data.target
    X = data.features
    # coarse restarts screen on a deterministic subsample; the full dataset
    # decides which ones are worth polishing
    n_sub = min(data.n, max(128, k + 1))
    idx = np.unique(np.linspace(0, data.n - 1, n_sub).astype(int))
    y_sub = y[idx]
    X_sub = X[idx]
    big = 1e10  # stands in for non-finite residuals inside MINPACK

    def residuals(theta, Xm, ym):
        params = dict(zip(names, theta))
        pred = evaluate_batch(tree, params, Xm)
        return np.nan_to_num(ym - pred, nan=big, posinf=-big, neginf=big)

    def full_sse(theta):
        params = dict(zip(names, theta))
        pred = evaluate_batch(tree, params, X)
        if not np.all(np.isfinite(pred)):
            return float("inf")
        return _exact_sum_sq(y - pred)

    # trust-region reflective rather than MINPACK lmdif: lmdif's answer for a
    # fixed input varies with process memory state (it slides along flat
    # valleys of non-identifiable models), which breaks run-to-run
    # reproducibility; trf is bit-stable for identical inputs
    def polish(theta0):
        # trf rejects non-finite Jacobian scalings outright (the clamped
        # residual plateau at +-big can overflow them); treat that restart as
        # stuck at its starting point instead of aborting the whole fit
        try:
            res = least_squares(
                residuals,
                theta0,
                args=(X, y),
                method="trf",
                max_nfev=min(cfg.max_iters, 300) * (k + 1),
                xtol=max(cfg.tolerance, 1e-15),
                ftol=max(cfg.tolerance, 1e-15),
                gtol=max(cfg.tolerance, 1e-15),
            )
        except ValueError:
            return theta0, full_sse(theta0), False
        sol = np.atleast_1d(res.x)
        return sol, full_sse(sol), res.status > 0

    rng = np.random.default_rng(_fit_seed(cfg.seed, strict_signature(tree)))
    scales = (1.0, 3.0)
    theta0s = [rng.standard_cauchy(k) * scales[r % len(scales)] for r in range(cfg.restarts)]

    best_theta = None
    best_sse = float("inf")
    best_converged = False
    restarts_used = 0
    # pin the floating-point warning environment: restarts routinely overflow
    # (non-finites are handled explicitly above), and numpy results can differ
    # minutely depending on the ambient warnings state, which would make fits
    # depend on caller history
    with warnings.catch_warnings(), np.errstate(all="ignore"):
        warnings.simplefilter("ignore", RuntimeWarning)
        for theta0 in theta0s:
            pred0 = residuals(theta0, X_sub, y_sub)
            if np.any(np.abs(pred0) >= big):
                continue
            restarts_used += 1
            try:
                coarse_res = least_squares(
                    residuals,
                    theta0,
                    args=(X_sub, y_sub),
                    method="trf",
                    max_nfev=30 * (k + 1),
                    xtol=1e-8,
                    ftol=1e-8,
                    gtol=1e-8,
                )
            except ValueError:
                continue
            coarse = np.atleast_1d(coarse_res.x)
            if full_sse(coarse) < best_sse:
                theta, sse_val, ok = polish(coarse)
                if sse_val < best_sse:
                    best_theta, best_sse, best_converged = theta, sse_val, ok
            if best_sse <= data.n * EPS_VAR:
                break

    if best_theta is None:
        raise UnfittableModelError("all restarts produced non-finite objectives")

    theta_hat = dict(zip(names, (float(v) for v in best_theta)))
    return _finish(tree, theta_hat, names, best_sse, best_converged, restarts_used, data, cfg)


def _finish(tree, theta_hat, names, sse_val, converged, restarts_used, data, cfg):
    sse_for_ll = sse_val
    if cfg.clamp_zero_sse:
        sse_for_ll = max(sse_val, data.n * EPS_VAR)
    ll = _log_likelihood_from_sse(sse_for_ll, data.n)
    sigma_hat = float(np.sqrt(sse_for_ll / data.n))
    return FitResult(
        theta_hat=theta_hat,
        sigma_hat=sigma_hat,
        sse=float(sse_val),
        log_likelihood=float(ll),
        converged=converged,
        restarts_used=restarts_used,
        param_names=tuple(names),
    )
