"""Description-length scoring: BIC terms, Fisher correction, operator prior."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .expr import evaluate_batch
from .likelihood import FitConfig, fit_params


class PriorError(ValueError):
    pass


@dataclass(frozen=True)
class PriorHyperparams:
    """Per-operator (alpha, beta) coefficients of the max-entropy prior."""

    alpha: dict
    beta: dict

    def check_covers(self, symbols):
        missing = [s for s in symbols if s not in self.alpha or s not in self.beta]
        if missing:
            raise PriorError(f"operators missing from prior hyperparams: {missing}")


def default_prior_hyperparams(basis):
    """Surrogate default table: the published corpus-fitted values are not shipped."""
    from .expr import OPERATOR_ARITY

    alpha = {}
    beta = {}
    for sym in basis:
        if OPERATOR_ARITY[sym] == 2:
            alpha[sym], beta[sym] = 3.0, 0.1
        else:
            alpha[sym], beta[sym] = 5.0, 0.2
    return PriorHyperparams(alpha=alpha, beta=beta)


@dataclass(frozen=True)
class ScoreConfig:
    use_fisher: bool = False
    hessian_step: float = 1e-4
    fit: FitConfig = field(default_factory=FitConfig)


@dataclass(frozen=True)
class ScoreBreakdown:
    neg_log_likelihood_mle: float
    k: int
    n: int
    bic1: float
    neg_log_prior: float
    description_length: float
    variant_used: str  # "B1" or "B2"
    fisher_log_det: Optional[float] = None
    bic2: Optional[float] = None
    fisher_normalization: str = "per_datum"


def log_prior(tree, hp):
    """log p(m) = -sum_o (alpha_o * n_o + beta_o * n_o^2); unnormalized."""
    hp.check_covers(tree.operator_counts.keys())
    total = 0.0
    for sym, n_o in tree.operator_counts.items():
        total += hp.alpha[sym] * n_o + hp.beta[sym] * n_o ** 2
    return -total


def bic1(fit, k, n):
    """B1 = -2 log p(D|m, theta_hat) + (k+1) log N; the +1 accounts for sigma."""
    return -2.0 * fit.log_likelihood + (k + 1) * np.log(n)


def fisher_log_det(tree, fit, data, step=1e-4):
    """log-determinant of the per-datum observed information in (theta, sigma).

    Central finite differences of the negative log-likelihood at the MLE,
    divided by N. Returns None when the Hessian is not positive definite.
    """
    if not np.isfinite(fit.sse) or fit.sse <= 0.0:
        return None
    names = list(fit.param_names)
    k = len(names)
    n = data.n
    y = data.target
    X = data.features
    log_2pi = np.log(2.0 * np.pi)

    def nll(v):
        sigma = v[-1]
        if sigma <= 0:
            return float("inf")
        params = dict(zip(names, v[:-1]))
        pred = evaluate_batch(tree, params, X)
        if not np.all(np.isfinite(pred)):
            return float("inf")
        s = float(np.sum((y - pred) ** 2))
        return n * np.log(sigma) + s / (2.0 * sigma ** 2) + 0.5 * n * log_2pi

    v0 = np.array([fit.theta_hat[nm] for nm in names] + [fit.sigma_hat], dtype=float)
    h = step * (1.0 + np.abs(v0))
    h[-1] = min(h[-1], 0.5 * fit.sigma_hat)  # keep sigma positive
    dim = k + 1
    H = np.empty((dim, dim))
    f0 = nll(v0)
    if not np.isfinite(f0):
        return None
    for i in range(dim):
        for j in range(i, dim):
            if i == j:
                vp = v0.copy(); vp[i] += h[i]
                vm = v0.copy(); vm[i] -= h[i]
                H[i, i] = (nll(vp) - 2.0 * f0 + nll(vm)) / h[i] ** 2
            else:
                vpp = v0.copy(); vpp[i] += h[i]; vpp[j] += h[j]
                vpm = v0.copy(); vpm[i] += h[i]; vpm[j] -= h[j]
                vmp = v0.copy(); vmp[i] -= h[i]; vmp[j] += h[j]
                vmm = v0.copy(); vmm[i] -= h[i]; vmm[j] -= h[j]
                H[i, j] = H[j, i] = (nll(vpp) - nll(vpm) - nll(vmp) + nll(vmm)) / (
                    4.0 * h[i] * h[j]
                )
    if not np.all(np.isfinite(H)):
        return None
    info = H / n
    eigvals = np.linalg.eigvalsh(0.5 * (info + info.T))
    if np.any(eigvals <= 0):
        return None
    return float(np.sum(np.log(eigvals)))


def description_length(tree, data, hp, cfg=ScoreConfig()):
    """Full score: L = B/2 - log p(m), with B = B1 or the Fisher-corrected B2."""
    fit = fit_params(tree, data, cfg.fit)
    return score_fit(tree, fit, data, hp, cfg)


def score_fit(tree, fit, data, hp, cfg=ScoreConfig()):
    """Score an already-fitted model."""
    k = tree.param_count
    nlp = -log_prior(tree, hp)
    b1 = float(bic1(fit, k, data.n))
    fld = None
    b2 = None
    variant = "B1"
    if cfg.use_fisher:
        fld = fisher_log_det(tree, fit, data, step=cfg.hessian_step)
        if fld is not None:
            b2 = b1 + fld
            variant = "B2"
    b = b2 if variant == "B2" else b1
    return ScoreBreakdown(
        neg_log_likelihood_mle=float(-fit.log_likelihood),
        k=k,
        n=data.n,
        bic1=b1,
        neg_log_prior=float(nlp),
        description_length=float(b / 2.0 + nlp),
        variant_used=variant,
        fisher_log_det=fld,
        bic2=b2,
    )


def posterior_weights(scores):
    """Softmax of -L over a list of ScoreBreakdown (or raw L values)."""
    if len(scores) == 0:
        raise ValueError("posterior_weights needs at least one score")
    L = np.array(
        [getattr(s, "description_length", s) for s in scores], dtype=float
    )
    if not np.all(np.isfinite(L)):
        raise ValueError("all description lengths must be finite")
    w = np.exp(-(L - L.min()))
    return list(w / w.sum())
