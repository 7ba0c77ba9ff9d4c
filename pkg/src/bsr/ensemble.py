"""Posterior-trace post-processing: model averaging, Rashomon sets, learnability."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expr import ExprTree, Param, evaluate, print_expression, structure_signature
from .score import ScoreConfig, description_length

QUANTILES = (0.05, 0.25, 0.75, 0.95)


@dataclass(frozen=True)
class PredictivePosterior:
    x: tuple
    samples: tuple  # (predicted value, weight) pairs
    mean: float
    median: float
    quantiles: dict  # level -> value


@dataclass(frozen=True)
class RashomonSet:
    delta: float
    members: tuple  # (signature, representative expression, best L, mass share)


@dataclass(frozen=True)
class EnsembleConfig:
    include_noise: bool = False
    noise_draws: int = 20
    seed: int = 0


def predict_map(tree, theta_hat, x):
    """Point prediction of a single fitted model; non-finite marks a violation."""
    return evaluate(tree, theta_hat, x)


def _weighted_quantile(values, weights, q):
    order = np.argsort(values)
    v = values[order]
    w = weights[order]
    cdf = np.cumsum(w) - 0.5 * w
    cdf /= w.sum()
    return float(np.interp(q, cdf, v))


def predict_ensemble(trace, x, cfg=EnsembleConfig()):
    """Equal-weight model average over the thinned beta=1 records at x.

    With cfg.include_noise, each record contributes Gaussian draws at its
    fitted noise scale, approximating the full predictive distribution.
    """
    if not trace.records:
        raise ValueError("empty trace")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed & 0xFFFFFFFF, 303]))
    values = []
    weights = []
    for r in trace.records:
        theta = r.fit.theta_hat if r.fit else {}
        y = evaluate(r.tree, theta, x)
        if not np.isfinite(y):
            continue
        if cfg.include_noise and r.fit is not None and cfg.noise_draws > 0:
            draws = y + r.fit.sigma_hat * rng.standard_normal(cfg.noise_draws)
            values.extend(draws.tolist())
            weights.extend([1.0 / cfg.noise_draws] * cfg.noise_draws)
        else:
            values.append(y)
            weights.append(1.0)
    if not values:
        raise ValueError("all trace models are non-finite at the query point")
    values = np.asarray(values)
    weights = np.asarray(weights)
    weights = weights / weights.sum()
    mean = float(np.sum(values * weights))
    quantiles = {q: _weighted_quantile(values, weights, q) for q in QUANTILES}
    median = _weighted_quantile(values, weights, 0.5)
    return PredictivePosterior(
        x=tuple(x.tolist()),
        samples=tuple(zip(values.tolist(), weights.tolist())),
        mean=mean,
        median=median,
        quantiles=quantiles,
    )


def rashomon_set(trace, delta):
    """Distinct structures whose best L lies within delta of the minimum."""
    if not trace.records:
        raise ValueError("empty trace")
    if delta < 0:
        raise ValueError("delta must be >= 0")
    groups = {}
    for r in trace.records:
        sig = structure_signature(r.tree)
        g = groups.setdefault(sig, {"best": float("inf"), "repr": None, "count": 0})
        g["count"] += 1
        if r.energy < g["best"]:
            g["best"] = r.energy
            g["repr"] = print_expression(r.tree)
    total = len(trace.records)
    l_min = min(g["best"] for g in groups.values())
    members = [
        (sig, g["repr"], g["best"], g["count"] / total)
        for sig, g in groups.items()
        if g["best"] <= l_min + delta
    ]
    members.sort(key=lambda m: (m[2], m[0]))
    return RashomonSet(delta=delta, members=tuple(members))


def trivial_model(n_features):
    """The prior-maximizing model: a single constant parameter."""
    return ExprTree(Param("th0"), n_features)


def learnability_gap(m_star, data, hp, cfg=ScoreConfig()):
    """L(m*, D) - L(m0, D); negative means the ground truth is detectable."""
    l_star = description_length(m_star, data, hp, cfg).description_length
    m0 = trivial_model(data.n_features)
    l_trivial = description_length(m0, data, hp, cfg).description_length
    return float(l_star - l_trivial)


def write_predictions(posteriors, path):
    """TSV: x columns, mean, median, q05, q25, q75, q95."""
    with open(path, "w") as fh:
        if posteriors:
            d = len(posteriors[0].x)
            cols = [f"x{j}" for j in range(d)]
            fh.write("\t".join(cols + ["mean", "median", "q05", "q25", "q75", "q95"]) + "\n")
        for p in posteriors:
            row = [repr(float(v)) for v in p.x]
            row += [repr(float(p.mean)), repr(float(p.median))]
            row += [repr(float(p.quantiles[q])) for q in QUANTILES]
            fh.write("\t".join(row) + "\n")


def write_rashomon(rset, path):
    with open(path, "w") as fh:
        fh.write(f"delta\t{rset.delta!r}\n")
        fh.write("signature\texpression\tbest_dl\tmass_share\n")
        for sig, expr_s, best, share in rset.members:
            fh.write(f"{sig}\t{expr_s}\t{best!r}\t{share!r}\n")
