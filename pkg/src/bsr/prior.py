"""Fit max-entropy prior hyperparameters by matching operator-count moments."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .sampler import PriorOnlyScorer, SamplerConfig, run_sampler
from .score import PriorHyperparams


@dataclass(frozen=True)
class TargetMoments:
    """Per-operator target mean count and mean squared count."""

    records: tuple  # of (symbol, mean, mean_square)

    def validate(self):
        for sym, mean, mean_square in self.records:
            if mean < 0:
                raise ValueError(f"target mean for {sym!r} must be >= 0")
            if mean_square < mean ** 2:
                raise ValueError(
                    f"infeasible target for {sym!r}: mean_square < mean^2"
                )

    def symbols(self):
        return [r[0] for r in self.records]


@dataclass(frozen=True)
class PriorFitConfig:
    samples: int = 20000
    samples_per_iter: int = 2000
    max_iterations: int = 200
    tol: float = 0.05
    eta0: float = 0.5
    tau: float = 20.0
    seed: int = 0
    # near-zero targets switch to an absolute error criterion
    abs_floor: float = 0.4
    # moment mismatches are clipped to +-clip before each update step
    clip: float = 1.0
    # sample count for the in-loop convergence checks; larger than
    # samples_per_iter because a noisy check can stop the loop early
    check_samples: int = 6000
    # iterates are averaged over this many trailing iterations before the
    # convergence check; the raw iterate can settle into a small limit cycle
    # around the solution and the tail average lands on its center
    avg_window: int = 20
    grammar: SamplerConfig = field(
        default_factory=lambda: SamplerConfig(
            betas=(1.0,), burn_in=500, thinning=2, swap_period=0
        )
    )


@dataclass(frozen=True)
class PriorFitReport:
    hyperparams: PriorHyperparams
    achieved: dict  # symbol -> (mean, mean_square)
    iterations: int
    converged: bool
    max_rel_error: float


def sample_prior_models(hp, grammar_cfg, count, seed):
    """Draw trees from p(m) alone via the MCMC machinery at temperature 1."""
    if count < 1:
        raise ValueError("count must be >= 1")
    cfg = replace(
        grammar_cfg,
        betas=(1.0,),
        steps=count * grammar_cfg.thinning,
        seed=seed,
        swap_period=0,
    )
    trace = run_sampler(PriorOnlyScorer(hp), cfg, n_features=1)
    return [r.tree for r in trace.records[:count]]


def measure_moments(trees, symbols):
    """Empirical mean and mean-square operator counts over a sample of trees."""
    counts = {sym: np.zeros(len(trees)) for sym in symbols}
    for i, tree in enumerate(trees):
        for sym in symbols:
            counts[sym][i] = tree.operator_counts.get(sym, 0)
    return {
        sym: (float(c.mean()), float(np.mean(c ** 2))) for sym, c in counts.items()
    }


def _moment_error(est, target, floor):
    return abs(est - target) / max(target, floor)


def fit_prior_hyperparams(targets, cfg=PriorFitConfig(), init=None):
    """Robbins-Monro moment matching of (alpha_o, beta_o) to the targets.

    alpha moves with the mean-count mismatch, beta with the squared-count
    mismatch (clamped non-negative). Mismatches are clipped so that the huge
    trees sampled under an early, too-weak prior cannot blow up the iterate.
    The returned hyperparams are a Polyak-style tail average of the iterates,
    which cancels the small limit cycles the raw iterate can settle into.
    Non-convergence is reported, not raised.
    """
    targets.validate()
    symbols = targets.symbols()
    grammar = replace(cfg.grammar, basis=tuple(symbols))
    if init is None:
        alpha = {sym: 1.0 for sym in symbols}
        beta = {sym: 0.0 for sym in symbols}
    else:
        alpha = dict(init.alpha)
        beta = dict(init.beta)

    target_mean = {r[0]: r[1] for r in targets.records}
    target_sq = {r[0]: r[2] for r in targets.records}

    def check_error(moments):
        return max(
            max(
                _moment_error(moments[sym][0], target_mean[sym], cfg.abs_floor),
                _moment_error(moments[sym][1], target_sq[sym], cfg.abs_floor),
            )
            for sym in symbols
        )

    history = deque(maxlen=cfg.avg_window)
    stopped_early = False
    iterations = 0
    streak = 0
    avg = (dict(alpha), dict(beta))
    for t in range(cfg.max_iterations):
        iterations = t + 1
        eta = cfg.eta0 / (1.0 + t / cfg.tau)
        hp = PriorHyperparams(alpha=dict(alpha), beta=dict(beta))
        trees = sample_prior_models(hp, grammar, cfg.samples_per_iter, seed=cfg.seed + t)
        moments = measure_moments(trees, symbols)
        for sym in symbols:
            est_mean, est_sq = moments[sym]
            d_mean = float(np.clip(est_mean - target_mean[sym], -cfg.clip, cfg.clip))
            d_sq = float(np.clip(est_sq - target_sq[sym], -cfg.clip, cfg.clip))
            alpha[sym] += eta * d_mean
            beta[sym] = max(0.0, beta[sym] + eta * d_sq)
        history.append((dict(alpha), dict(beta)))
        if len(history) < cfg.avg_window:
            continue
        avg = (
            {s: float(np.mean([h[0][s] for h in history])) for s in symbols},
            {s: float(np.mean([h[1][s] for h in history])) for s in symbols},
        )
        hp_avg = PriorHyperparams(alpha=avg[0], beta=avg[1])
        check = measure_moments(
            sample_prior_models(
                hp_avg, grammar, cfg.check_samples, seed=cfg.seed + 5 * 10 ** 5 + t
            ),
            symbols,
        )
        # early exit once the averaged iterate looks settled; the margin below
        # tol guards against check noise stopping the loop while the iterate
        # is still coarse, and single sub-margin checks are often flukes
        streak = streak + 1 if check_error(check) < 0.8 * cfg.tol else 0
        if streak >= 2:
            stopped_early = True
            break

    if not stopped_early and history:
        avg = (
            {s: float(np.mean([h[0][s] for h in history])) for s in symbols},
            {s: float(np.mean([h[1][s] for h in history])) for s in symbols},
        )
    hp = PriorHyperparams(alpha=dict(avg[0]), beta=dict(avg[1]))
    trees = sample_prior_models(hp, grammar, cfg.samples, seed=cfg.seed + 10 ** 6)
    achieved = measure_moments(trees, symbols)
    final_err = check_error(achieved)
    # convergence is judged on the honest large-sample evaluation of the
    # returned hyperparams, not on how the loop exited
    return PriorFitReport(
        hyperparams=hp,
        achieved=achieved,
        iterations=iterations,
        converged=final_err < cfg.tol,
        max_rel_error=final_err,
    )


# ---------------------------------------------------------------------------
# file formats

def read_target_moments(path):
    records = []
    with open(path) as fh:
        header = fh.readline().split()
        if header[:3] != ["symbol", "mean", "mean_square"]:
            raise ValueError(f"not a target-moments file: {path}")
        for line in fh:
            if not line.strip():
                continue
            sym, mean, mean_square = line.split()
            records.append((sym, float(mean), float(mean_square)))
    tm = TargetMoments(records=tuple(records))
    tm.validate()
    return tm


def write_hyperparams(hp, path):
    with open(path, "w") as fh:
        fh.write("symbol\talpha\tbeta\n")
        for sym in sorted(hp.alpha):
            fh.write(f"{sym}\t{hp.alpha[sym]!r}\t{hp.beta[sym]!r}\n")


def read_hyperparams(path):
    alpha = {}
    beta = {}
    with open(path) as fh:
        header = fh.readline().split()
        if header[:3] != ["symbol", "alpha", "beta"]:
            raise ValueError(f"not a prior hyperparams file: {path}")
        for line in fh:
            if not line.strip():
                continue
            sym, a, b = line.split()
            alpha[sym] = float(a)
            beta[sym] = float(b)
    return PriorHyperparams(alpha=alpha, beta=beta)


def write_fit_report(report, path):
    with open(path, "w") as fh:
        fh.write(f"converged\t{report.converged}\n")
        fh.write(f"iterations\t{report.iterations}\n")
        fh.write(f"max_rel_error\t{report.max_rel_error!r}\n")
        fh.write("symbol\talpha\tbeta\tachieved_mean\tachieved_mean_square\n")
        for sym in sorted(report.hyperparams.alpha):
            mean, sq = report.achieved[sym]
            fh.write(
                f"{sym}\t{report.hyperparams.alpha[sym]!r}\t"
                f"{report.hyperparams.beta[sym]!r}\t{mean!r}\t{sq!r}\n"
            )
