"""Metropolis MCMC over expression trees with parallel tempering.

The target at inverse temperature beta is exp(-beta * E(m)) where E is the
description length (posterior sampling) or the negative log-prior alone
(prior sampling). Moves: operator relabel, prune-and-graft, root flip,
leaf swap; each carries its exact log proposal ratio.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .expr import (
    DEFAULT_BASIS,
    OPERATOR_ARITY,
    ExprTree,
    Op,
    Param,
    Var,
    canonicalize_params,
    parse_expression,
    print_expression,
    strict_signature,
)
from .likelihood import FitError, FitResult
from .score import ScoreConfig, log_prior, score_fit
from . import likelihood

MOVE_TYPES = ("relabel", "graft", "root_flip", "leaf_swap")

DEFAULT_MOVE_PROBS = {"relabel": 0.2, "graft": 0.4, "root_flip": 0.2, "leaf_swap": 0.2}


def geometric_ladder(n_temps=6, ratio=1.5):
    return tuple(1.0 / ratio ** t for t in range(n_temps))


@dataclass(frozen=True)
class SamplerConfig:
    betas: tuple = field(default_factory=lambda: geometric_ladder(4))
    steps: int = 600
    burn_in: int = 200
    thinning: int = 3
    swap_period: int = 10
    move_probs: dict = field(default_factory=lambda: dict(DEFAULT_MOVE_PROBS))
    max_depth: int = 4
    basis: tuple = DEFAULT_BASIS
    p_leaf: float = 0.6
    p_var: float = 0.5
    seed: int = 0
    init_expression: Optional[str] = None

    def validate(self):
        betas = tuple(self.betas)
        if not betas or abs(betas[0] - 1.0) > 1e-12:
            raise ValueError("temperature ladder must start at beta = 1")
        if any(b2 >= b1 for b1, b2 in zip(betas, betas[1:])):
            raise ValueError("temperature ladder must be strictly decreasing")
        if any(b <= 0 for b in betas):
            raise ValueError("temperatures must be positive")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")
        total = sum(self.move_probs.get(m, 0.0) for m in MOVE_TYPES)
        if abs(total - 1.0) > 1e-9:
            raise ValueError("move probabilities must sum to 1")
        if not (0.0 < self.p_leaf < 1.0 and 0.0 < self.p_var < 1.0):
            raise ValueError("p_leaf and p_var must lie in (0, 1)")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")


@dataclass(frozen=True)
class TraceRecord:
    step: int
    chain: int
    beta: float
    tree: ExprTree
    fit: Optional[FitResult]
    score: object  # ScoreBreakdown for posterior runs, None for prior-only
    energy: float


@dataclass
class SamplerTrace:
    records: list = field(default_factory=list)
    move_counters: dict = field(default_factory=dict)  # move -> [accepted, proposed, skipped]
    swap_counters: dict = field(default_factory=dict)  # pair -> [accepted, attempted]


class SkipMove(Exception):
    """No valid move of the requested type exists for this tree."""


# ---------------------------------------------------------------------------
# random subtree growth and its exact generation probability

def grow_subtree(rng, depth_budget, cfg, counter):
    """Grow a random subtree within depth_budget; fresh parameter names."""
    if depth_budget > 0 and rng.random() >= cfg.p_leaf:
        sym = cfg.basis[rng.integers(len(cfg.basis))]
        arity = OPERATOR_ARITY[sym]
        children = tuple(
            grow_subtree(rng, depth_budget - 1, cfg, counter) for _ in range(arity)
        )
        return Op(sym, children)
    if rng.random() < cfg.p_var:
        return Var(int(rng.integers(counter["n_features"])))
    counter["params"] += 1
    return Param(f"new{counter['params']}")


def log_grow_prob(node, depth_budget, cfg, n_features):
    """log probability that grow_subtree generates this node shape.

    Parameter names are irrelevant (canonicalized later); constants are
    never generated, so any Const gives -inf.
    """
    if isinstance(node, Op):
        if depth_budget <= 0 or node.symbol not in cfg.basis:
            return float("-inf")
        lp = np.log1p(-cfg.p_leaf) - np.log(len(cfg.basis))
        for child in node.children:
            lp += log_grow_prob(child, depth_budget - 1, cfg, n_features)
        return lp
    leaf_lp = 0.0 if depth_budget <= 0 else np.log(cfg.p_leaf)
    if isinstance(node, Var):
        if node.index >= n_features:
            return float("-inf")
        return leaf_lp + np.log(cfg.p_var) - np.log(n_features)
    if isinstance(node, Param):
        return leaf_lp + np.log1p(-cfg.p_var)
    return float("-inf")  # Const


def _leaf_log_prob(node, cfg, n_features):
    if isinstance(node, Var):
        return np.log(cfg.p_var) - np.log(n_features)
    return np.log1p(-cfg.p_var)


# ---------------------------------------------------------------------------
# tree surgery helpers (preorder position indexing)

def _positions(node, depth=0, acc=None):
    if acc is None:
        acc = []
    acc.append((node, depth))
    if isinstance(node, Op):
        for child in node.children:
            _positions(child, depth + 1, acc)
    return acc


def _replace_at(node, index, replacement, counter=None):
    if counter is None:
        counter = [0]
    if counter[0] == index:
        counter[0] += 1
        return replacement
    counter[0] += 1
    if isinstance(node, Op):
        children = []
        for child in node.children:
            children.append(_replace_at(child, index, replacement, counter))
        return Op(node.symbol, tuple(children))
    return node


def _finish_tree(root, n_features):
    return canonicalize_params(ExprTree(root, n_features))


# ---------------------------------------------------------------------------
# moves

def _propose_relabel(tree, rng, cfg):
    positions = _positions(tree.root)
    candidates = []
    for i, (node, _) in enumerate(positions):
        if isinstance(node, Op):
            alts = [
                s
                for s in cfg.basis
                if s != node.symbol and OPERATOR_ARITY[s] == OPERATOR_ARITY[node.symbol]
            ]
            if alts:
                candidates.append((i, node, alts))
    if not candidates:
        raise SkipMove
    i, node, alts = candidates[rng.integers(len(candidates))]
    new_sym = alts[rng.integers(len(alts))]
    new_node = Op(new_sym, node.children)
    root = _replace_at(tree.root, i, new_node)
    # relabel preserves arities, so the candidate set size and the number of
    # alternatives per node are invariant: symmetric move
    return _finish_tree(root, tree.n_features), 0.0


def _propose_graft(tree, rng, cfg):
    positions = _positions(tree.root)
    n_nodes = len(positions)
    i = int(rng.integers(n_nodes))
    old_node, depth = positions[i]
    budget = cfg.max_depth - depth
    counter = {"params": 0, "n_features": tree.n_features}
    new_node = grow_subtree(rng, budget, cfg, counter)
    root = _replace_at(tree.root, i, new_node)
    cand = _finish_tree(root, tree.n_features)
    lp_fwd = -np.log(n_nodes) + log_grow_prob(new_node, budget, cfg, tree.n_features)
    lp_rev = -np.log(cand.n_nodes) + log_grow_prob(old_node, budget, cfg, tree.n_features)
    return cand, float(lp_rev - lp_fwd)


def _strip_options(root):
    """Ways to strip the root operator: list of kept-child indices, or [None] for unary."""
    if not isinstance(root, Op):
        return []
    if OPERATOR_ARITY[root.symbol] == 1:
        return [0]
    opts = []
    for keep in range(2):
        other = root.children[1 - keep]
        if isinstance(other, (Var, Param)):
            opts.append(keep)
    return opts


def _propose_root_flip(tree, rng, cfg):
    strip_opts = _strip_options(tree.root)
    can_strip = len(strip_opts) > 0
    p_wrap = 0.5 if can_strip else 1.0
    nf = tree.n_features

    if rng.random() < p_wrap:
        sym = cfg.basis[rng.integers(len(cfg.basis))]
        lp_fwd = np.log(p_wrap) - np.log(len(cfg.basis))
        if OPERATOR_ARITY[sym] == 1:
            new_root = Op(sym, (tree.root,))
        else:
            if rng.random() < cfg.p_var:
                leaf = Var(int(rng.integers(nf)))
            else:
                leaf = Param("newleaf")
            side = int(rng.integers(2))  # 0: old root on the left
            children = (tree.root, leaf) if side == 0 else (leaf, tree.root)
            new_root = Op(sym, children)
            lp_fwd += np.log(0.5) + _leaf_log_prob(leaf, cfg, nf)
        cand = _finish_tree(new_root, nf)
        # reverse: strip on the candidate, choosing to keep the old root
        rev_opts = _strip_options(new_root)
        lp_rev = np.log(0.5) - np.log(len(rev_opts))  # strip is always optional vs wrap
        return cand, float(lp_rev - lp_fwd)

    keep = strip_opts[rng.integers(len(strip_opts))]
    old_root = tree.root
    if OPERATOR_ARITY[old_root.symbol] == 1:
        kept = old_root.children[0]
        removed_leaf = None
    else:
        kept = old_root.children[keep]
        removed_leaf = old_root.children[1 - keep]
    cand = _finish_tree(kept, nf)
    lp_fwd = np.log(0.5) - np.log(len(strip_opts))
    # reverse: wrap the candidate back with the same operator (and leaf)
    rev_can_strip = len(_strip_options(kept)) > 0
    lp_rev = np.log(0.5 if rev_can_strip else 1.0) - np.log(len(cfg.basis))
    if removed_leaf is not None:
        lp_rev += np.log(0.5) + _leaf_log_prob(removed_leaf, cfg, nf)
    return cand, float(lp_rev - lp_fwd)


def _propose_leaf_swap(tree, rng, cfg):
    positions = _positions(tree.root)
    leaves = [i for i, (node, _) in enumerate(positions) if isinstance(node, (Var, Param))]
    if not leaves:
        raise SkipMove
    i = leaves[rng.integers(len(leaves))]
    node, _ = positions[i]
    nf = tree.n_features
    if isinstance(node, Var):
        new_leaf = Param("newswap")
        log_ratio = -np.log(nf)  # reverse must pick this variable index back
    else:
        new_leaf = Var(int(rng.integers(nf)))
        log_ratio = np.log(nf)
    root = _replace_at(tree.root, i, new_leaf)
    return _finish_tree(root, nf), float(log_ratio)


_MOVE_FUNCS = {
    "relabel": _propose_relabel,
    "graft": _propose_graft,
    "root_flip": _propose_root_flip,
    "leaf_swap": _propose_leaf_swap,
}


def propose(tree, move, rng, cfg):
    """Return (candidate, log proposal ratio) or raise SkipMove."""
    return _MOVE_FUNCS[move](tree, rng, cfg)


# ---------------------------------------------------------------------------
# scorers (energy functions)

class PosteriorScorer:
    """Energy = description length; fits cached by structure signature."""

    def __init__(self, data, hp, score_cfg=None):
        self.data = data
        self.hp = hp
        self.score_cfg = score_cfg if score_cfg is not None else ScoreConfig()
        self._cache = {}

    def score(self, tree):
        sig = strict_signature(tree)
        hit = self._cache.get(sig)
        if hit is not None:
            return hit
        try:
            fit = likelihood.fit_params(tree, self.data, self.score_cfg.fit)
            breakdown = score_fit(tree, fit, self.data, self.hp, self.score_cfg)
            result = (breakdown.description_length, fit, breakdown)
        except FitError:
            result = (float("inf"), None, None)
        self._cache[sig] = result
        return result


class PriorOnlyScorer:
    """Energy = -log p(m); used to sample the operator prior itself."""

    def __init__(self, hp):
        self.hp = hp

    def score(self, tree):
        return (-log_prior(tree, self.hp), None, None)


# ---------------------------------------------------------------------------
# chain machinery

@dataclass
class ChainState:
    tree: ExprTree
    energy: float
    fit: Optional[FitResult]
    score: object


def mh_step(state, scorer, cfg, beta, rng, counters=None):
    """One Metropolis step on the tempered target exp(-beta * E)."""
    moves = [m for m in MOVE_TYPES if cfg.move_probs.get(m, 0.0) > 0]
    probs = np.array([cfg.move_probs[m] for m in moves])
    move = moves[rng.choice(len(moves), p=probs / probs.sum())]
    if counters is not None and move not in counters:
        counters[move] = [0, 0, 0]
    try:
        cand, log_ratio = propose(state.tree, move, rng, cfg)
    except SkipMove:
        if counters is not None:
            counters[move][2] += 1
        return state
    if counters is not None:
        counters[move][1] += 1
    if cand.depth > cfg.max_depth:
        return state  # invalid proposal counts as a rejection
    energy, fit, breakdown = scorer.score(cand)
    if np.isfinite(energy) or np.isfinite(state.energy):
        log_alpha = -beta * (energy - state.energy) + log_ratio
    else:
        log_alpha = log_ratio
    if not np.isfinite(energy):
        log_alpha = float("-inf")
    if log_alpha >= 0 or np.log(rng.random()) < log_alpha:
        if counters is not None:
            counters[move][0] += 1
        return ChainState(cand, energy, fit, breakdown)
    return state


def swap_step(states, betas, t, rng, counters=None):
    """Attempt a replica swap between adjacent temperatures t and t+1."""
    if t + 1 >= len(states):
        return states
    key = (t, t + 1)
    if counters is not None:
        counters.setdefault(key, [0, 0])
        counters[key][1] += 1
    e_t, e_u = states[t].energy, states[t + 1].energy
    if np.isfinite(e_t) and np.isfinite(e_u):
        log_alpha = (betas[t] - betas[t + 1]) * (e_t - e_u)
    else:
        log_alpha = 0.0 if e_t == e_u else float("-inf")
    if log_alpha >= 0 or np.log(rng.random()) < log_alpha:
        states[t], states[t + 1] = states[t + 1], states[t]
        if counters is not None:
            counters[key][0] += 1
    return states


def _initial_tree(cfg, n_features):
    if cfg.init_expression is not None:
        return canonicalize_params(parse_expression(cfg.init_expression, n_features))
    return ExprTree(Param("th0"), n_features)


def run_sampler(scorer, cfg, n_features):
    """Run the tempered chains; record the beta=1 chain after burn-in."""
    cfg.validate()
    betas = tuple(cfg.betas)
    n_chains = len(betas)
    chain_rngs = [
        np.random.default_rng(np.random.SeedSequence([cfg.seed & 0xFFFFFFFF, 101, c]))
        for c in range(n_chains)
    ]
    swap_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed & 0xFFFFFFFF, 202]))

    init = _initial_tree(cfg, n_features)
    e0, f0, s0 = scorer.score(init)
    states = [ChainState(init, e0, f0, s0) for _ in range(n_chains)]

    trace = SamplerTrace()
    total = cfg.burn_in + cfg.steps
    for step in range(total):
        for c in range(n_chains):
            counters = trace.move_counters if c == 0 else None
            states[c] = mh_step(states[c], scorer, cfg, betas[c], chain_rngs[c], counters)
        if n_chains > 1 and cfg.swap_period > 0 and (step + 1) % cfg.swap_period == 0:
            t = int(swap_rng.integers(n_chains - 1))
            states = swap_step(states, betas, t, swap_rng, trace.swap_counters)
        if step >= cfg.burn_in and (step - cfg.burn_in) % cfg.thinning == 0:
            st = states[0]
            trace.records.append(
                TraceRecord(step, 0, betas[0], st.tree, st.fit, st.score, st.energy)
            )
    return trace


def sample_posterior(data, hp, cfg=SamplerConfig(), score_cfg=None):
    """Sample expression trees from exp(-L(m, D)) via parallel tempering."""
    scorer = PosteriorScorer(data, hp, score_cfg)
    return run_sampler(scorer, cfg, data.n_features)


def map_record(trace, tol=1e-6):
    """Minimum description-length record; ties broken by earliest visit.

    Records within tol of the minimum count as tied: fitted description
    lengths are only reproducible to ~1e-9 across runs, and functionally
    equivalent reparameterizations are exact analytic ties separated only by
    that noise, so a bitwise argmin would pick among them unstably.
    """
    if not trace.records:
        raise ValueError("empty trace")
    emin = min(r.energy for r in trace.records)
    return min(
        (r for r in trace.records if r.energy <= emin + tol),
        key=lambda r: r.step,
    )


def map_model(trace, tol=1e-6):
    """MAP tree and score; see map_record for the tie-breaking rule."""
    best = map_record(trace, tol)
    return best.tree, best.score


# ---------------------------------------------------------------------------
# trace persistence (one TSV record per line)

TRACE_HEADER = "step\tchain\tbeta\texpression\tparams\tsigma\tsse\tdl\tvariant"


def write_trace(trace, path):
    with open(path, "w") as fh:
        fh.write(TRACE_HEADER + "\n")
        for r in trace.records:
            params = json.dumps(r.fit.theta_hat if r.fit else {}, sort_keys=True)
            sigma = repr(r.fit.sigma_hat) if r.fit else ""
            sse_s = repr(r.fit.sse) if r.fit else ""
            variant = r.score.variant_used if r.score is not None else ""
            fh.write(
                f"{r.step}\t{r.chain}\t{r.beta!r}\t{print_expression(r.tree)}\t"
                f"{params}\t{sigma}\t{sse_s}\t{float(r.energy)!r}\t{variant}\n"
            )


def read_trace(path, n_features):
    trace = SamplerTrace()
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        if header != TRACE_HEADER:
            raise ValueError(f"not a trace file: {path}")
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            step, chain, beta, expression, params, sigma, sse_s, dl, _variant = parts
            tree = parse_expression(expression, n_features)
            theta = json.loads(params)
            fit = None
            if sigma:
                fit = FitResult(
                    theta_hat=theta,
                    sigma_hat=float(sigma),
                    sse=float(sse_s),
                    log_likelihood=float("nan"),
                    converged=True,
                    param_names=tuple(theta.keys()),
                )
            trace.records.append(
                TraceRecord(int(step), int(chain), float(beta), tree, fit, None, float(dl))
            )
    if not trace.records:
        raise ValueError(f"trace file {path} contains no records")
    return trace
