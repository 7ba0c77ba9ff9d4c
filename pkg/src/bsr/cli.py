"""Command-line front end: generate, search, score, predict, experiment, prior-fit."""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import ensemble, experiments, prior, sampler
from .config import ConfigError, RunConfig
from .expr import ExpressionError, parse_expression, print_expression
from .likelihood import Dataset, FitError, fit_params
from .prior import read_hyperparams
from .score import default_prior_hyperparams, score_fit

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4


class CliValidationError(ValueError):
    pass


def read_csv_dataset(path, target=None):
    """CSV with a header row; all cells numeric; target is the last column
    unless named explicitly."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CliValidationError(f"{path}: empty CSV") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append([float(cell) for cell in row])
            except ValueError:
                raise CliValidationError(
                    f"{path}:{lineno}: non-numeric cell; no imputation is done"
                ) from None
    if not rows:
        raise CliValidationError(f"{path}: no data rows")
    arr = np.asarray(rows, dtype=float)
    if arr.shape[1] != len(header):
        raise CliValidationError(f"{path}: ragged rows")
    if target is None:
        t_idx = len(header) - 1
    else:
        if target not in header:
            raise CliValidationError(f"{path}: no column named {target!r}")
        t_idx = header.index(target)
    x_idx = [j for j in range(len(header)) if j != t_idx]
    if not x_idx:
        raise CliValidationError(f"{path}: need at least one feature column")
    return Dataset(arr[:, x_idx], arr[:, t_idx], [header[j] for j in x_idx])


def write_csv_dataset(data, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{j}" for j in range(data.n_features)] + ["y"])
        for row, yv in zip(data.features, data.target):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(yv))])


def _load_prior(args, basis):
    if getattr(args, "prior", None):
        return read_hyperparams(args.prior)
    return default_prior_hyperparams(basis)


def _write_map_report(path, tree, fit, breakdown):
    with open(path, "w") as fh:
        fh.write(f"expression\t{print_expression(tree)}\n")
        for name, value in fit.theta_hat.items():
            fh.write(f"param.{name}\t{value!r}\n")
        fh.write(f"sigma_hat\t{fit.sigma_hat!r}\n")
        fh.write(f"sse\t{fit.sse!r}\n")
        _write_breakdown(fh, breakdown)


def _write_breakdown(fh, breakdown):
    fh.write(f"neg_log_likelihood_mle\t{breakdown.neg_log_likelihood_mle!r}\n")
    fh.write(f"k\t{breakdown.k}\n")
    fh.write(f"bic1\t{breakdown.bic1!r}\n")
    fh.write(f"fisher_log_det\t{breakdown.fisher_log_det!r}\n")
    fh.write(f"bic2\t{breakdown.bic2!r}\n")
    fh.write(f"neg_log_prior\t{breakdown.neg_log_prior!r}\n")
    fh.write(f"description_length\t{breakdown.description_length!r}\n")
    fh.write(f"variant_used\t{breakdown.variant_used}\n")


def cmd_generate(args):
    if args.out is None:
        raise CliValidationError("generate requires --out")
    spec = experiments.read_spec(args.spec)
    data = experiments.generate(spec)
    write_csv_dataset(data, args.out)
    if not args.quiet:
        print(f"wrote {data.n} rows to {args.out}")
    return EXIT_OK


def cmd_search(args):
    cfg = RunConfig.load(args.config, seed=args.seed)
    data = read_csv_dataset(args.data, target=args.target)
    hp = _load_prior(args, tuple(cfg.tree["sampler"]["basis"]))
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    trace = sampler.sample_posterior(data, hp, cfg.sampler_config(), cfg.score_config())
    tree, breakdown = sampler.map_model(trace)
    best = min(trace.records, key=lambda r: (r.energy, r.step))
    sampler.write_trace(trace, os.path.join(out_dir, "trace.tsv"))
    _write_map_report(os.path.join(out_dir, "map_report.txt"), tree, best.fit, breakdown)
    ensemble.write_rashomon(
        ensemble.rashomon_set(trace, args.rashomon_delta),
        os.path.join(out_dir, "rashomon.tsv"),
    )
    cfg.dump(os.path.join(out_dir, "config_resolved.yaml"))
    if not args.quiet:
        print(print_expression(tree))
    return EXIT_OK


def cmd_score(args):
    cfg = RunConfig.load(args.config, seed=args.seed)
    data = read_csv_dataset(args.data, target=args.target)
    tree = parse_expression(args.expression, data.n_features)
    hp = _load_prior(args, tuple(tree.operator_counts.keys()) or ("+",))
    # scoring API surfaces degenerate exact fits instead of clamping
    score_cfg = cfg.score_config(clamp_zero_sse=False)
    fit = fit_params(tree, data, score_cfg.fit)
    breakdown = score_fit(tree, fit, data, hp, score_cfg)
    _write_breakdown(sys.stdout, breakdown)
    return EXIT_OK


def cmd_predict(args):
    query = read_csv_dataset(args.query, target=args.target)
    trace = sampler.read_trace(args.trace, query.n_features)
    cfg = ensemble.EnsembleConfig(seed=args.seed or 0)
    posteriors = [ensemble.predict_ensemble(trace, row, cfg) for row in query.features]
    ensemble.write_predictions(posteriors, args.out or "predictions.tsv")
    if not args.quiet:
        print(f"wrote {len(posteriors)} predictions")
    return EXIT_OK


def cmd_experiment(args):
    cfg = RunConfig.load(args.config, seed=args.seed)
    spec = experiments.read_spec(args.spec)
    hp = _load_prior(args, tuple(cfg.tree["sampler"]["basis"]))
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    results = experiments.run_grid(
        spec,
        hp,
        cfg.sampler_config(),
        cfg.score_config(),
        ns=tuple(cfg.tree["experiment"]["ns"]),
        sigmas=tuple(cfg.tree["experiment"]["sigmas"]),
        master_seed=cfg.seed,
        out_dir=out_dir,
    )
    cfg.dump(os.path.join(out_dir, "config_resolved.yaml"))
    if not args.quiet:
        matched = sum(r.matches_truth for r in results)
        print(f"{matched}/{len(results)} cells matched the ground truth")
    return EXIT_OK


def cmd_prior_fit(args):
    cfg = RunConfig.load(args.config, seed=args.seed)
    targets = prior.read_target_moments(args.targets)
    report = prior.fit_prior_hyperparams(targets, cfg.prior_fit_config())
    out = args.out or "prior_fit_report.txt"
    prior.write_fit_report(report, out)
    prior.write_hyperparams(report.hyperparams, os.path.splitext(out)[0] + "_hyperparams.tsv")
    if not args.quiet:
        print(
            f"converged={report.converged} iterations={report.iterations} "
            f"max_rel_error={report.max_rel_error:.4f}"
        )
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="bsr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="YAML config file")
        p.add_argument("--seed", type=int, default=None, help="master seed")
        p.add_argument("--out", default=None, help="output path or directory")
        p.add_argument("--target", default=None, help="target column name")
        p.add_argument("--quiet", action="store_true")
        p.add_argument("--prior", default=None, help="prior hyperparams TSV")

    p = sub.add_parser("generate", help="generate a synthetic dataset from a spec")
    p.add_argument("spec")
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("search", help="MAP model discovery on a CSV dataset")
    p.add_argument("data")
    p.add_argument("--rashomon-delta", type=float, default=2.0)
    common(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("score", help="score a single expression on a dataset")
    p.add_argument("data")
    p.add_argument("expression")
    common(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("predict", help="posterior-ensemble predictions from a trace")
    p.add_argument("trace")
    p.add_argument("query")
    common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("experiment", help="run an N x sigma recovery grid")
    p.add_argument("spec")
    common(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("prior-fit", help="fit prior hyperparams to target moments")
    p.add_argument("targets")
    common(p)
    p.set_defaults(func=cmd_prior_fit)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CliValidationError, ExpressionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FitError, ArithmeticError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
