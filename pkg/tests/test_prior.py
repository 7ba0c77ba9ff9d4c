import numpy as np
import pytest

from bsr.expr import parse_expression
from bsr.prior import (
    PriorFitConfig,
    TargetMoments,
    fit_prior_hyperparams,
    measure_moments,
    read_hyperparams,
    read_target_moments,
    sample_prior_models,
    write_fit_report,
    write_hyperparams,
)
from bsr.sampler import SamplerConfig
from bsr.score import PriorHyperparams


class TestTargetMoments:
    def test_negative_mean_rejected(self):
        with pytest.raises(ValueError):
            TargetMoments((("+", -0.1, 1.0),)).validate()

    def test_infeasible_variance_rejected(self):
        with pytest.raises(ValueError):
            TargetMoments((("+", 2.0, 1.0),)).validate()

    def test_valid(self):
        TargetMoments((("+", 0.6, 1.1), ("exp", 0.2, 0.3))).validate()


class TestMeasureMoments:
    def test_hand_computed(self):
        trees = [
            parse_expression("th0", 1),
            parse_expression("th0 + x0", 1),
            parse_expression("th0 + th1 + x0", 1),
        ]
        m = measure_moments(trees, ["+"])
        mean, sq = m["+"]
        assert mean == pytest.approx((0 + 1 + 2) / 3)
        assert sq == pytest.approx((0 + 1 + 4) / 3)

    def test_absent_symbol_is_zero(self):
        m = measure_moments([parse_expression("th0", 1)], ["sin"])
        assert m["sin"] == (0.0, 0.0)


class TestPriorSampling:
    def test_deterministic(self):
        hp = PriorHyperparams(alpha={"+": 1.0}, beta={"+": 0.1})
        cfg = SamplerConfig(betas=(1.0,), burn_in=50, thinning=2, swap_period=0, basis=("+",))
        a = sample_prior_models(hp, cfg, 200, seed=7)
        b = sample_prior_models(hp, cfg, 200, seed=7)
        assert [repr(t) for t in a] == [repr(t) for t in b]

    def test_count_respected(self):
        hp = PriorHyperparams(alpha={"+": 1.0}, beta={"+": 0.0})
        cfg = SamplerConfig(betas=(1.0,), burn_in=10, thinning=1, swap_period=0, basis=("+",))
        assert len(sample_prior_models(hp, cfg, 123, seed=0)) == 123

    def test_harsh_prior_suppresses_operators(self):
        cfg = SamplerConfig(betas=(1.0,), burn_in=100, thinning=2, swap_period=0, basis=("+",))
        harsh = PriorHyperparams(alpha={"+": 8.0}, beta={"+": 0.0})
        mild = PriorHyperparams(alpha={"+": 0.2}, beta={"+": 0.0})
        t_harsh = sample_prior_models(harsh, cfg, 800, seed=1)
        t_mild = sample_prior_models(mild, cfg, 800, seed=1)
        m_harsh = measure_moments(t_harsh, ["+"])["+"][0]
        m_mild = measure_moments(t_mild, ["+"])["+"][0]
        assert m_harsh < 0.1
        assert m_mild > m_harsh + 0.3


class TestFitHyperparams:
    def test_small_round_trip(self):
        """Measure the moments induced by a known table, then refit: the
        achieved moments must come back within tolerance."""
        grammar = SamplerConfig(
            betas=(1.0,), burn_in=200, thinning=2, swap_period=0, basis=("+", "exp")
        )
        truth = PriorHyperparams(
            alpha={"+": 2.0, "exp": 3.0}, beta={"+": 0.3, "exp": 0.5}
        )
        trees = sample_prior_models(truth, grammar, 4000, seed=11)
        moments = measure_moments(trees, ["+", "exp"])
        targets = TargetMoments(
            tuple((sym, m[0], m[1]) for sym, m in moments.items())
        )
        cfg = PriorFitConfig(
            samples=4000,
            samples_per_iter=1500,
            max_iterations=60,
            tol=0.1,
            seed=2,
            grammar=grammar,
        )
        report = fit_prior_hyperparams(targets, cfg)
        assert report.converged
        assert report.max_rel_error < 0.1
        for sym, mean, sq in targets.records:
            got_mean, got_sq = report.achieved[sym]
            assert got_mean == pytest.approx(mean, abs=max(0.1 * mean, 0.06))
            assert got_sq == pytest.approx(sq, abs=max(0.15 * sq, 0.1))

    def test_nonconvergence_reported_not_raised(self):
        targets = TargetMoments((("+", 1.2, 2.5),))
        cfg = PriorFitConfig(
            samples=400, samples_per_iter=400, max_iterations=1, tol=1e-6, seed=0
        )
        report = fit_prior_hyperparams(targets, cfg)
        assert not report.converged


class TestFileFormats:
    def test_hyperparams_round_trip(self, tmp_path):
        hp = PriorHyperparams(alpha={"+": 1.5, "sin": 4.25}, beta={"+": 0.125, "sin": 0.5})
        path = tmp_path / "hp.tsv"
        write_hyperparams(hp, path)
        again = read_hyperparams(path)
        assert again.alpha == hp.alpha
        assert again.beta == hp.beta

    def test_targets_round_trip(self, tmp_path):
        path = tmp_path / "targets.tsv"
        path.write_text("symbol mean mean_square\n+ 0.6 1.1\nexp 0.2 0.3\n")
        tm = read_target_moments(path)
        assert tm.records == (("+", 0.6, 1.1), ("exp", 0.2, 0.3))

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("a b c\n")
        with pytest.raises(ValueError):
            read_target_moments(path)
        with pytest.raises(ValueError):
            read_hyperparams(path)

    def test_report_written(self, tmp_path):
        targets = TargetMoments((("+", 0.6, 1.1),))
        cfg = PriorFitConfig(
            samples=400, samples_per_iter=400, max_iterations=2, tol=0.5, seed=0
        )
        report = fit_prior_hyperparams(targets, cfg)
        out = tmp_path / "report.txt"
        write_fit_report(report, out)
        text = out.read_text()
        assert text.startswith("converged\t")
        assert "symbol\talpha\tbeta" in text
