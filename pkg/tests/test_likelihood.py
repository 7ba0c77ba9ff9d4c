import numpy as np
import pytest
from scipy import stats

from bsr.expr import parse_expression
from bsr.likelihood import (
    Dataset,
    DegenerateFitError,
    FitConfig,
    OverparameterizedModelError,
    UnfittableModelError,
    fit_params,
    log_likelihood_mle,
    sse,
)


def make_linear(n=200, sigma=0.5, seed=3, theta=(-2.3, 4.1)):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-4, 4, size=(n, 1))
    y = theta[0] + theta[1] * x[:, 0] + sigma * rng.standard_normal(n)
    return Dataset(x, y)


class TestDataset:
    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros((3, 1)), np.zeros(4))

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            Dataset(np.array([[1.0], [np.nan]]), np.array([1.0, 2.0]))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros((0, 1)), np.zeros(0))

    def test_immutability(self):
        d = Dataset(np.ones((2, 1)), np.ones(2))
        with pytest.raises(ValueError):
            d.target[0] = 5.0


class TestSse:
    def test_exact_value(self):
        data = Dataset(np.zeros((3, 1)), np.array([1.0, 2.0, 3.0]))
        tree = parse_expression("th0", 1)
        assert sse(tree, {"th0": 2.0}, data) == pytest.approx(2.0)

    def test_nonfinite_model_gives_inf(self):
        data = Dataset(np.array([[-1.0]]), np.array([0.0]))
        tree = parse_expression("log(x0)", 1)
        assert sse(tree, {}, data) == float("inf")


class TestConstantFit:
    def test_mean_recovered(self):
        data = Dataset(np.zeros((3, 1)), np.array([1.0, 2.0, 3.0]))
        tree = parse_expression("th0", 1)
        fit = fit_params(tree, data)
        assert fit.theta_hat["th0"] == pytest.approx(2.0, abs=5e-10)
        assert fit.sse == pytest.approx(2.0, abs=1e-9)
        assert fit.sigma_hat == pytest.approx(np.sqrt(2.0 / 3.0), abs=1e-9)

    def test_loglik_matches_gaussian_density(self):
        """At the MLE the profiled log-likelihood equals the sum of normal
        log-densities evaluated at sigma_hat."""
        data = make_linear(n=50)
        tree = parse_expression("th0 + th1 * x0", 1)
        fit = fit_params(tree, data)
        pred = data.target - (
            fit.theta_hat["th0"] + fit.theta_hat["th1"] * data.features[:, 0]
        )
        direct = stats.norm.logpdf(pred, scale=fit.sigma_hat).sum()
        assert fit.log_likelihood == pytest.approx(direct, abs=1e-8)
        assert log_likelihood_mle(tree, fit, data) == pytest.approx(direct, abs=1e-8)


class TestLinearFit:
    def test_matches_closed_form_least_squares(self):
        data = make_linear(n=300, sigma=0.5)
        tree = parse_expression("th0 + th1 * x0", 1)
        fit = fit_params(tree, data)
        A = np.column_stack([np.ones(data.n), data.features[:, 0]])
        theta_ls, *_ = np.linalg.lstsq(A, data.target, rcond=None)
        assert fit.theta_hat["th0"] == pytest.approx(theta_ls[0], abs=1e-7)
        assert fit.theta_hat["th1"] == pytest.approx(theta_ls[1], abs=1e-7)

    def test_noiseless_exact(self):
        data = make_linear(n=40, sigma=0.0)
        tree = parse_expression("th0 + th1 * x0", 1)
        fit = fit_params(tree, data)
        assert fit.theta_hat["th0"] == pytest.approx(-2.3, abs=1e-6)
        assert fit.theta_hat["th1"] == pytest.approx(4.1, abs=1e-6)
        # clamped: no degenerate error, finite log-likelihood
        assert np.isfinite(fit.log_likelihood)

    def test_noiseless_degenerate_without_clamp(self):
        data = make_linear(n=40, sigma=0.0)
        tree = parse_expression("th0 + th1 * x0", 1)
        with pytest.raises(DegenerateFitError):
            fit_params(tree, data, FitConfig(clamp_zero_sse=False))


class TestNonlinearFit:
    def test_exponential_recovery(self):
        rng = np.random.default_rng(5)
        x = rng.uniform(0, 2, size=(150, 1))
        y = 2.0 * np.exp(1.3 * x[:, 0]) + 0.01 * rng.standard_normal(150)
        data = Dataset(x, y)
        tree = parse_expression("th0 * exp(th1 * x0)", 1)
        fit = fit_params(tree, data)
        assert fit.theta_hat["th0"] == pytest.approx(2.0, abs=0.05)
        assert fit.theta_hat["th1"] == pytest.approx(1.3, abs=0.05)

    def test_restart_monotonicity(self):
        data = make_linear(n=80, sigma=1.0, seed=9)
        tree = parse_expression("th0 * sin(th1 * x0) + th2", 1)
        sses = []
        for r in range(1, 8):
            fit = fit_params(tree, data, FitConfig(restarts=r))
            sses.append(fit.sse)
        assert all(b <= a + 1e-12 for a, b in zip(sses, sses[1:]))


class TestFitErrors:
    def test_overparameterized(self):
        data = Dataset(np.zeros((2, 1)), np.array([1.0, 2.0]))
        tree = parse_expression("th0 + th1 * x0 + th2 * x0 * x0", 1)
        with pytest.raises(OverparameterizedModelError):
            fit_params(tree, data)

    def test_unfittable_parameter_free(self):
        data = Dataset(np.array([[-1.0], [-2.0]]), np.array([0.0, 0.0]))
        tree = parse_expression("log(x0)", 1)
        with pytest.raises(UnfittableModelError):
            fit_params(tree, data)


class TestDeterminism:
    def test_same_seed_same_fit(self):
        data = make_linear(n=60, sigma=0.7, seed=2)
        tree = parse_expression("th0 * exp(th1 * x0)", 1)
        a = fit_params(tree, data, FitConfig(seed=4))
        b = fit_params(tree, data, FitConfig(seed=4))
        assert a.theta_hat == b.theta_hat
        assert a.sse == b.sse

    def test_parameter_free_model(self):
        data = Dataset(np.array([[1.0], [2.0]]), np.array([1.1, 1.9]))
        tree = parse_expression("x0", 1)
        fit = fit_params(tree, data)
        assert fit.theta_hat == {}
        assert fit.sse == pytest.approx(0.01 + 0.01, abs=1e-12)
