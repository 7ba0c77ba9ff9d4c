import numpy as np
import pytest

from bsr.experiments import (
    GeneratorSpec,
    cell_seed,
    generate,
    matches_ground_truth,
    read_spec,
    reducible_error,
    run_grid,
    write_summary,
)
from bsr.expr import parse_expression
from bsr.score import default_prior_hyperparams


def linear_spec(**kw):
    base = dict(
        model="th0 + th1 * x0",
        theta={"th0": -2.3, "th1": 4.1},
        sigma=0.5,
        n=100,
        seed=3,
    )
    base.update(kw)
    return GeneratorSpec(**base)


class TestGenerate:
    def test_shape_and_range(self):
        data = generate(linear_spec(n=250))
        assert data.features.shape == (250, 1)
        assert data.features.min() >= -4.0 and data.features.max() <= 4.0

    def test_deterministic(self):
        a = generate(linear_spec())
        b = generate(linear_spec())
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.target, b.target)

    def test_zero_noise_on_curve(self):
        spec = linear_spec(sigma=0.0)
        data = generate(spec)
        want = -2.3 + 4.1 * data.features[:, 0]
        assert np.allclose(data.target, want, atol=1e-12)

    def test_noise_scales_exactly_with_sigma(self):
        # same seed, sigma doubled: identical x draws, residuals double
        d1 = generate(linear_spec(sigma=1.0))
        d2 = generate(linear_spec(sigma=2.0))
        truth = -2.3 + 4.1 * d1.features[:, 0]
        assert np.allclose(d2.target - truth, 2.0 * (d1.target - truth), atol=1e-12)

    def test_nonfinite_truth_rejected(self):
        spec = linear_spec(model="log(x0)", theta={})
        with pytest.raises(ValueError):
            generate(spec)

    def test_validation(self):
        with pytest.raises(ValueError):
            linear_spec(sigma=-1.0).validate()
        with pytest.raises(ValueError):
            linear_spec(n=0).validate()
        with pytest.raises(ValueError):
            linear_spec(xlow=1.0, xhigh=1.0).validate()


class TestCellSeed:
    def test_stable(self):
        assert cell_seed(0, 100, 0.5) == cell_seed(0, 100, 0.5)

    def test_distinct_across_cells(self):
        seeds = {
            cell_seed(0, n, s) for n in (10, 100, 1000) for s in (0.05, 0.5, 5.0, 50.0)
        }
        assert len(seeds) == 12

    def test_distinct_across_masters(self):
        assert cell_seed(0, 100, 0.5) != cell_seed(1, 100, 0.5)


class TestReducibleError:
    def test_zero_for_exact_model(self):
        spec = linear_spec()
        tree = parse_expression(spec.model, 1)
        assert reducible_error(tree, spec.theta, spec) == pytest.approx(0.0, abs=1e-12)

    def test_constant_underfit_rms(self):
        # best constant for a line over a symmetric range: RMS = |slope| * std(x)
        spec = linear_spec()
        tree = parse_expression("th0", 1)
        got = reducible_error(tree, {"th0": -2.3}, spec, grid_points=20001)
        want = 4.1 * np.sqrt((8.0 ** 2) / 12.0)
        assert got == pytest.approx(want, rel=1e-3)

    def test_nonfinite_map_gives_inf(self):
        spec = linear_spec()
        tree = parse_expression("log(x0)", 1)
        assert reducible_error(tree, {}, spec) == float("inf")


class TestMatchesGroundTruth:
    def test_identity_matches(self):
        spec = linear_spec()
        data = generate(spec)
        tree = parse_expression("th0 + th1 * x0", 1)
        assert matches_ground_truth(tree, {"th0": -2.3, "th1": 4.1}, spec, data)

    def test_commuted_form_matches(self):
        spec = linear_spec()
        data = generate(spec)
        tree = parse_expression("th1 * x0 + th0", 1)
        assert matches_ground_truth(tree, {"th0": -2.3, "th1": 4.1}, spec, data)

    def test_reparameterized_equivalent_matches(self):
        # th0 * (th1 + x0) = th0*th1 + th0*x0 describes the same curves
        spec = linear_spec()
        data = generate(spec)
        from bsr.likelihood import fit_params

        tree = parse_expression("th0 * (th1 + x0)", 1)
        fit = fit_params(tree, data)
        assert matches_ground_truth(tree, fit.theta_hat, spec, data)

    def test_wrong_parameter_count_rejected(self):
        spec = linear_spec()
        data = generate(spec)
        tree = parse_expression("th0", 1)
        assert not matches_ground_truth(tree, {"th0": -2.3}, spec, data)

    def test_same_k_wrong_curve_rejected(self):
        from bsr.likelihood import fit_params

        spec = linear_spec()
        data = generate(spec)
        tree = parse_expression("th0 + th1 * sin(x0)", 1)
        fit = fit_params(tree, data)
        assert not matches_ground_truth(tree, fit.theta_hat, spec, data)


class TestRunGrid:
    def test_cell_isolation_and_summary(self, tmp_path):
        # a truth model that is non-finite on the x range fails in generate;
        # every cell must be recorded as an error, none may abort the grid
        spec = linear_spec(model="log(x0)", theta={})
        hp = default_prior_hyperparams(("+", "*"))
        results = run_grid(
            spec, hp, ns=(10, 20), sigmas=(0.1, 1.0), out_dir=str(tmp_path)
        )
        assert len(results) == 4
        assert all(r.map_expression.startswith("ERROR:") for r in results)
        assert all(not r.matches_truth for r in results)
        summary = (tmp_path / "summary.tsv").read_text().splitlines()
        assert summary[0] == "n\tsigma\tmap_expression\tmatch\treducible_error\tdl"
        assert len(summary) == 5


class TestSummaryFile:
    def test_round_trippable_floats(self, tmp_path):
        from bsr.experiments import GridCellResult

        r = GridCellResult(100, 0.5, "th0", 1.0, True, {"th0": 31.0}, 0.125)
        path = tmp_path / "summary.tsv"
        write_summary([r], path)
        line = path.read_text().splitlines()[1].split("\t")
        assert float(line[4]) == 0.125


class TestSpecIO:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "spec.yaml"
        path.write_text(
            "model: th0 + th1 * x0\n"
            "theta: {th0: -2.3, th1: 4.1}\n"
            "sigma: 0.5\n"
            "n: 100\n"
            "seed: 3\n"
        )
        spec = read_spec(path)
        assert spec == linear_spec()

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "spec.yaml"
        path.write_text("model: th0\nbogus: 1\n")
        with pytest.raises(ValueError):
            read_spec(path)

    def test_missing_model_rejected(self, tmp_path):
        path = tmp_path / "spec.yaml"
        path.write_text("sigma: 0.5\n")
        with pytest.raises(ValueError):
            read_spec(path)

    def test_defaults_applied(self, tmp_path):
        path = tmp_path / "spec.yaml"
        path.write_text("model: th0\ntheta: {th0: 31}\n")
        spec = read_spec(path)
        assert spec.xlow == -4.0 and spec.xhigh == 4.0
        assert spec.n_features == 1
