"""Gradient oracles, noise models and assumption probing."""

import numpy as np
import pytest

from fahmc import (EXACT, GradientNoise, LogisticNode, QuadraticNode,
                   WeightedSumModel, check_assumptions, generate_logistic_data,
                   grad, load_logistic_csv, save_logistic_csv, stochastic_grad)
from fahmc.errors import ContractError, UnsupportedNoiseError
from fahmc.models import _pair_estimates


def finite_difference_grad(model, theta):
    """Central differences with per-coordinate step cbrt(eps) * scale."""
    theta = np.asarray(theta, dtype=np.float64)
    base_step = np.cbrt(np.finfo(np.float64).eps)
    out = np.empty_like(theta)
    for i in range(theta.size):
        h = base_step * max(1.0, abs(theta[i]))
        up = theta.copy()
        dn = theta.copy()
        up[i] += h
        dn[i] -= h
        out[i] = (model.potential(up) - model.potential(dn)) / (2 * h)
    return out


def random_logistic_node(rng, n=40, d=3, prior=0.1):
    X = rng.standard_normal((n, d))
    y = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    return LogisticNode(features=X, labels=y, prior_precision=prior, scale=0.5)


class TestGrad:
    def test_quadratic_identity(self):
        model = QuadraticNode(mean=np.zeros(2), precision=1.0)
        np.testing.assert_array_equal(grad(model, np.array([2.0, 0.0])), [2.0, 0.0])

    def test_quadratic_zero_at_minimizer(self):
        model = QuadraticNode(mean=np.full(4, 20.0), precision=1.0)
        np.testing.assert_array_equal(grad(model, np.full(4, 20.0)), np.zeros(4))

    def test_logistic_single_datum(self):
        # -y x sigmoid(-y x'theta) at theta = 0 gives -0.5
        model = LogisticNode(features=np.array([[1.0]]), labels=np.array([1.0]))
        g = grad(model, np.array([0.0]))
        np.testing.assert_allclose(g, [-0.5], rtol=1e-14)
        fd = finite_difference_grad(model, np.array([0.0]))
        np.testing.assert_allclose(g, fd, rtol=1e-7)

    def test_dimension_mismatch(self):
        model = QuadraticNode(mean=np.zeros(3), precision=1.0)
        with pytest.raises(ContractError):
            grad(model, np.zeros(2))

    @pytest.mark.parametrize("make", [
        lambda rng: QuadraticNode(mean=rng.standard_normal(5), precision=0.7),
        lambda rng: random_logistic_node(rng),
        lambda rng: WeightedSumModel(
            models=(QuadraticNode(rng.standard_normal(3), 1.2),
                    QuadraticNode(rng.standard_normal(3), 0.4)),
            weights=np.array([0.3, 0.7])),
    ])
    def test_matches_finite_differences(self, make):
        rng = np.random.default_rng(11)
        model = make(rng)
        for _ in range(10):
            theta = 2.0 * rng.standard_normal(model.dim)
            exact = grad(model, theta)
            fd = finite_difference_grad(model, theta)
            np.testing.assert_allclose(exact, fd, rtol=1e-5, atol=1e-8)

    def test_batched_evaluation(self):
        rng = np.random.default_rng(3)
        model = random_logistic_node(rng)
        batch = rng.standard_normal((7, model.dim))
        stacked = np.stack([grad(model, row) for row in batch])
        np.testing.assert_allclose(grad(model, batch), stacked, rtol=1e-14)


class TestStochasticGrad:
    def test_exact_kind_is_grad(self):
        rng = np.random.default_rng(0)
        model = QuadraticNode(mean=np.zeros(3), precision=2.0)
        theta = rng.standard_normal(3)
        out = stochastic_grad(model, theta, EXACT, rng)
        np.testing.assert_array_equal(out, grad(model, theta))

    def test_additive_gaussian_moments(self):
        rng = np.random.default_rng(42)
        model = QuadraticNode(mean=np.zeros(3), precision=1.0)
        theta = np.array([0.4, -1.0, 2.0])
        var = 2.5
        draws = 100_000
        noise = GradientNoise.additive_gaussian(var)
        tiled = np.broadcast_to(theta, (draws, 3))
        sample = stochastic_grad(model, tiled, noise, rng)
        se = np.sqrt(var / draws)
        np.testing.assert_allclose(sample.mean(axis=0), grad(model, theta), atol=3 * se)
        observed_var = sample.var(axis=0, ddof=1)
        assert np.all(np.abs(observed_var - var) < 0.05 * var)

    def test_full_batch_minibatch_is_exact(self):
        rng = np.random.default_rng(5)
        model = random_logistic_node(rng, n=25)
        theta = rng.standard_normal(model.dim)
        noise = GradientNoise.minibatch(model.n_data)
        out = stochastic_grad(model, theta, noise, rng)
        np.testing.assert_allclose(out, grad(model, theta), rtol=1e-12)

    def test_minibatch_unbiased(self):
        rng = np.random.default_rng(17)
        model = random_logistic_node(rng, n=30)
        theta = rng.standard_normal(model.dim)
        noise = GradientNoise.minibatch(5)
        draws = np.stack([stochastic_grad(model, theta, noise, rng) for _ in range(4000)])
        se = draws.std(axis=0, ddof=1) / np.sqrt(len(draws))
        assert np.all(np.abs(draws.mean(axis=0) - grad(model, theta)) < 3 * se)

    def test_minibatch_on_quadratic_rejected(self):
        model = QuadraticNode(mean=np.zeros(2), precision=1.0)
        with pytest.raises(UnsupportedNoiseError):
            stochastic_grad(model, np.zeros(2), GradientNoise.minibatch(4),
                            np.random.default_rng(0))


class TestCheckAssumptions:
    def test_quadratic_exact_constants(self):
        model = QuadraticNode(mean=np.zeros(4), precision=1.0)
        report = check_assumptions(model, probe_count=50, rng=np.random.default_rng(1))
        np.testing.assert_allclose(report.mu_est, 1.0, rtol=1e-9)
        np.testing.assert_allclose(report.lipschitz_est, 1.0, rtol=1e-9)
        assert report.violations == []

    def test_logistic_mu_lower_bound(self):
        rng = np.random.default_rng(2)
        model = random_logistic_node(rng, prior=0.1)
        report = check_assumptions(model, probe_count=200, rng=rng)
        assert report.mu_est >= 0.1 - 1e-12
        assert report.lipschitz_est <= model.lipschitz + 1e-9
        assert report.violations == []

    def test_degenerate_pair_excluded(self):
        model = QuadraticNode(mean=np.zeros(2), precision=1.0)
        x = np.array([1.0, 2.0])
        assert _pair_estimates(model, x, x.copy()) is None
        report = check_assumptions(model, probe_count=5, rng=np.random.default_rng(0))
        assert np.isfinite(report.mu_est) and np.isfinite(report.lipschitz_est)

    def test_probe_count_precondition(self):
        model = QuadraticNode(mean=np.zeros(2), precision=1.0)
        with pytest.raises(ContractError):
            check_assumptions(model, probe_count=1, rng=np.random.default_rng(0))

    def test_understated_lipschitz_flagged(self):
        # a model that lies about its smoothness constant must be reported
        class Understated(QuadraticNode):
            @property
            def lipschitz(self):
                return 0.5 * self.precision

        model = Understated(mean=np.zeros(3), precision=2.0)
        report = check_assumptions(model, probe_count=20, rng=np.random.default_rng(4))
        assert any("smoothness" in v for v in report.violations)


class TestLogisticData:
    def test_csv_round_trip(self, tmp_path):
        X, y, theta = generate_logistic_data(n=20, d=3, seed=7, feature_sigma=1.5)
        assert set(np.unique(y)) <= {-1.0, 1.0}
        path = tmp_path / "data.csv"
        save_logistic_csv(path, X, y)
        header = path.read_text().splitlines()[0]
        assert header == "x_1,x_2,x_3,y"
        X2, y2 = load_logistic_csv(path)
        np.testing.assert_array_equal(X, X2)
        np.testing.assert_array_equal(y, y2)

    def test_generation_is_seeded(self):
        a = generate_logistic_data(n=10, d=2, seed=123)
        b = generate_logistic_data(n=10, d=2, seed=123)
        for left, right in zip(a, b):
            np.testing.assert_array_equal(left, right)

    def test_declared_constants(self):
        rng = np.random.default_rng(8)
        model = random_logistic_node(rng, n=15, d=4, prior=0.3)
        assert model.mu == 0.3
        gram_op = np.linalg.eigvalsh(model.features.T @ model.features)[-1]
        np.testing.assert_allclose(model.lipschitz, 0.5 * 0.25 * gram_op + 0.3)
