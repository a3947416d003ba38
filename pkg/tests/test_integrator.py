"""Leapfrog correctness against the exact quadratic flow, and the
single-chain unadjusted HMC driver."""

import numpy as np
import pytest

from fahmc import (ConstantSchedule, GradientNoise, LogisticNode,
                   QuadraticNode, hmc_chain, leapfrog, quadratic_exact_flow)
from fahmc.errors import ContractError, DivergenceError


def standard_quadratic(d=1):
    return QuadraticNode(mean=np.zeros(d), precision=1.0)


def small_logistic(rng):
    X = rng.standard_normal((12, 3))
    y = np.where(rng.random(12) < 0.5, -1.0, 1.0)
    return LogisticNode(features=X, labels=y, prior_precision=0.5)


def discrete_stationary_variance(lam, eta):
    """Exact stationary per-coordinate variance of K-step leapfrog HMC on an
    isotropic quadratic.

    One leapfrog step is the symplectic linear map with rotation
    cos(phi) = 1 - eta^2 lam / 2 and scale s_c = eta / sin(phi); K steps give
    theta' = cos(K phi) theta + s_c sin(K phi) p, whose stationary variance
    with unit-variance momentum refresh is s_c^2 = 1 / (lam (1 - eta^2 lam / 4)).
    """
    return 1.0 / (lam * (1.0 - eta * eta * lam / 4.0))


class TestLeapfrog:
    def test_single_step_formula(self):
        model = standard_quadratic(2)
        theta0 = np.array([0.3, -1.2])
        p0 = np.array([1.0, 0.5])
        eta = 0.2
        res = leapfrog(model, theta0, p0, eta, K=1)
        g0 = model.grad(theta0)
        theta1 = theta0 + eta * p0 - 0.5 * eta**2 * g0
        p1 = p0 - 0.5 * eta * (g0 + model.grad(theta1))
        np.testing.assert_array_equal(res.position, theta1)
        np.testing.assert_array_equal(res.momentum, p1)

    def test_half_period_accuracy(self):
        # K eta = pi rotates (1, 0) to (-1, 0).  The error shrinks at least
        # quadratically when eta is halved; at this turning point the phase
        # error enters the position quadratically, so the observed decay is
        # even faster (fourth order).
        model = standard_quadratic()
        theta0, p0 = np.array([1.0]), np.array([0.0])
        errors = []
        for steps in (1000, 2000):
            eta = np.pi / steps
            res = leapfrog(model, theta0, p0, eta, K=steps)
            errors.append(abs(res.position[0] + 1.0))
        assert errors[0] < 1e-2
        assert errors[0] / errors[1] >= 4.0 * 0.8

    def test_order_two_convergence(self):
        model = standard_quadratic(3)
        rng = np.random.default_rng(9)
        theta0 = rng.standard_normal(3)
        p0 = rng.standard_normal(3)
        etas = np.array([0.1, 0.05, 0.025, 0.0125])
        errs = []
        for eta in etas:
            K = int(round(1.0 / eta))
            res = leapfrog(model, theta0, p0, eta, K)
            ref, _ = quadratic_exact_flow(theta0, p0, 1.0, np.zeros(3), K * eta)
            errs.append(np.linalg.norm(res.position - ref))
        slope = np.polyfit(np.log(etas), np.log(errs), 1)[0]
        assert 1.8 <= slope <= 2.2

    @pytest.mark.parametrize("make_model", [
        lambda rng: standard_quadratic(4),
        small_logistic,
    ])
    def test_reversibility(self, make_model):
        rng = np.random.default_rng(23)
        model = make_model(rng)
        theta0 = rng.standard_normal(model.dim) + 1.0
        p0 = rng.standard_normal(model.dim)
        fwd = leapfrog(model, theta0, p0, eta=0.01, K=100)
        back = leapfrog(model, fwd.position, -fwd.momentum, eta=0.01, K=100)
        assert np.linalg.norm(back.position - theta0) <= 1e-10 * np.linalg.norm(theta0)
        assert np.linalg.norm(back.momentum + p0) <= 1e-10 * np.linalg.norm(p0)

    def test_gradient_eval_accounting(self):
        model = standard_quadratic(2)
        theta0, p0 = np.ones(2), np.zeros(2)
        assert leapfrog(model, theta0, p0, 0.1, K=7).gradient_evals == 8
        noise = GradientNoise.additive_gaussian(0.5)
        res = leapfrog(model, theta0, p0, 0.1, K=7, noise=noise,
                       rng=np.random.default_rng(0))
        assert res.gradient_evals == 14

    def test_noisy_mean_matches_exact(self):
        # averaging over fresh noise recovers the exact-gradient trajectory
        model = standard_quadratic(2)
        theta0 = np.array([1.0, -0.5])
        p0 = np.array([0.2, 0.4])
        eta, K, var = 0.05, 10, 4.0
        exact = leapfrog(model, theta0, p0, eta, K).position
        reps = 20_000
        tiled_t = np.broadcast_to(theta0, (reps, 2))
        tiled_p = np.broadcast_to(p0, (reps, 2))
        noisy = leapfrog(model, tiled_t, tiled_p, eta, K,
                         GradientNoise.additive_gaussian(var),
                         np.random.default_rng(77))
        se = noisy.position.std(axis=0, ddof=1) / np.sqrt(reps)
        assert np.all(np.abs(noisy.position.mean(axis=0) - exact) < 3 * se)

    def test_divergence_carries_step_index(self):
        model = QuadraticNode(mean=np.zeros(1), precision=1e8)
        with pytest.raises(DivergenceError) as info:
            leapfrog(model, np.ones(1), np.zeros(1), eta=1.0, K=50)
        assert info.value.step is not None
        assert 0 <= info.value.step < 50

    def test_preconditions(self):
        model = standard_quadratic(2)
        with pytest.raises(ContractError):
            leapfrog(model, np.ones(2), np.zeros(2), eta=0.1, K=0)
        with pytest.raises(ContractError):
            leapfrog(model, np.ones(2), np.zeros(2), eta=-0.1, K=1)
        with pytest.raises(ContractError):
            leapfrog(model, np.ones(3), np.zeros(2), eta=0.1, K=1)


class TestQuadraticExactFlow:
    def test_identity_at_zero(self):
        theta0, p0 = np.array([1.0, 2.0]), np.array([-0.3, 0.7])
        theta, p = quadratic_exact_flow(theta0, p0, 2.0, np.zeros(2), 0.0)
        np.testing.assert_array_equal(theta, theta0)
        np.testing.assert_array_equal(p, p0)

    def test_quarter_and_half_period(self):
        theta0, p0 = np.array([1.0]), np.array([0.0])
        theta, p = quadratic_exact_flow(theta0, p0, 1.0, np.zeros(1), np.pi / 2)
        np.testing.assert_allclose(theta, [0.0], atol=1e-15)
        np.testing.assert_allclose(p, [-1.0], rtol=1e-15)
        theta, p = quadratic_exact_flow(theta0, p0, 1.0, np.zeros(1), np.pi)
        np.testing.assert_allclose(theta, [-1.0], rtol=1e-15)
        np.testing.assert_allclose(p, [0.0], atol=1e-15)

    def test_nonzero_center(self):
        # flow orbits the minimizer, not the origin
        mean = np.array([3.0])
        theta, p = quadratic_exact_flow(np.array([4.0]), np.array([0.0]),
                                        1.0, mean, np.pi)
        np.testing.assert_allclose(theta, [2.0], rtol=1e-14)

    def test_solves_hamilton_equations(self):
        # dtheta/dt = p and dp/dt = -lam (theta - m), checked by differences
        lam, mean = 0.7, np.array([1.0, -2.0])
        theta0 = np.array([2.0, 0.5])
        p0 = np.array([-0.1, 1.3])
        t, dt = 0.9, 1e-6
        th_m, p_m = quadratic_exact_flow(theta0, p0, lam, mean, t - dt)
        th_p, p_p = quadratic_exact_flow(theta0, p0, lam, mean, t + dt)
        th, p = quadratic_exact_flow(theta0, p0, lam, mean, t)
        np.testing.assert_allclose((th_p - th_m) / (2 * dt), p, rtol=1e-6)
        np.testing.assert_allclose((p_p - p_m) / (2 * dt), -lam * (th - mean),
                                   rtol=1e-6, atol=1e-9)


class TestHmcChain:
    def test_iteration_preconditions(self):
        model = standard_quadratic(2)
        sched = ConstantSchedule(0.1)
        with pytest.raises(ContractError):
            hmc_chain(model, np.zeros(2), sched, K=5, iterations=0)
        trace = hmc_chain(model, np.zeros(2), sched, K=5, iterations=1, master_seed=1)
        assert trace.n_records == 1

    def test_deterministic(self):
        model = standard_quadratic(3)
        sched = ConstantSchedule(0.1)
        a = hmc_chain(model, np.zeros(3), sched, K=5, iterations=200, master_seed=42)
        b = hmc_chain(model, np.zeros(3), sched, K=5, iterations=200, master_seed=42)
        np.testing.assert_array_equal(a.global_params, b.global_params)

    def test_stationary_variance_matches_discrete_recursion(self):
        lam, eta, K = 1.0, 0.1, 10
        model = QuadraticNode(mean=np.zeros(2), precision=lam)
        its = 100_000
        trace = hmc_chain(model, np.zeros(2), ConstantSchedule(eta), K=K,
                          iterations=its, master_seed=5)
        samples = trace.samples(burn_fraction=0.1)
        target_var = discrete_stationary_variance(lam, eta)
        observed = samples.var(axis=0, ddof=1)
        assert np.all(np.abs(observed - target_var) < 0.1 * target_var)
        # symmetric target: mean is 0 within 3 autocorrelation-adjusted SEs
        gamma = np.cos(K * np.arccos(1 - eta * eta * lam / 2))
        n_eff = len(samples) * (1 - gamma) / (1 + gamma)
        se = np.sqrt(target_var / n_eff)
        assert np.all(np.abs(samples.mean(axis=0)) < 3 * se)

    def test_divergence_carries_iteration(self):
        model = QuadraticNode(mean=np.zeros(1), precision=1e8)
        with pytest.raises(DivergenceError) as info:
            hmc_chain(model, np.ones(1), ConstantSchedule(1.0), K=50,
                      iterations=3, master_seed=0)
        assert info.value.iteration == 0

    def test_record_every(self):
        model = standard_quadratic(1)
        trace = hmc_chain(model, np.zeros(1), ConstantSchedule(0.1), K=2,
                          iterations=10, master_seed=3, record_every=4)
        np.testing.assert_array_equal(trace.recorded_t, [3, 7, 9])
