"""Acceptance suite: one test per acceptance criterion, each printing a
PASS/FAIL line.  Run with ``pytest tests/test_acceptance.py -v -s``.

Tolerances are pinned here and never loosened at runtime; Monte Carlo
checks state their error budgets explicitly.
"""

import itertools
import math
import time
from dataclasses import replace

import numpy as np

from fahmc import (ConstantSchedule, FederationConfig, GradientNoise,
                   LogisticNode, QuadraticNode, default_leapfrog_steps,
                   hmc_chain, leapfrog, marginal_error,
                   quadratic_exact_flow, quadratic_pair_sync_moments,
                   run_debias_fa_hmc, run_fa_hmc, run_fa_ld,
                   sample_correlated_momentum, write_trace_csv)
from fahmc.bench import cmd_dim_vs_comm, cmd_run, cmd_sweep_stepsize
from fahmc.config import ExperimentConfig
from fahmc.rng import StreamLayout


def report(name: str, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{name}: {detail}"


class TestAcceptance:
    def test_integrator_order(self):
        budget = time.perf_counter()
        model = QuadraticNode(mean=np.zeros(3), precision=1.0)
        rng = np.random.default_rng(2024)
        theta0 = rng.standard_normal(3)
        p0 = rng.standard_normal(3)
        etas = np.array([0.1, 0.05, 0.025, 0.0125])
        errors = []
        for eta in etas:
            K = int(round(1.0 / eta))
            out = leapfrog(model, theta0, p0, float(eta), K)
            ref, _ = quadratic_exact_flow(theta0, p0, 1.0, np.zeros(3), K * eta)
            errors.append(np.linalg.norm(out.position - ref))
        slope = float(np.polyfit(np.log(etas), np.log(errors), 1)[0])
        elapsed = time.perf_counter() - budget
        report("integrator-order", 1.8 <= slope <= 2.2 and elapsed < 1.0,
               f"log-log slope {slope:.3f} over eta {etas.tolist()}, {elapsed:.2f}s")

    def test_reversibility(self):
        budget = time.perf_counter()
        rng = np.random.default_rng(7)
        X = rng.standard_normal((30, 4))
        y = np.where(rng.random(30) < 0.5, -1.0, 1.0)
        cases = {
            "quadratic": QuadraticNode(mean=np.full(4, 0.5), precision=1.3),
            "logistic": LogisticNode(features=X, labels=y, prior_precision=0.5),
        }
        worst = 0.0
        for model in cases.values():
            theta0 = rng.standard_normal(4) + 1.0
            p0 = rng.standard_normal(4)
            fwd = leapfrog(model, theta0, p0, eta=0.01, K=100)
            back = leapfrog(model, fwd.position, -fwd.momentum, eta=0.01, K=100)
            worst = max(worst,
                        np.linalg.norm(back.position - theta0) / np.linalg.norm(theta0),
                        np.linalg.norm(back.momentum + p0) / np.linalg.norm(p0))
        elapsed = time.perf_counter() - budget
        report("reversibility", worst <= 1e-10 and elapsed < 1.0,
               f"worst relative return error {worst:.2e}, {elapsed:.2f}s")

    def test_momentum_identities(self):
        budget = time.perf_counter()
        n, d, draws, chunk = 10, 100, 100_000, 20_000
        weights = np.full(n, 0.1)
        failures = []
        for rho in (0.0, 0.5, 1.0):
            node_sq = np.zeros(n)
            avg_sq = 0.0
            layout = StreamLayout(int(1000 * rho) + 5, n)
            for _ in range(draws // chunk):
                ps = sample_correlated_momentum(
                    rho, weights, d, layout.shared_momentum,
                    layout.node_momentum, batch_shape=(chunk,))
                for c in range(n):
                    node_sq[c] += float(np.sum(ps[c] ** 2))
                p_bar = sum(w * p for w, p in zip(weights, ps))
                avg_sq += float(np.sum(p_bar ** 2))
            node_sq /= draws * d
            avg_sq /= draws * d
            expected = rho + (1 - rho) * n
            if np.max(np.abs(node_sq - expected)) > 0.02 * expected:
                failures.append(f"rho={rho}: node moment off")
            if abs(avg_sq - 1.0) > 0.02:
                failures.append(f"rho={rho}: aggregate moment {avg_sq:.4f}")
        elapsed = time.perf_counter() - budget
        report("momentum-identities", not failures and elapsed < 10.0,
               f"{draws} draws, n={n}, d={d}; "
               f"{'; '.join(failures) if failures else 'all within 2%'}, {elapsed:.1f}s")

    def test_fa_ld_reduction(self, tmp_path):
        models = [QuadraticNode(np.full(5, 2.0), 1.0),
                  QuadraticNode(np.full(5, 1.0), 0.5)]
        cfg = FederationConfig(n_nodes=2, weights=[0.5, 0.5], T=10, K=1,
                               rho=0.5, schedule=ConstantSchedule(0.1),
                               noise=GradientNoise.additive_gaussian(1.0),
                               master_seed=404)
        a = run_fa_hmc(cfg, models, np.zeros(5), iterations=10_000)
        b = run_fa_ld(cfg, models, np.zeros(5), iterations=10_000)
        path_a, path_b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_trace_csv(a, path_a)
        write_trace_csv(b, path_b)
        identical = path_a.read_bytes() == path_b.read_bytes()
        report("fa-ld-reduction", identical,
               "byte-identical traces over 10^4 iterations")

    def test_lower_bound_oracle(self):
        budget = time.perf_counter()
        seeds, T, K, eta = 500, 5, 20, 0.005  # K eta = 0.1
        models = [QuadraticNode(np.ones(1) * 2.0, 1.0),
                  QuadraticNode(np.ones(1) * 1.0, 0.25)]
        cfg = FederationConfig(n_nodes=2, weights=[0.5, 0.5], T=T, K=K,
                               rho=1.0, schedule=ConstantSchedule(eta),
                               master_seed=1234)
        trace = run_fa_hmc(cfg, models, np.zeros((seeds, 1)),
                           iterations=200 * T, record_every=T)
        failures = []
        for r in (10, 50, 200):
            vals = trace.theta_at_round(r, T)[:, 0]
            mean_o, var_o = quadratic_pair_sync_moments(
                0.0, 2.0, 1.0, 1.0, 0.25, horizon=K * eta, T=T, t=r)
            mean_tol = 3 * math.sqrt(var_o / seeds) + 1e-2
            var_tol = 3 * var_o * math.sqrt(2.0 / (seeds - 1)) + 1e-2
            if abs(vals.mean() - mean_o) > mean_tol:
                failures.append(f"round {r} mean {vals.mean():.4f} vs {mean_o:.4f}")
            if abs(vals.var(ddof=1) - var_o) > var_tol:
                failures.append(f"round {r} var {vals.var(ddof=1):.4f} vs {var_o:.4f}")
        elapsed = time.perf_counter() - budget
        report("lower-bound-oracle", not failures and elapsed < 60.0,
               f"{'; '.join(failures) if failures else 'rounds 10/50/200 within 3 SE + 1e-2'}"
               f", {elapsed:.1f}s")

    def test_stationary_law(self):
        budget = time.perf_counter()
        lam, eta, K, iterations = 1.0, 0.05, 10, 1_000_000
        model = QuadraticNode(mean=np.zeros(1), precision=lam)
        trace = hmc_chain(model, np.zeros(1), ConstantSchedule(eta), K=K,
                          iterations=iterations, master_seed=31337)
        samples = trace.samples(burn_fraction=0.1)[:, 0]
        # T = 1 case of the two-group recursion with equal rates
        _, target_var = quadratic_pair_sync_moments(
            0.0, 0.0, 0.0, lam, lam, horizon=K * eta, T=1, t=10**9)
        observed = samples.var(ddof=1)
        elapsed = time.perf_counter() - budget
        ok = abs(observed - target_var) < 0.1 * target_var and elapsed < 60.0
        report("stationary-law", ok,
               f"variance {observed:.4f} vs {target_var:.4f} over {iterations} "
               f"iterations, {elapsed:.1f}s")

    def test_dimension_communication_scaling(self, tmp_path):
        budget = time.perf_counter()
        cfg = ExperimentConfig(
            model_kind="quadratic_fleet", dim=2, means=(20.0, 1.0),
            precisions=(1.0, 0.5), algorithm="fa-hmc", local_period=10,
            leapfrog_steps=5, rho=1.0, master_seed=555,
            schedule_kind="constant", eta=0.02, stop_rule="w2_threshold",
            threshold=0.1, max_iterations=1_000_000, replicates=50,
            directory=str(tmp_path))
        result = cmd_dim_vs_comm([2, 10, 50, 100], 0.1, cfg)
        converged = all(p.converged for p in result.points)
        min_reps = min(p.replicates for p in result.points)
        elapsed = time.perf_counter() - budget
        detail = (f"rounds {[p.rounds for p in result.points]}, "
                  f"R^2 {result.r_squared}, replicates >= {min_reps}, {elapsed:.0f}s")
        ok = (converged and min_reps >= 50 and result.r_squared is not None
              and result.r_squared >= 0.9 and elapsed < 600.0)
        report("dimension-communication-scaling", ok, detail)

    def test_marginal_error_exhaustive(self):
        budget = time.perf_counter()
        perms_by_n = {n: np.array(list(itertools.permutations(range(n))))
                      for n in range(1, 7)}
        checked = 0
        mismatches = 0
        for n in range(1, 7):
            sets = [np.array(c, dtype=np.float64) for c in
                    itertools.combinations_with_replacement(range(4), n)]
            perms = perms_by_n[n]
            stacked = np.stack(sets)                    # (m, n)
            permuted = stacked[:, perms]                # (m, n_perm, n)
            for a in sets:
                # brute-force optimal assignment over all permutations of b
                brute = np.abs(a[None, None, :] - permuted).sum(axis=2).min(axis=1) / n
                for j, b in enumerate(sets):
                    got = marginal_error(a.reshape(-1, 1), b.reshape(-1, 1))
                    checked += 1
                    if got != brute[j]:
                        mismatches += 1
        elapsed = time.perf_counter() - budget
        report("marginal-error-exhaustive",
               mismatches == 0 and elapsed < 10.0,
               f"{checked} instances (n <= 6, values 0..3), "
               f"{mismatches} mismatches, {elapsed:.1f}s")

    def test_debias_cancellation(self):
        node = QuadraticNode(mean=np.full(3, 1.5), precision=0.8)
        models = [node, QuadraticNode(mean=np.full(3, 1.5), precision=0.8)]
        cfg = FederationConfig(n_nodes=2, weights=[0.5, 0.5], T=5, K=6,
                               rho=0.5, schedule=ConstantSchedule(0.05),
                               master_seed=808)
        vanilla = run_fa_hmc(cfg, models, np.zeros(3), iterations=300)
        debiased = run_debias_fa_hmc(cfg, models, np.zeros(3), iterations=300)
        after_refresh = slice(cfg.T, None)
        same = np.array_equal(vanilla.global_params[after_refresh],
                              debiased.global_params[after_refresh])
        report("debias-cancellation", same,
               "homogeneous fleet traces bit-equal after first anchor refresh"
               if same else "traces diverged")

    def test_contraction_direction(self):
        budget = time.perf_counter()
        seeds, d, K, eta = 200, 4, 20, 0.01   # K eta = 0.2
        L, mu = 1.0, 0.25
        models = [QuadraticNode(np.full(d, 2.0), L),
                  QuadraticNode(np.full(d, 1.0), mu)]
        iterations = 500
        master_seed = 2718
        cfg = FederationConfig(n_nodes=2, weights=[0.5, 0.5], T=1, K=K,
                               rho=1.0, schedule=ConstantSchedule(eta),
                               master_seed=master_seed)
        global_lam = 0.5 * (L + mu)
        global_mean = np.full(d, (L * 2.0 + mu * 1.0) / (L + mu))
        theta0 = np.broadcast_to(global_mean + 10.0, (seeds, d)).copy()
        trace = run_fa_hmc(cfg, models, theta0, iterations=iterations)

        # coupled reference chain: exact flow of the global quadratic driven
        # by the same shared momenta (rho = 1), started from the target law
        rng = np.random.default_rng(99)
        theta_pi = global_mean + rng.standard_normal((seeds, d)) / math.sqrt(global_lam)
        replay = StreamLayout(master_seed, 2)
        gaps = []
        for t in range(iterations):
            momentum = replay.shared_momentum.standard_normal((seeds, d))
            theta_pi, _ = quadratic_exact_flow(theta_pi, momentum, global_lam,
                                               global_mean, K * eta)
            diff = trace.global_params[t] - theta_pi
            gaps.append(float(np.mean(np.sum(diff * diff, axis=-1))))
        gaps = np.array(gaps)
        floor = float(np.median(gaps[-50:]))
        window = gaps > max(100.0 * floor, gaps[0] * 1e-3)
        cut = int(np.argmin(window)) if not window.all() else len(gaps)
        ts = np.arange(cut)
        slope, _ = np.polyfit(ts, np.log(gaps[:cut]), 1)
        rate = float(np.exp(slope))
        fit = np.polyfit(ts, np.log(gaps[:cut]), 1, full=True)
        ss_res = float(fit[1][0]) if len(fit[1]) else 0.0
        log_g = np.log(gaps[:cut])
        r_sq = 1.0 - ss_res / float(np.sum((log_g - log_g.mean()) ** 2))
        bound_rate = 1.0 - mu * (K * eta) ** 2 / 4.0
        in_band = 0.5 * bound_rate <= rate <= min(1.0, 2.0 * bound_rate)
        decayed = gaps[0] / max(gaps[cut - 1], floor) >= 100.0
        elapsed = time.perf_counter() - budget
        report("contraction-direction",
               in_band and decayed and r_sq >= 0.9 and rate < 1.0,
               f"fitted rate {rate:.5f} vs 1 - mu(K eta)^2/4 = {bound_rate:.5f}, "
               f"geometric fit R^2 {r_sq:.3f}, decay x{gaps[0] / gaps[cut - 1]:.0f}, "
               f"{elapsed:.1f}s")

    def test_fa_hmc_beats_fa_ld(self, tmp_path):
        budget = time.perf_counter()
        d = 100
        base = ExperimentConfig(
            model_kind="quadratic_fleet", dim=d, means=(2.0, 0.0),
            precisions=(1.0, 0.5), algorithm="fa-hmc", local_period=10,
            leapfrog_steps=5, rho=1.0, master_seed=99,
            noise="gaussian:100.0", schedule_kind="constant", eta=0.01,
            stop_rule="fixed_iterations", iterations=2000,
            directory=str(tmp_path), replicates=5, burn_in_fraction=0.5)

        # reference: long exact-gradient single chain through the harness
        ref_cfg = replace(base, algorithm="single-hmc", noise="exact",
                          eta=0.02, leapfrog_steps=default_leapfrog_steps(0.02),
                          iterations=4000, replicates=1, save_snapshots=True,
                          master_seed=7)
        cmd_run(ref_cfg)
        reference = str(tmp_path / "samples_r000.bin")
        base = replace(base, reference=reference)

        hmc_rows = [r for r in cmd_sweep_stepsize([0.005, 0.01], base)
                    if r.algorithm == "fa-hmc"]
        ld_rows = [r for r in cmd_sweep_stepsize([0.02, 0.05, 0.1, 0.2], base)
                   if r.algorithm == "fa-ld"]
        best_hmc = min(r.me for r in hmc_rows)
        best_ld = min(r.me for r in ld_rows)
        elapsed = time.perf_counter() - budget
        report("fa-hmc-beats-fa-ld", best_hmc <= best_ld,
               f"best ME fa-hmc {best_hmc:.4f} (K from heuristic) vs fa-ld "
               f"{best_ld:.4f}, 5 seeds, {elapsed:.0f}s")
