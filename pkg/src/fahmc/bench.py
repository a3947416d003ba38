"""Experiment harness: fleet construction from a config, the run command,
sweep drivers, and their CSV outputs.

Every command is a pure function of (config, seed); outputs are written
atomically so re-running overwrites rather than appends.  Replicates and
sweep points own disjoint derived seeds and output files, which lets them
run concurrently under a worker pool without changing any result.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .errors import ConfigError, ContractError, NonConvergenceError
from .federation import (FederationConfig, run_debias_fa_hmc, run_fa_hmc,
                         run_fa_ld)
from .integrator import hmc_chain
from .metrics import (DiagGaussian, gaussian_product_posterior, marginal_error,
                      subsample_rows, w2_from_samples)
from .models import (EXACT, GradientNoise, LogisticNode, QuadraticNode,
                     WeightedSumModel, generate_logistic_data)
from .rng import derive_seed
from .schedules import ConstantSchedule, EpochDoublingSchedule, default_leapfrog_steps
from .trace import write_snapshots, write_trace_csv

__all__ = [
    "build_fleet", "build_schedule", "build_noise", "federation_config",
    "quadratic_target", "run_trace", "cmd_run", "cmd_dim_vs_comm",
    "cmd_sweep_stepsize", "cmd_sweep_local", "cmd_compare", "RunSummary",
    "DimPoint", "DimCommResult",
]

REFERENCE_HINT = (
    "generate one with: fahmc run --config <cfg> using [federation] "
    "algorithm = single-hmc and [output] save_snapshots = true, then point "
    "[output] reference at the written .bin file")


def build_fleet(cfg: ExperimentConfig):
    """Node models and normalized weights for the configured fleet."""
    n = cfg.n_nodes
    if isinstance(cfg.weights, tuple):
        weights = np.asarray(cfg.weights, dtype=np.float64)
    else:
        weights = np.full(n, 1.0 / n)
    if cfg.model_kind == "quadratic_fleet":
        models = [QuadraticNode(mean=np.full(cfg.dim, m), precision=lam)
                  for m, lam in zip(cfg.means, cfg.precisions)]
        return models, weights
    # logistic fleet: one global synthetic dataset split evenly across nodes;
    # node losses carry the n/n_c scale so the weighted sum is the full
    # negative log-posterior
    total = cfg.samples_per_node * n
    X, y, _ = generate_logistic_data(total, cfg.dim, cfg.data_seed,
                                     feature_sigma=cfg.feature_sigma)
    models = []
    for c in range(n):
        lo = c * cfg.samples_per_node
        hi = lo + cfg.samples_per_node
        models.append(LogisticNode(features=X[lo:hi], labels=y[lo:hi],
                                   prior_precision=cfg.prior_precision,
                                   scale=float(n)))
    return models, weights


def quadratic_target(cfg: ExperimentConfig) -> DiagGaussian:
    """Closed-form global target of a quadratic fleet."""
    if cfg.model_kind != "quadratic_fleet":
        raise ContractError("closed-form target requires a quadratic fleet")
    models, weights = build_fleet(cfg)
    return gaussian_product_posterior(
        [(m.mean, m.precision, float(w)) for m, w in zip(models, weights)])


def build_schedule(cfg: ExperimentConfig):
    if cfg.schedule_kind == "constant":
        return ConstantSchedule(cfg.eta)
    return EpochDoublingSchedule(eta_init=cfg.eta_init, t1=cfg.t1, decay=cfg.decay)


def build_noise(cfg: ExperimentConfig) -> GradientNoise:
    parts = cfg.noise.split(":")
    if parts[0] == "exact":
        return EXACT
    if parts[0] == "gaussian":
        return GradientNoise.additive_gaussian(float(parts[1]))
    return GradientNoise.minibatch(int(parts[1]))


def federation_config(cfg: ExperimentConfig, seed: int | None = None) -> FederationConfig:
    models, weights = build_fleet(cfg)
    return FederationConfig(
        n_nodes=len(models), weights=weights, T=cfg.local_period,
        K=cfg.leapfrog_steps, rho=cfg.rho, schedule=build_schedule(cfg),
        noise=build_noise(cfg),
        master_seed=cfg.master_seed if seed is None else seed,
        debias_anchor=cfg.debias_anchor)


_DRIVERS = {"fa-hmc": run_fa_hmc, "fa-ld": run_fa_ld,
            "debias-fa-hmc": run_debias_fa_hmc}


def run_trace(cfg: ExperimentConfig, iterations: int, seed: int | None = None,
              theta0=None, record_every: int | None = None, stop_at_sync=None):
    """Run the configured algorithm for (up to) ``iterations`` iterations."""
    models, weights = build_fleet(cfg)
    record = cfg.record_every if record_every is None else record_every
    if theta0 is None:
        theta0 = np.zeros(cfg.dim)
    if cfg.algorithm == "single-hmc":
        if stop_at_sync is not None:
            raise ContractError("threshold stopping needs a federated algorithm")
        composed = WeightedSumModel(models=tuple(models), weights=weights)
        return hmc_chain(composed, theta0, build_schedule(cfg),
                         K=cfg.leapfrog_steps, noise=build_noise(cfg),
                         iterations=iterations,
                         master_seed=cfg.master_seed if seed is None else seed,
                         record_every=record)
    driver = _DRIVERS[cfg.algorithm]
    return driver(federation_config(cfg, seed), models, theta0, iterations,
                  record_every=record, stop_at_sync=stop_at_sync)


@dataclass
class RunSummary:
    algorithm: str
    replicates: int
    iterations: int
    gradient_evals: int
    wall_time_s: float
    final_theta_norm: list
    rounds_to_threshold: list | None
    outputs: list

    def to_json(self) -> str:
        payload = dict(self.__dict__)
        payload["outputs"] = [str(p) for p in self.outputs]
        return json.dumps(payload, indent=2, sort_keys=True)


def _replicate_seed(cfg: ExperimentConfig, r: int) -> int:
    return derive_seed(cfg.master_seed, 1, r)


def cmd_run(cfg: ExperimentConfig, workers: int = 1) -> RunSummary:
    """Execute the configured run and persist trace files.

    ``fixed_iterations`` runs each replicate to the set length.
    ``w2_threshold`` drives one replicate ensemble until the (debiased)
    squared W2 between the ensemble and the closed-form quadratic target
    falls below the threshold.  ``me_threshold`` runs each replicate until
    the marginal error of its collected sync samples against the reference
    set crosses the threshold.  Threshold runs raise
    :class:`NonConvergenceError` at the iteration cap.
    """
    out_dir = Path(cfg.directory)
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()

    if cfg.stop_rule == "fixed_iterations":
        summary = _run_fixed(cfg, out_dir, workers)
    elif cfg.stop_rule == "w2_threshold":
        summary = _run_w2_threshold(cfg, out_dir)
    else:
        summary = _run_me_threshold(cfg, out_dir, workers)

    summary.wall_time_s = time.perf_counter() - start
    return summary


def _run_fixed(cfg: ExperimentConfig, out_dir: Path, workers: int) -> RunSummary:
    def one(r: int):
        trace = run_trace(cfg, cfg.iterations, seed=_replicate_seed(cfg, r))
        paths = []
        csv_path = out_dir / f"trace_r{r:03d}.csv"
        write_trace_csv(trace, csv_path)
        paths.append(csv_path)
        if cfg.save_snapshots:
            bin_path = out_dir / f"samples_r{r:03d}.bin"
            write_snapshots(bin_path, trace.samples(cfg.burn_in_fraction))
            paths.append(bin_path)
        return trace, paths

    results = _map(one, range(cfg.replicates), workers)
    outputs = [p for _, paths in results for p in paths]
    return RunSummary(
        algorithm=cfg.algorithm, replicates=cfg.replicates,
        iterations=cfg.iterations,
        gradient_evals=sum(tr.gradient_evals for tr, _ in results),
        wall_time_s=0.0,
        final_theta_norm=[float(np.linalg.norm(tr.global_params[-1]))
                          for tr, _ in results],
        rounds_to_threshold=None,
        outputs=outputs)


def _check_w2_resolution(target: DiagGaussian, replicates: int,
                         threshold: float) -> None:
    """The squared-W2 estimate of an ensemble fluctuates by roughly
    ``3 sqrt(2 sum var_i^2) / n`` around small true values even after bias
    correction; refuse thresholds the ensemble cannot resolve."""
    if replicates < 2:
        raise ConfigError("w2_threshold estimates ensemble moments; set "
                          "replicates >= 2", "output.replicates")
    noise_scale = 3.0 * math.sqrt(2.0 * float(np.sum(target.var ** 2))) / replicates
    if noise_scale >= threshold:
        raise ConfigError(
            f"threshold {threshold} is below the ensemble estimation noise "
            f"(~{noise_scale:.3g} at {replicates} replicates); increase "
            "output.replicates", "stopping.threshold")


def _run_w2_threshold(cfg: ExperimentConfig, out_dir: Path) -> RunSummary:
    if cfg.model_kind != "quadratic_fleet":
        raise ConfigError("w2_threshold needs the closed-form quadratic target",
                          "stopping.rule")
    target = quadratic_target(cfg)
    _check_w2_resolution(target, cfg.replicates, cfg.threshold)
    history = []

    def stop(t, theta_bar):
        w2_sq = w2_from_samples(theta_bar, target) ** 2
        history.append((t, w2_sq))
        return w2_sq < cfg.threshold

    theta0 = np.zeros((cfg.replicates, cfg.dim))
    trace = run_trace(cfg, cfg.max_iterations, theta0=theta0,
                      record_every=cfg.local_period, stop_at_sync=stop)
    progress = out_dir / "w2_progress.csv"
    _write_csv(progress, "t,round,w2_sq",
               [f"{t},{t // cfg.local_period},{repr(val)}" for t, val in history])
    converged = bool(history) and history[-1][1] < cfg.threshold
    if not converged:
        raise NonConvergenceError(
            f"w2_sq still {history[-1][1]:.4g} at the {cfg.max_iterations} "
            f"iteration cap (threshold {cfg.threshold})")
    rounds = history[-1][0] // cfg.local_period
    return RunSummary(
        algorithm=cfg.algorithm, replicates=cfg.replicates,
        iterations=history[-1][0], gradient_evals=trace.gradient_evals,
        wall_time_s=0.0,
        final_theta_norm=[float(np.linalg.norm(trace.global_params[-1].mean(axis=0)))],
        rounds_to_threshold=[rounds], outputs=[progress])


def _load_reference(cfg: ExperimentConfig) -> np.ndarray:
    from .trace import read_snapshots
    if not cfg.reference:
        raise ConfigError(f"me_threshold and sweeps need a reference sample "
                          f"file; {REFERENCE_HINT}", "output.reference")
    path = Path(cfg.reference)
    if not path.exists():
        raise ConfigError(f"reference file {path} not found; {REFERENCE_HINT}",
                          "output.reference")
    return read_snapshots(path)


def _run_me_threshold(cfg: ExperimentConfig, out_dir: Path, workers: int) -> RunSummary:
    reference = _load_reference(cfg)

    def one(r: int):
        collected = []
        history = []

        def stop(t, theta_bar):
            if t > 0:
                collected.append(np.array(theta_bar))
                me = _me_against_reference(np.asarray(collected), reference)
                history.append((t, me))
                return me < cfg.threshold
            return False

        trace = run_trace(cfg, cfg.max_iterations, seed=_replicate_seed(cfg, r),
                          record_every=cfg.local_period, stop_at_sync=stop)
        progress = out_dir / f"me_progress_r{r:03d}.csv"
        _write_csv(progress, "t,round,me",
                   [f"{t},{t // cfg.local_period},{repr(me)}" for t, me in history])
        converged = bool(history) and history[-1][1] < cfg.threshold
        rounds = history[-1][0] // cfg.local_period if converged else None
        return trace, rounds, progress

    results = _map(one, range(cfg.replicates), workers)
    if any(rounds is None for _, rounds, _ in results):
        raise NonConvergenceError(
            f"marginal error did not reach {cfg.threshold} within "
            f"{cfg.max_iterations} iterations")
    return RunSummary(
        algorithm=cfg.algorithm, replicates=cfg.replicates,
        iterations=max(tr.recorded_t[-1] for tr, _, _ in results) + 1,
        gradient_evals=sum(tr.gradient_evals for tr, _, _ in results),
        wall_time_s=0.0,
        final_theta_norm=[float(np.linalg.norm(tr.global_params[-1]))
                          for tr, _, _ in results],
        rounds_to_threshold=[rounds for _, rounds, _ in results],
        outputs=[p for _, _, p in results])


def _me_against_reference(samples: np.ndarray, reference: np.ndarray) -> float:
    n = min(len(samples), len(reference))
    return marginal_error(subsample_rows(samples, n), subsample_rows(reference, n))


@dataclass
class DimPoint:
    dim: int
    eta: float
    replicates: int
    rounds: float | None

    @property
    def converged(self) -> bool:
        return self.rounds is not None


@dataclass
class DimCommResult:
    points: list
    alpha: float | None
    beta: float | None
    r_squared: float | None

    def write_csv(self, path) -> None:
        """Point rows plus one fit summary row."""
        rows = []
        for pt in self.points:
            rounds = "" if pt.rounds is None else repr(float(pt.rounds))
            rounds_sq = "" if pt.rounds is None else repr(float(pt.rounds) ** 2)
            rows.append(f"point,{pt.dim},{rounds},{rounds_sq},,,")
        if self.alpha is not None:
            rows.append(f"fit,,,,{self.alpha!r},{self.beta!r},{self.r_squared!r}")
        _write_csv(Path(path), "kind,d,rounds,rounds_sq,alpha,beta,r2", rows)


def rounds_to_w2(cfg: ExperimentConfig, target: DiagGaussian,
                 replicates: int, seed: int) -> float | None:
    """Rounds until the ensemble's debiased squared W2 to ``target`` drops
    below the configured threshold; None at the iteration cap."""
    _check_w2_resolution(target, replicates, cfg.threshold)
    state = {"rounds": None}

    def stop(t, theta_bar):
        w2_sq = w2_from_samples(theta_bar, target) ** 2
        if w2_sq < cfg.threshold:
            state["rounds"] = t // cfg.local_period
            return True
        return False

    theta0 = np.zeros((replicates, cfg.dim))
    run_trace(cfg, cfg.max_iterations, seed=seed, theta0=theta0,
              record_every=cfg.local_period, stop_at_sync=stop)
    return state["rounds"]


def cmd_dim_vs_comm(dims, eps_w2: float, base_cfg: ExperimentConfig,
                    workers: int = 1, eta0: float | None = None,
                    ensembles: int = 1) -> DimCommResult:
    """Communication rounds to reach squared W2 below ``eps_w2`` as a
    function of dimension, with a least-squares fit of rounds^2 against d.

    Per dimension d the stepsize is ``eta0 / d**0.25`` (``eta0`` defaults to
    the configured constant stepsize) and the fleet keeps its per-node mean
    and precision pattern at the new dimension.  Replicates scale with d to
    keep the moment-estimation noise well under the threshold.
    """
    if base_cfg.model_kind != "quadratic_fleet":
        raise ConfigError("dim-vs-comm needs a quadratic fleet", "model.kind")
    if base_cfg.schedule_kind != "constant":
        raise ConfigError("dim-vs-comm sets a constant per-d stepsize",
                          "schedule.kind")
    if eps_w2 <= 0:
        raise ContractError("eps_w2 must be positive")
    base_eta0 = base_cfg.eta if eta0 is None else eta0

    def one(d: int) -> DimPoint:
        eta = base_eta0 / d**0.25
        cfg = replace(base_cfg, dim=d, eta=eta, threshold=eps_w2,
                      stop_rule="w2_threshold")
        target = quadratic_target(cfg)
        # enough replicates that estimation noise sits well under the
        # threshold (1.5x the resolution guard), and grows with d so the
        # moment estimates stay comparably tight at every dimension
        guard_floor = math.ceil(
            4.5 * math.sqrt(2.0 * float(np.sum(target.var ** 2))) / eps_w2)
        replicates = max(base_cfg.replicates, 16 * d, guard_floor)
        per_ensemble = []
        for e in range(ensembles):
            seed = derive_seed(cfg.master_seed, 2, d, e)
            per_ensemble.append(rounds_to_w2(cfg, target, replicates, seed))
        done = [r for r in per_ensemble if r is not None]
        mean_rounds = float(np.mean(done)) if len(done) == len(per_ensemble) else None
        return DimPoint(dim=d, eta=eta, replicates=replicates, rounds=mean_rounds)

    points = _map(one, list(dims), workers)
    fitted = [(p.dim, p.rounds**2) for p in points if p.converged]
    alpha = beta = r_squared = None
    if len(fitted) >= 2:
        x = np.array([f[0] for f in fitted], dtype=np.float64)
        y = np.array([f[1] for f in fitted], dtype=np.float64)
        alpha, beta = np.polyfit(x, y, 1)
        predicted = alpha * x + beta
        ss_res = float(np.sum((y - predicted) ** 2))
        ss_tot = float(np.sum((y - y.mean()) ** 2))
        r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
        alpha, beta = float(alpha), float(beta)
    return DimCommResult(points=points, alpha=alpha, beta=beta, r_squared=r_squared)


@dataclass
class SweepRow:
    algorithm: str
    eta: float
    K: int
    T: int
    me: float
    n_samples: int


def _collect_me(cfg: ExperimentConfig, eta: float, K: int, algorithm: str,
                reference: np.ndarray) -> tuple[float, int]:
    """Mean marginal error over the configured replicates, run as one
    lockstep batch of independent chains."""
    run_cfg = replace(cfg, algorithm=algorithm, eta=eta, leapfrog_steps=K,
                      schedule_kind="constant")
    theta0 = np.zeros((cfg.replicates, cfg.dim))
    trace = run_trace(run_cfg, cfg.iterations, theta0=theta0, record_every=1)
    start = int(trace.n_records * cfg.burn_in_fraction)
    mes = []
    n = 0
    for r in range(cfg.replicates):
        samples = trace.global_params[start:, r, :]
        n = min(len(samples), len(reference))
        mes.append(marginal_error(subsample_rows(samples, n),
                                  subsample_rows(reference, n)))
    return float(np.mean(mes)), n


def cmd_sweep_stepsize(etas, base_cfg: ExperimentConfig, workers: int = 1,
                       k_grid=(2, 5, 10, 20)) -> list:
    """Marginal error against the reference set for fa-hmc and fa-ld over a
    stepsize grid, at a common iteration budget.

    fa-hmc uses the trajectory-length heuristic for K when ``eta <= 0.01``
    and otherwise picks the best K from ``k_grid``; fa-ld always runs K = 1.
    Marginal errors are averaged over the configured replicates (independent
    chains under one master seed).
    """
    if base_cfg.stop_rule != "fixed_iterations":
        raise ConfigError("sweeps run a fixed iteration budget", "stopping.rule")
    reference = _load_reference(base_cfg)

    def fa_hmc_row(eta: float) -> SweepRow:
        if eta <= 0.01:
            candidates = [default_leapfrog_steps(eta)]
        else:
            candidates = sorted(set(k_grid))
        best = None
        for K in candidates:
            me, n = _collect_me(base_cfg, eta, K, "fa-hmc", reference)
            row = SweepRow("fa-hmc", eta, K, base_cfg.local_period, me, n)
            if best is None or row.me < best.me:
                best = row
        return best

    def fa_ld_row(eta: float) -> SweepRow:
        me, n = _collect_me(base_cfg, eta, 1, "fa-ld", reference)
        return SweepRow("fa-ld", eta, 1, base_cfg.local_period, me, n)

    jobs = [(fa_hmc_row, eta) for eta in etas] + [(fa_ld_row, eta) for eta in etas]
    rows = _map(lambda job: job[0](job[1]), jobs, workers)
    return rows


def write_sweep_csv(rows, path) -> None:
    _write_csv(Path(path), "algorithm,eta,K,T,me,n_samples",
               [f"{r.algorithm},{r.eta!r},{r.K},{r.T},{r.me!r},{r.n_samples}"
                for r in rows])


@dataclass
class LocalSweepRow:
    T: int
    rounds: int | None

    @property
    def converged(self) -> bool:
        return self.rounds is not None


def cmd_sweep_local(periods, eps_me: float, base_cfg: ExperimentConfig,
                    workers: int = 1) -> list:
    """Rounds needed to bring the online marginal error below ``eps_me`` for
    each sync period T.  One sample is collected per round; the marginal
    error is evaluated against the reference at matched sample counts.
    Entries that hit the iteration cap are reported as unconverged."""
    if eps_me <= 0:
        raise ContractError("eps_me must be positive")
    reference = _load_reference(base_cfg)

    def one(T: int) -> LocalSweepRow:
        cfg = replace(base_cfg, local_period=T, stop_rule="me_threshold",
                      threshold=eps_me)
        collected = []
        state = {"rounds": None}

        def stop(t, theta_bar):
            if t == 0:
                return False
            collected.append(np.array(theta_bar))
            me = _me_against_reference(np.asarray(collected), reference)
            if me < eps_me:
                state["rounds"] = t // T
                return True
            return False

        run_trace(cfg, cfg.max_iterations, seed=derive_seed(cfg.master_seed, 3, T),
                  record_every=T, stop_at_sync=stop)
        return LocalSweepRow(T=T, rounds=state["rounds"])

    return _map(one, list(periods), workers)


def write_local_sweep_csv(rows, path) -> None:
    _write_csv(Path(path), "T,rounds,converged",
               [f"{r.T},{'' if r.rounds is None else r.rounds},{int(r.converged)}"
                for r in rows])


def cmd_compare(path_a, path_b) -> dict:
    """Marginal error and moment-based W2 between two snapshot files."""
    from .metrics import empirical_moments, w2_gaussian
    from .trace import read_snapshots
    a = read_snapshots(path_a)
    b = read_snapshots(path_b)
    n = min(len(a), len(b))
    me = marginal_error(subsample_rows(a, n), subsample_rows(b, n))
    w2 = w2_gaussian(empirical_moments(a), empirical_moments(b))
    return {"n_a": len(a), "n_b": len(b), "n_compared": n,
            "marginal_error": me, "w2_moments": w2}


def _map(fn, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _write_csv(path: Path, header: str, rows) -> None:
    payload = "\n".join([header, *rows]) + "\n"
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(payload)
    tmp.replace(path)
