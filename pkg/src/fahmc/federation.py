"""Federated averaging HMC.

N nodes run local leapfrog HMC with cross-node correlated momentum and are
synchronized by a weighted parameter average every T iterations.  With one
leapfrog step per iteration the scheme reduces to federated unadjusted
Langevin dynamics; a de-bias variant shifts local gradients by an anchored
global gradient to cancel heterogeneity drift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ContractError, DivergenceError, ScheduleError
from .integrator import LeapfrogResult, leapfrog
from .models import EXACT, GradientNoise
from .rng import StreamLayout
from .trace import ChainTrace

__all__ = [
    "FederationConfig", "NodeState", "sample_correlated_momentum",
    "run_fa_hmc", "run_fa_ld", "run_debias_fa_hmc", "debias_leapfrog",
    "quadratic_pair_sync_moments", "weighted_mean",
]


def normalized_weights(weights, n_nodes: int) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (n_nodes,):
        raise ContractError(f"weights shape {w.shape} does not match {n_nodes} nodes")
    if np.any(w <= 0):
        raise ContractError("all weights must be positive")
    if abs(math.fsum(w) - 1.0) > 1e-12:
        raise ContractError(f"weights must sum to 1 within 1e-12, got {math.fsum(w)!r}")
    return w


@dataclass(frozen=True)
class FederationConfig:
    """Run parameters shared by all federated drivers.

    ``T`` is the sync period in iterations, ``K`` the leapfrog steps per
    iteration and ``rho`` in [0, 1] the fraction of momentum variance shared
    across nodes.  ``debias_anchor`` selects whether the de-bias variant
    anchors its correction at the previous broadcast (``"lagged"``) or the
    current one (``"current"``).
    """

    n_nodes: int
    weights: np.ndarray
    T: int
    K: int
    rho: float
    schedule: object
    noise: GradientNoise = EXACT
    master_seed: int = 0
    debias_anchor: str = "lagged"

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ContractError(f"n_nodes must be >= 1, got {self.n_nodes}")
        object.__setattr__(self, "weights", normalized_weights(self.weights, self.n_nodes))
        if self.T < 1 or self.K < 1:
            raise ContractError(f"T and K must be >= 1, got T={self.T}, K={self.K}")
        if not 0.0 <= self.rho <= 1.0:
            raise ContractError(f"rho must lie in [0, 1], got {self.rho}")
        if self.debias_anchor not in ("lagged", "current"):
            raise ContractError("debias_anchor must be 'lagged' or 'current'")
        if not callable(self.schedule):
            raise ContractError("schedule must map an iteration index to a stepsize")

    def momentum_scale(self, c: int) -> float:
        """Per-node momentum norm scale: E||p_c||^2 = (rho + (1-rho)/w_c) d."""
        return math.sqrt(self.rho + (1.0 - self.rho) / float(self.weights[c]))


@dataclass
class NodeState:
    """One node's position and model; streams live in the driver's layout."""

    theta: np.ndarray
    model: object


def weighted_mean(vectors, weights: np.ndarray) -> np.ndarray:
    """Weighted average over nodes with a fixed-order compensated (Kahan)
    sum, so the reduction is independent of node scheduling."""
    acc = np.zeros_like(np.asarray(vectors[0], dtype=np.float64))
    comp = np.zeros_like(acc)
    for w, v in zip(weights, vectors):
        term = w * v - comp
        total = acc + term
        comp = (total - acc) - term
        acc = total
    return acc


def sample_correlated_momentum(rho: float, weights: np.ndarray, d: int,
                               shared_stream: np.random.Generator,
                               private_streams, batch_shape: tuple = ()):
    """Draw one momentum per node with cross-node correlation ``rho``:

        p_c = sqrt(rho) xi + sqrt(1-rho) xi_c / sqrt(w_c)

    with ``xi`` from the shared stream and ``xi_c`` from node c's private
    stream, all standard Gaussian.  The ``1/sqrt(w_c)`` factor makes the
    weighted average ``sum_c w_c p_c`` standard Gaussian:
    ``E||p_c||^2 = (rho + (1-rho)/w_c) d`` and ``E||p_bar||^2 = d``.
    """
    if not 0.0 <= rho <= 1.0:
        raise ContractError(f"rho must lie in [0, 1], got {rho}")
    weights = np.asarray(weights, dtype=np.float64)
    shape = tuple(batch_shape) + (d,)
    shared = shared_stream.standard_normal(shape)
    sq_rho = math.sqrt(rho)
    sq_1m = math.sqrt(1.0 - rho)
    out = []
    for c, stream in enumerate(private_streams):
        private = stream.standard_normal(shape)
        out.append(sq_rho * shared + (sq_1m / math.sqrt(weights[c])) * private)
    return out


def debias_leapfrog(model, theta0: np.ndarray, p0: np.ndarray, eta: float,
                    K: int, anchor_theta: np.ndarray,
                    anchor_global_grad: np.ndarray,
                    noise: GradientNoise = EXACT,
                    rng: np.random.Generator | None = None) -> LeapfrogResult:
    """Leapfrog with every gradient shifted by
    ``anchor_global_grad - grad(model, anchor_theta)``.

    The shift cancels node heterogeneity to first order: when all nodes
    share the same loss and ``anchor_global_grad`` equals the node gradient
    at the anchor, the shift is exactly zero and the output matches plain
    :func:`leapfrog` bit for bit.
    """
    anchor_global_grad = np.asarray(anchor_global_grad, dtype=np.float64)
    if anchor_global_grad.shape[-1] != np.asarray(theta0).shape[-1]:
        raise ContractError("anchor_global_grad dimension does not match theta0")
    shift = anchor_global_grad - model.grad(np.asarray(anchor_theta, dtype=np.float64))
    return leapfrog(_ShiftedModel(model, shift), theta0, p0, eta, K, noise, rng)


class _ShiftedModel:
    """Model wrapper adding a constant vector to every gradient."""

    def __init__(self, base, shift: np.ndarray):
        self.base = base
        self.shift = shift
        self.dim = base.dim

    def grad(self, theta):
        return self.base.grad(theta) + self.shift

    def fast_grad(self):
        base_fast = self.base.fast_grad() if hasattr(self.base, "fast_grad") \
            else self.base.grad
        shift = self.shift
        return lambda theta: base_fast(theta) + shift

    def minibatch_grad(self, theta, indices):
        return self.base.minibatch_grad(theta, indices) + self.shift


def _drive(config: FederationConfig, models, theta0, iterations: int,
           record_every: int, debias: bool, observer=None,
           stop_at_sync=None) -> ChainTrace:
    if len(models) != config.n_nodes:
        raise ContractError(f"{len(models)} models for {config.n_nodes} nodes")
    dims = {m.dim for m in models}
    if len(dims) != 1:
        raise ContractError(f"models disagree on dimension: {sorted(dims)}")
    d = dims.pop()
    theta0 = np.asarray(theta0, dtype=np.float64)
    if theta0.shape[-1:] != (d,):
        raise ContractError(f"theta0 trailing dimension {theta0.shape[-1:]} != ({d},)")
    if iterations < 1:
        raise ContractError(f"iterations must be >= 1, got {iterations}")
    if record_every < 1:
        raise ContractError(f"record_every must be >= 1, got {record_every}")
    _check_non_increasing(config.schedule, iterations)

    n = config.n_nodes
    w = config.weights
    batch_shape = theta0.shape[:-1]
    streams = StreamLayout(config.master_seed, n)
    nodes = [NodeState(theta=np.array(theta0, dtype=np.float64), model=m) for m in models]

    sq_rho = math.sqrt(config.rho)
    priv_coef = [math.sqrt(1.0 - config.rho) / math.sqrt(w[c]) for c in range(n)]

    # De-bias anchors: position and averaged gradient.  Before the first
    # refresh there is no anchor information, so the correction is zero.
    anchor_shift = [np.zeros(d) for _ in range(n)] if debias else None
    prev_broadcast = None

    n_records = (iterations + record_every - 1) // record_every
    recorded_t = np.empty(n_records, dtype=np.int64)
    recorded = np.empty((n_records,) + batch_shape + (d,), dtype=np.float64)
    etas = np.empty(n_records, dtype=np.float64)
    flags = np.empty(n_records, dtype=np.int64)
    sync_events = []
    dispersion = []
    evals = 0
    rec = 0

    for t in range(iterations):
        eta = float(config.schedule(t))
        is_sync = t % config.T == 0
        if is_sync:
            theta_bar = weighted_mean([s.theta for s in nodes], w)
            if stop_at_sync is not None and stop_at_sync(t, theta_bar):
                break
            sync_events.append(t)
            if t > 0:
                with np.errstate(over="ignore"):
                    spread = sum(
                        wc * np.sum((s.theta - theta_bar) ** 2, axis=-1)
                        for wc, s in zip(w, nodes))
                dispersion.append(np.mean(spread))
            if debias:
                if config.debias_anchor == "current" or prev_broadcast is not None:
                    anchor = theta_bar if config.debias_anchor == "current" else prev_broadcast
                    node_grads = [s.model.grad(anchor) for s in nodes]
                    global_grad = weighted_mean(node_grads, w)
                    anchor_shift = [global_grad - g_c for g_c in node_grads]
                prev_broadcast = theta_bar
            for s in nodes:
                s.theta = np.array(theta_bar)
        if observer is not None:
            observer(t, [s.theta for s in nodes], is_sync)

        shared = streams.shared_momentum.standard_normal(batch_shape + (d,))
        for c, s in enumerate(nodes):
            private = streams.node_momentum[c].standard_normal(batch_shape + (d,))
            p_c = sq_rho * shared + priv_coef[c] * private
            model_c = s.model if not debias else _ShiftedModel(s.model, anchor_shift[c])
            try:
                result = leapfrog(model_c, s.theta, p_c, eta, config.K,
                                  config.noise, streams.gradient_noise[c])
            except DivergenceError as err:
                raise DivergenceError(
                    f"node {c} diverged at iteration {t}: {err}",
                    step=err.step, iteration=t, node=c) from None
            s.theta = result.position
            evals += result.gradient_evals

        if (t + 1) % record_every == 0 or t == iterations - 1:
            recorded_t[rec] = t
            recorded[rec] = weighted_mean([s.theta for s in nodes], w)
            etas[rec] = eta
            flags[rec] = int(is_sync)
            rec += 1

    return ChainTrace(
        recorded_t=recorded_t[:rec],
        global_params=recorded[:rec],
        eta_used=etas[:rec],
        sync_events=np.asarray(sync_events, dtype=np.int64),
        sync_flags=flags[:rec],
        sync_dispersion=np.asarray(dispersion, dtype=np.float64),
        gradient_evals=evals,
    )


def _check_non_increasing(schedule, horizon: int) -> None:
    """Reject schedules that increase anywhere on the run horizon."""
    probes = sorted(set([0, 1, horizon - 1] + list(range(0, horizon, max(1, horizon // 64)))))
    values = [float(schedule(t)) for t in probes if 0 <= t < horizon]
    for a, b in zip(values, values[1:]):
        if b > a * (1.0 + 1e-12):
            raise ScheduleError("stepsize schedule must be non-increasing in t")
    if any(v <= 0 for v in values):
        raise ScheduleError("stepsize schedule must be strictly positive")


def run_fa_hmc(config: FederationConfig, models, theta0, iterations: int,
               record_every: int = 1, observer=None, stop_at_sync=None) -> ChainTrace:
    """Federated averaging HMC.

    Per iteration t: draw correlated momenta; if ``t % T == 0`` broadcast
    the weighted average so every node restarts from it (the t = 0
    broadcast is a numerical no-op since all nodes share ``theta0``, but is
    still logged); every node then runs one leapfrog trajectory.  The
    aggregated parameter is recorded after each ``record_every`` iterations.

    ``theta0`` may carry leading batch axes to run an ensemble of
    independent replicates in lockstep.  ``stop_at_sync(t, theta_bar)`` may
    end the run early at a broadcast (threshold stopping rules).
    """
    return _drive(config, models, theta0, iterations, record_every, debias=False,
                  observer=observer, stop_at_sync=stop_at_sync)


def run_fa_ld(config: FederationConfig, models, theta0, iterations: int,
              record_every: int = 1, observer=None, stop_at_sync=None) -> ChainTrace:
    """Federated averaging Langevin dynamics: FA-HMC with K forced to 1,
    i.e. unadjusted Langevin updates with effective stepsize ``eta^2 / 2``."""
    if config.K != 1:
        config = replace(config, K=1)
    return _drive(config, models, theta0, iterations, record_every, debias=False,
                  observer=observer, stop_at_sync=stop_at_sync)


def run_debias_fa_hmc(config: FederationConfig, models, theta0, iterations: int,
                      record_every: int = 1, observer=None, stop_at_sync=None) -> ChainTrace:
    """FA-HMC with de-biased local gradients.

    At each broadcast the driver also averages the node gradients at the
    anchor point (the previous broadcast for ``debias_anchor="lagged"``, the
    current one for ``"current"``) and each node shifts every local gradient
    by ``global_grad(anchor) - grad_c(anchor)`` until the next sync.  Before
    the first anchor exists the correction is zero, so the first epoch
    matches :func:`run_fa_hmc` exactly.
    """
    return _drive(config, models, theta0, iterations, record_every, debias=True,
                  observer=observer, stop_at_sync=stop_at_sync)


def quadratic_pair_sync_moments(theta0_coord: float, mean_hi: float,
                                mean_lo: float, L: float, mu: float,
                                horizon: float, T: int, t: int,
                                var0: float = 0.0):
    """Per-coordinate (mean, variance) of the synced average after ``t``
    rounds for the two-group isotropic quadratic fleet with shared momentum.

    One group has curvature ``L`` with scalar minimizer coordinate
    ``mean_hi``, the other curvature ``mu <= L`` with ``mean_lo``; the
    groups carry equal weight.  A round is ``T`` exact HMC trajectories of
    duration ``horizon`` (= K eta) each, followed by the average.  With

        c_hi  = cos^T(sqrt(L) h),   c_lo = cos^T(sqrt(mu) h)
        gamma = (c_hi + c_lo) / 2
        s     = ( sqrt(1 - c_hi^2) / sqrt(L) + sqrt(1 - c_lo^2) / sqrt(mu) ) / 2

    the average after ``t`` rounds is Gaussian per coordinate with

        mean(t) = theta0_coord gamma^t
                  + (mean_hi (1 - c_hi) + mean_lo (1 - c_lo)) / (2 (1 - gamma)) * (1 - gamma^t)
        var(t)  = var0 gamma^{2t} + s^2 (1 - gamma^{2t}) / (1 - gamma^2).

    The start is Gaussian per coordinate with mean ``theta0_coord`` and
    variance ``var0``.
    """
    if not (L >= mu > 0):
        raise ContractError(f"need L >= mu > 0, got L={L}, mu={mu}")
    if T < 1 or t < 0:
        raise ContractError("T must be >= 1 and t >= 0")
    if var0 < 0:
        raise ContractError("var0 must be nonnegative")
    ch = math.cos(math.sqrt(L) * horizon) ** T
    cl = math.cos(math.sqrt(mu) * horizon) ** T
    gamma = 0.5 * (ch + cl)
    if abs(1.0 - gamma) < 1e-15 or abs(gamma) >= 1.0:
        raise ScheduleError(f"degenerate horizon: contraction factor gamma={gamma!r}")
    fixed_point = (mean_hi * (1.0 - ch) + mean_lo * (1.0 - cl)) / (2.0 * (1.0 - gamma))
    s = 0.5 * (math.sqrt(max(0.0, 1.0 - ch * ch)) / math.sqrt(L)
               + math.sqrt(max(0.0, 1.0 - cl * cl)) / math.sqrt(mu))
    gt = gamma ** t
    mean_t = theta0_coord * gt + fixed_point * (1.0 - gt)
    var_t = var0 * gt * gt + s * s * (1.0 - gamma ** (2 * t)) / (1.0 - gamma * gamma)
    return mean_t, var_t
