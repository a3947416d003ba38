"""Leapfrog integration of Hamiltonian dynamics, and the single-chain
unadjusted HMC driver built on it.

One leapfrog step with stepsize ``eta`` reads

    theta_{k+1} = theta_k + eta p_k - eta^2/2 * g_k
    p_{k+1}     = p_k - eta/2 * (g_k + g'_{k+1})

where ``g_k`` is the (possibly stochastic) gradient at ``theta_k`` and
``g'_{k+1}`` a fresh evaluation at ``theta_{k+1}``.  Within a step ``g_k``
is evaluated once and reused by both updates.  Across steps the gradient at
``theta_{k+1}`` is evaluated twice with independent randomness (once as
``g'_{k+1}`` closing step k, once as ``g_{k+1}`` opening step k+1); with
exact gradients the two coincide and the evaluation is cached.  A K-step
call therefore makes K+1 distinct evaluations with exact gradients and 2K
with stochastic ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DivergenceError
from .models import EXACT, GradientNoise, stochastic_grad
from .rng import StreamLayout
from .trace import ChainTrace

__all__ = ["LeapfrogResult", "leapfrog", "quadratic_exact_flow", "hmc_chain"]


@dataclass
class LeapfrogResult:
    position: np.ndarray
    momentum: np.ndarray
    gradient_evals: int


def _locate_divergence(model, theta0, p0, eta, K, grad_fn):
    """Re-run a diverged exact-gradient trajectory to find the first bad step."""
    theta = np.array(theta0, dtype=np.float64)
    p = np.array(p0, dtype=np.float64)
    with np.errstate(over="ignore", invalid="ignore"):
        g = grad_fn(theta)
        for k in range(K):
            theta = theta + eta * p - 0.5 * eta * eta * g
            g_new = grad_fn(theta)
            p = p - 0.5 * eta * (g + g_new)
            if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(p))):
                return k
            g = g_new
    return K - 1


def leapfrog(model, theta0: np.ndarray, p0: np.ndarray, eta: float, K: int,
             noise: GradientNoise = EXACT,
             rng: np.random.Generator | None = None) -> LeapfrogResult:
    """Run K leapfrog steps from ``(theta0, p0)``.

    ``theta0`` and ``p0`` may carry leading batch axes, which are propagated
    through (independent trajectories sharing the stepsize).  Raises
    :class:`DivergenceError` with the offending step index if any coordinate
    becomes non-finite.
    """
    if K < 1:
        raise ContractError(f"K must be >= 1, got {K}")
    if not eta > 0:
        raise ContractError(f"eta must be positive, got {eta}")
    # every update rebinds, so views of the caller's arrays are never mutated
    theta = np.asarray(theta0, dtype=np.float64)
    p = np.asarray(p0, dtype=np.float64)
    if theta.shape != p.shape:
        raise ContractError(f"theta0 shape {theta.shape} != p0 shape {p.shape}")
    dim = getattr(model, "dim", None)
    if dim is not None and theta.shape[-1:] != (dim,):
        raise ContractError(
            f"theta0 trailing dimension {theta.shape[-1:]} does not match model ({dim},)")
    exact = noise.is_exact
    half_e2 = 0.5 * eta * eta
    half_e = 0.5 * eta
    # dimensions were validated above, so the hot loop can use the models'
    # unchecked gradient closures
    fast = model.fast_grad() if hasattr(model, "fast_grad") else model.grad
    if exact:
        eval_grad = fast
    elif noise.kind == "gaussian":
        if rng is None:
            raise ContractError("stochastic noise requires an rng stream")
        sigma = np.sqrt(noise.variance)

        def eval_grad(position):
            return fast(position) + sigma * rng.standard_normal(position.shape)
    else:
        def eval_grad(position):
            return stochastic_grad(model, position, noise, rng)

    # Non-finite values are detected and reported; silence the transient
    # overflow warnings a diverging trajectory produces on the way there.
    with np.errstate(over="ignore", invalid="ignore"):
        if exact:
            g = eval_grad(theta)
            evals = 1
            for _ in range(K):
                theta = theta + eta * p - half_e2 * g
                g_new = eval_grad(theta)
                evals += 1
                p = p - half_e * (g + g_new)
                g = g_new
        else:
            g = eval_grad(theta)
            evals = 1
            for k in range(K):
                theta = theta + eta * p - half_e2 * g
                g_close = eval_grad(theta)
                evals += 1
                p = p - half_e * (g + g_close)
                if not (np.isfinite(theta).all() and np.isfinite(p).all()):
                    raise DivergenceError(
                        f"non-finite trajectory (eta={eta}, K={K})", step=k)
                if k + 1 < K:
                    g = eval_grad(theta)
                    evals += 1

    if not (np.isfinite(theta).all() and np.isfinite(p).all()):
        step = _locate_divergence(model, theta0, p0, eta, K, model.grad)
        raise DivergenceError(
            f"non-finite trajectory (eta={eta}, K={K})", step=step)
    return LeapfrogResult(position=theta, momentum=p, gradient_evals=evals)


def quadratic_exact_flow(theta0: np.ndarray, p0: np.ndarray, lam: float,
                         mean: np.ndarray, t: float):
    """Exact Hamiltonian flow for the quadratic potential
    ``lam/2 ||theta - mean||^2`` over time ``t``:

        theta(t) = mean + (theta0 - mean) cos(sqrt(lam) t) + p0 sin(sqrt(lam) t)/sqrt(lam)
        p(t)     = -sqrt(lam) (theta0 - mean) sin(sqrt(lam) t) + p0 cos(sqrt(lam) t)
    """
    if not lam > 0:
        raise ContractError(f"lam must be positive, got {lam}")
    if t < 0:
        raise ContractError(f"t must be nonnegative, got {t}")
    theta0 = np.asarray(theta0, dtype=np.float64)
    p0 = np.asarray(p0, dtype=np.float64)
    root = np.sqrt(lam)
    c, s = np.cos(root * t), np.sin(root * t)
    centered = theta0 - mean
    theta_t = mean + centered * c + p0 * (s / root)
    p_t = -root * centered * s + p0 * c
    return theta_t, p_t


def hmc_chain(model, theta0: np.ndarray, schedule, K: int,
              noise: GradientNoise = EXACT, iterations: int = 1,
              master_seed: int = 0, record_every: int = 1) -> ChainTrace:
    """Unadjusted HMC: per iteration, draw a standard Gaussian momentum and
    run one leapfrog trajectory; no accept/reject step.

    Uses the node-0 stream layout of the federated driver, so a federation
    of a single node with ``rho = 0`` and the same master seed reproduces
    this chain bit for bit.
    """
    if iterations < 1:
        raise ContractError(f"iterations must be >= 1, got {iterations}")
    if record_every < 1:
        raise ContractError(f"record_every must be >= 1, got {record_every}")
    theta = np.array(theta0, dtype=np.float64)
    shape = theta.shape
    streams = StreamLayout(master_seed, 1)
    momentum_rng = streams.node_momentum[0]
    noise_rng = streams.gradient_noise[0]

    n_records = (iterations + record_every - 1) // record_every
    recorded_t = np.empty(n_records, dtype=np.int64)
    recorded = np.empty((n_records,) + shape, dtype=np.float64)
    etas = np.empty(n_records, dtype=np.float64)
    evals = 0
    i = 0
    # momenta come in blocks; a block fill consumes the stream exactly like
    # the per-iteration draws the federated driver makes
    block = max(1, min(1024, 2_000_000 // max(1, int(np.prod(shape)))))
    momenta = None
    for t in range(iterations):
        eta = float(schedule(t))
        offset = t % block
        if offset == 0:
            rows = min(block, iterations - t)
            momenta = momentum_rng.standard_normal((rows,) + shape)
        p = momenta[offset]
        try:
            result = leapfrog(model, theta, p, eta, K, noise, noise_rng)
        except DivergenceError as err:
            raise DivergenceError(str(err), step=err.step, iteration=t) from None
        theta = result.position
        evals += result.gradient_evals
        if (t + 1) % record_every == 0 or t == iterations - 1:
            recorded_t[i] = t
            recorded[i] = theta
            etas[i] = eta
            i += 1
    return ChainTrace(
        recorded_t=recorded_t[:i],
        global_params=recorded[:i],
        eta_used=etas[:i],
        sync_events=np.array([0], dtype=np.int64),
        sync_flags=(recorded_t[:i] == 0).astype(np.int64),
        gradient_evals=evals,
    )
