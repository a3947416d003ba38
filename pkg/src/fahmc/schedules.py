"""Stepsize schedules for unadjusted (FA-)HMC.

A schedule maps the iteration index ``t`` to the leapfrog stepsize
``eta_t``.  All schedules here are strictly positive and non-increasing,
which the federation driver requires.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ScheduleError

__all__ = [
    "ConstantSchedule", "EpochDoublingSchedule", "accuracy_tuned_stepsize",
    "epoch_doubling_schedule", "default_leapfrog_steps", "default_c_d",
]


@dataclass(frozen=True)
class ConstantSchedule:
    """``eta_t = eta`` for all t."""

    eta: float

    def __post_init__(self):
        if not self.eta > 0:
            raise ScheduleError(f"eta must be positive, got {self.eta}")

    def __call__(self, t: int) -> float:
        return self.eta


@dataclass(frozen=True)
class EpochDoublingSchedule:
    """Piecewise-constant decay on epochs of doubling length.

    Epoch ``s`` (s = 0, 1, ...) covers iterations
    ``[t1 * (2**s - 1), t1 * (2**(s+1) - 1))`` and uses stepsize
    ``eta_init * decay**s``.  The total iteration count needed to finish
    epoch ``s - 1`` (i.e. to reach epoch ``s``) is exactly ``t1*(2**s - 1)``.
    """

    eta_init: float
    t1: int
    decay: float = 1.0 / math.sqrt(2.0)

    def __post_init__(self):
        if not self.eta_init > 0:
            raise ScheduleError(f"eta_init must be positive, got {self.eta_init}")
        if self.t1 < 1:
            raise ScheduleError(f"t1 must be >= 1, got {self.t1}")
        if not 0 < self.decay <= 1:
            raise ScheduleError(f"decay must be in (0, 1] to keep the schedule non-increasing")

    def epoch_of(self, t: int) -> int:
        if t < 0:
            raise ContractError("t must be nonnegative")
        return (t // self.t1 + 1).bit_length() - 1

    def __call__(self, t: int) -> float:
        return self.eta_init * self.decay ** self.epoch_of(t)


def accuracy_tuned_stepsize(eps: float, d: int, T: int, K: int, L: float,
                            rho: float, n_nodes: int, sigma_g: float,
                            weights: np.ndarray, C: float = 1.0) -> float:
    """Constant stepsize meeting a target W2 accuracy ``eps``.

    Returns ``eta`` with

    ``eta^2 = C * min( 1/(K^2 L),
                       eps/(K^2 sqrt(d) T),
                       eps^2/(K^2 d T^2 (1-rho) N),
                       eps^2/(K d sum_c w_c^2 sigma_g^2) )``.

    Terms whose denominator vanishes (``rho = 1`` kills the momentum-noise
    term, ``sigma_g = 0`` the gradient-noise term) are dropped from the min;
    the smoothness cap is always present.  ``C`` absorbs the problem-
    dependent constant and defaults to 1.
    """
    if eps <= 0 or d < 1 or T < 1 or K < 1 or L <= 0 or C <= 0:
        raise ContractError("eps, d, T, K, L, C must all be positive")
    if not 0 <= rho <= 1:
        raise ContractError(f"rho must lie in [0, 1], got {rho}")
    if sigma_g < 0:
        raise ContractError("sigma_g must be nonnegative")
    w = np.asarray(weights, dtype=np.float64)
    terms = [1.0 / (K * K * L), eps / (K * K * math.sqrt(d) * T)]
    if rho < 1.0:
        terms.append(eps * eps / (K * K * d * T * T * (1.0 - rho) * n_nodes))
    w2_sigma = float(np.sum(w * w)) * sigma_g * sigma_g
    if w2_sigma > 0.0:
        terms.append(eps * eps / (K * d * w2_sigma))
    return math.sqrt(C * min(terms))


def default_c_d(d: int) -> float:
    """Default dimension constant ``128 + 32 ln^2(2d)`` used by
    :func:`epoch_doubling_schedule`."""
    return 128.0 + 32.0 * math.log(2 * d) ** 2


def epoch_doubling_schedule(D: float, delta: float, L: float, mu: float,
                            K: int, T: int, c_d: float) -> EpochDoublingSchedule:
    """Build the epoch-doubling schedule from the contraction parameters.

    The initial stepsize solves ``(K eta)^2 = D / (8 c_d delta L)`` and the
    first epoch length is ``t1 = ceil(-ln 8 / (T ln(1 - mu (K eta)^2 / 4))) * T``
    (rounded up to a multiple of ``T`` so the stepsize is constant between
    synchronizations).  Subsequent epochs double in length while the stepsize
    shrinks by ``1/sqrt(2)`` at each boundary.

    ``D`` is the squared initialization distance and ``delta`` the divergence
    scale ``d (T^2 (gamma + (1-rho) N) + sum_c w_c^2 sigma_g^2 / K)`` computed
    by the caller from the run configuration.
    """
    if min(D, delta, L, mu, c_d) <= 0 or K < 1 or T < 1:
        raise ContractError("D, delta, L, mu, c_d must be positive; K, T >= 1")
    k_eta_sq = D / (8.0 * c_d * delta * L)
    contraction = mu * k_eta_sq / 4.0
    if contraction >= 1.0:
        raise ScheduleError(
            f"mu (K eta)^2 / 4 = {contraction:.6g} >= 1: no contraction; "
            "increase c_d or delta")
    eta_init = math.sqrt(k_eta_sq) / K
    t1 = math.ceil(-math.log(8.0) / (T * math.log1p(-contraction))) * T
    return EpochDoublingSchedule(eta_init=eta_init, t1=t1)


def default_leapfrog_steps(eta: float) -> int:
    """Leapfrog step count ``max(1, floor(pi / (3 eta)))`` so each
    trajectory integrates a fixed fraction of the oscillation period."""
    if not eta > 0:
        raise ContractError(f"eta must be positive, got {eta}")
    return max(1, math.floor(math.pi / (3.0 * eta)))
