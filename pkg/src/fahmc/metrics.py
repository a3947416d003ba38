"""Distances and diagnostics for sample sets and Gaussian targets.

All operations are pure.  Sample matrices are ``(n, d)`` with one sample
per row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError

__all__ = [
    "DiagGaussian", "w2_gaussian", "w2_from_samples",
    "gaussian_product_posterior", "marginal_error", "subsample_rows",
    "split_r_hat", "predictive_metrics", "empirical_moments",
]


@dataclass(frozen=True)
class DiagGaussian:
    """Gaussian with diagonal covariance, stored as per-coordinate variances."""

    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        var = np.atleast_1d(np.asarray(self.var, dtype=np.float64))
        if mean.shape != var.shape:
            raise ContractError(f"mean shape {mean.shape} != var shape {var.shape}")
        if np.any(var < 0):
            raise ContractError("variances must be nonnegative")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "var", var)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def w2_gaussian(a: DiagGaussian, b: DiagGaussian) -> float:
    """Wasserstein-2 distance between diagonal Gaussians:
    ``sqrt(||mean_a - mean_b||^2 + sum_i (sqrt(v_a_i) - sqrt(v_b_i))^2)``."""
    if a.dim != b.dim:
        raise ContractError(f"dimension mismatch: {a.dim} vs {b.dim}")
    mean_part = np.sum((a.mean - b.mean) ** 2)
    sd_part = np.sum((np.sqrt(a.var) - np.sqrt(b.var)) ** 2)
    return float(np.sqrt(mean_part + sd_part))


def empirical_moments(samples: np.ndarray) -> DiagGaussian:
    """Per-coordinate sample mean and unbiased variance."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if samples.shape[0] < 2:
        raise ContractError(f"need at least 2 samples, got {samples.shape[0]}")
    return DiagGaussian(mean=samples.mean(axis=0), var=samples.var(axis=0, ddof=1))


def w2_from_samples(samples: np.ndarray, target: DiagGaussian,
                    debias: bool = True) -> float:
    """W2 between the Gaussian fit of ``samples`` and ``target``.

    The plug-in squared distance is biased upward by the sampling noise of
    the fitted moments (roughly ``1.5 d vbar / n``), which swamps small
    distances at modest sample counts.  With ``debias=True`` the estimator
    subtracts the first-order bias of both the mean term (``sum_i v_i / n``)
    and the standard-deviation term (``sum_i v_i / (2 (n - 1))``), clamping
    each part at zero.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    n = samples.shape[0]
    fit = empirical_moments(samples)
    if fit.dim != target.dim:
        raise ContractError(f"dimension mismatch: {fit.dim} vs {target.dim}")
    mean_part = float(np.sum((fit.mean - target.mean) ** 2))
    sd_part = float(np.sum((np.sqrt(fit.var) - np.sqrt(target.var)) ** 2))
    if debias:
        mean_part = max(0.0, mean_part - float(np.sum(fit.var)) / n)
        sd_part = max(0.0, sd_part - float(np.sum(fit.var)) / (2.0 * (n - 1)))
    return math.sqrt(mean_part + sd_part)


def gaussian_product_posterior(nodes) -> DiagGaussian:
    """Global target of a fleet of isotropic quadratic losses.

    ``nodes`` is an iterable of ``(mean_vector, precision, weight)``.  The
    weighted sum ``sum_c w_c * lam_c/2 ||theta - m_c||^2`` is again an
    isotropic quadratic, so the target is Gaussian with precision
    ``Lam = sum_c w_c lam_c``, mean ``sum_c w_c lam_c m_c / Lam`` and
    per-coordinate variance ``1 / Lam``.
    """
    nodes = list(nodes)
    if not nodes:
        raise ContractError("need at least one node")
    weights = np.array([w for _, _, w in nodes], dtype=np.float64)
    if abs(math.fsum(weights) - 1.0) > 1e-12:
        raise ContractError(f"weights must sum to 1, got {math.fsum(weights)!r}")
    precisions = np.array([lam for _, lam, _ in nodes], dtype=np.float64)
    if np.any(precisions <= 0):
        raise ContractError("precisions must be positive")
    means = np.atleast_2d(np.array([np.atleast_1d(m) for m, _, _ in nodes], dtype=np.float64))
    total = float(np.sum(weights * precisions))
    mean = (weights * precisions) @ means / total
    var = np.full(means.shape[1], 1.0 / total)
    return DiagGaussian(mean=mean, var=var)


def marginal_error(a: np.ndarray, b: np.ndarray) -> float:
    """Mean over coordinates of the 1-d Wasserstein-1 distance between the
    per-coordinate empirical distributions of two equal-size sample sets.

    For equal sample counts the sorted (quantile) coupling is the exact
    optimal transport plan in one dimension, so per coordinate the distance
    is ``mean_j |a_(j) - b_(j)|`` over the sorted columns.
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[1] != b.shape[1]:
        raise ContractError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if a.shape[0] != b.shape[0]:
        raise ContractError(
            f"sample counts differ ({a.shape[0]} vs {b.shape[0]}); "
            "subsample with subsample_rows() first")
    if a.shape[0] == 0:
        raise ContractError("need at least one sample")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ContractError("samples must be finite")
    a_sorted = np.sort(a, axis=0)
    b_sorted = np.sort(b, axis=0)
    return float(np.mean(np.abs(a_sorted - b_sorted)))


def subsample_rows(samples: np.ndarray, count: int) -> np.ndarray:
    """Deterministic strided row subsample, for equalizing sample counts."""
    samples = np.atleast_2d(np.asarray(samples))
    n = samples.shape[0]
    if not 1 <= count <= n:
        raise ContractError(f"cannot take {count} rows from {n}")
    idx = np.floor(np.arange(count) * (n / count)).astype(np.int64)
    return samples[idx]


def split_r_hat(chains) -> np.ndarray:
    """Split potential-scale-reduction factor, per coordinate.

    Each chain of length ``2n`` is split into halves, giving ``m >= 2``
    sequences; with ``W`` the mean within-sequence variance and ``B/n`` the
    variance of sequence means, the statistic is
    ``sqrt(((n-1)/n * W + B/n) / W)``.  Coordinates with zero within-chain
    variance return ``inf``.
    """
    arrays = [np.atleast_2d(np.asarray(c, dtype=np.float64)) for c in chains]
    if not arrays:
        raise ContractError("need at least one chain")
    d = arrays[0].shape[1]
    length = arrays[0].shape[0]
    for arr in arrays:
        if arr.shape[1] != d:
            raise ContractError("chains disagree on dimension")
        if arr.shape[0] != length:
            raise ContractError("chains must share a common length")
    if length < 4:
        raise ContractError(f"chains must have length >= 4 to split, got {length}")
    half = length // 2
    sequences = []
    for arr in arrays:
        sequences.append(arr[:half])
        sequences.append(arr[half:2 * half])
    seqs = np.stack(sequences)                      # (m, n, d)
    n = seqs.shape[1]
    means = seqs.mean(axis=1)                       # (m, d)
    within = seqs.var(axis=1, ddof=1).mean(axis=0)  # (d,)
    between_over_n = means.var(axis=0, ddof=1)      # B / n
    out = np.full(d, np.inf)
    ok = within > 0
    var_plus = (n - 1) / n * within[ok] + between_over_n[ok]
    out[ok] = np.sqrt(var_plus / within[ok])
    return out


def predictive_metrics(probabilities: np.ndarray, labels: np.ndarray) -> dict:
    """Classification metrics for predicted positive-class probabilities.

    Returns accuracy, negative log likelihood (probabilities clamped to
    ``[1e-12, 1 - 1e-12]``), Brier score, and expected calibration error
    over 10 equal-width probability bins.
    """
    p = np.asarray(probabilities, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=np.float64).ravel()
    if p.shape != y.shape:
        raise ContractError(f"lengths differ: {p.shape} vs {y.shape}")
    if p.size == 0:
        raise ContractError("empty input")
    if np.any((p < 0) | (p > 1)):
        raise ContractError("probabilities must lie in [0, 1]")
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise ContractError("labels must be 0 or 1")
    accuracy = float(np.mean((p > 0.5) == (y == 1.0)))
    clamped = np.clip(p, 1e-12, 1.0 - 1e-12)
    nll = float(-np.mean(y * np.log(clamped) + (1.0 - y) * np.log(1.0 - clamped)))
    brier = float(np.mean((p - y) ** 2))
    bins = np.minimum((p * 10).astype(np.int64), 9)
    ece = 0.0
    for b in range(10):
        mask = bins == b
        n_b = int(mask.sum())
        if n_b == 0:
            continue
        ece += (n_b / p.size) * abs(float(y[mask].mean()) - float(p[mask].mean()))
    return {"accuracy": accuracy, "nll": nll, "brier": brier, "ece": float(ece)}
