"""Target distributions: node loss functions and gradient oracles.

Each node ``c`` owns a negative log-posterior ``f_c``.  The global target is
``pi(theta) ~ exp(-sum_c w_c f_c(theta))``.  Models are immutable after
construction and safe to share across concurrent workers; all gradient
evaluations accept batched inputs of shape ``(..., d)`` and broadcast over
the leading axes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import ContractError, UnsupportedNoiseError

__all__ = [
    "QuadraticNode", "LogisticNode", "WeightedSumModel", "GradientNoise",
    "EXACT", "grad", "sigmoid", "stochastic_grad", "check_assumptions",
    "AssumptionReport", "generate_logistic_data", "save_logistic_csv",
    "load_logistic_csv",
]


def _check_dim(theta: np.ndarray, d: int) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape[-1:] != (d,):
        raise ContractError(f"theta has trailing dimension {theta.shape[-1:]}, model expects {d}")
    return theta


@dataclass(frozen=True)
class QuadraticNode:
    """Isotropic quadratic loss ``f(theta) = precision/2 * ||theta - mean||^2``.

    Strongly convex and smooth with ``mu = lipschitz = precision``.
    """

    mean: np.ndarray
    precision: float

    def __post_init__(self):
        object.__setattr__(self, "mean", np.atleast_1d(np.asarray(self.mean, dtype=np.float64)))
        if not self.precision > 0:
            raise ContractError(f"precision must be positive, got {self.precision}")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def mu(self) -> float:
        return float(self.precision)

    @property
    def lipschitz(self) -> float:
        return float(self.precision)

    def potential(self, theta: np.ndarray) -> np.ndarray:
        theta = _check_dim(theta, self.dim)
        diff = theta - self.mean
        return 0.5 * self.precision * np.sum(diff * diff, axis=-1)

    def grad(self, theta: np.ndarray) -> np.ndarray:
        theta = _check_dim(theta, self.dim)
        return self.precision * (theta - self.mean)

    def fast_grad(self):
        """Gradient closure without per-call validation, for integrator hot
        loops that check dimensions once up front."""
        lam, mean = self.precision, self.mean
        return lambda theta: lam * (theta - mean)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    # exp(-logaddexp(0, -x)) is stable for large |x|
    return np.exp(-np.logaddexp(0.0, -x))


@dataclass(frozen=True)
class LogisticNode:
    """Bayesian logistic-regression loss with a Gaussian prior.

    ``f(theta) = scale * sum_i log(1 + exp(-y_i x_i' theta))
                 + prior_precision/2 * ||theta||^2``  with labels in {-1,+1}.

    ``scale`` carries the n/n_c convention when a global likelihood is split
    across nodes.  With ``prior_precision > 0`` the loss is strongly convex
    with ``mu >= prior_precision``; the gradient Lipschitz constant is
    bounded by ``scale/4 * ||X'X||_op + prior_precision``.
    """

    features: np.ndarray
    labels: np.ndarray
    prior_precision: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        y = np.asarray(self.labels, dtype=np.float64).ravel()
        if X.shape[0] != y.shape[0]:
            raise ContractError(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise ContractError("labels must be -1 or +1")
        if self.prior_precision < 0:
            raise ContractError("prior_precision must be nonnegative")
        if not self.scale > 0:
            raise ContractError("scale must be positive")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_data(self) -> int:
        return self.features.shape[0]

    @property
    def mu(self) -> float:
        return float(self.prior_precision)

    @cached_property
    def lipschitz(self) -> float:
        gram_op = float(np.linalg.eigvalsh(self.features.T @ self.features)[-1])
        return self.scale * 0.25 * gram_op + self.prior_precision

    def potential(self, theta: np.ndarray) -> np.ndarray:
        theta = _check_dim(theta, self.dim)
        margins = self.labels * (theta @ self.features.T)
        data_term = np.sum(np.logaddexp(0.0, -margins), axis=-1)
        prior_term = 0.5 * self.prior_precision * np.sum(theta * theta, axis=-1)
        return self.scale * data_term + prior_term

    def grad(self, theta: np.ndarray) -> np.ndarray:
        theta = _check_dim(theta, self.dim)
        margins = self.labels * (theta @ self.features.T)          # (..., n)
        weights = sigmoid(-margins) * self.labels                 # (..., n)
        data_grad = -(weights @ self.features)                     # (..., d)
        return self.scale * data_grad + self.prior_precision * theta

    def fast_grad(self):
        X, y = self.features, self.labels
        scale, prior = self.scale, self.prior_precision

        def closure(theta):
            weights = sigmoid(-(y * (theta @ X.T))) * y
            return scale * -(weights @ X) + prior * theta

        return closure

    def minibatch_grad(self, theta: np.ndarray, indices: np.ndarray) -> np.ndarray:
        """Unbiased gradient from a data subsample, rescaled by n/|batch|.

        The prior term is never subsampled.
        """
        theta = _check_dim(theta, self.dim)
        X = self.features[indices]
        y = self.labels[indices]
        margins = y * (theta @ X.T)
        weights = sigmoid(-margins) * y
        data_grad = -(weights @ X) * (self.n_data / len(indices))
        return self.scale * data_grad + self.prior_precision * theta


@dataclass(frozen=True)
class WeightedSumModel:
    """The global loss ``f = sum_c w_c f_c`` assembled from node models."""

    models: tuple
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if len(self.models) != w.shape[0]:
            raise ContractError("one weight per model required")
        dims = {m.dim for m in self.models}
        if len(dims) != 1:
            raise ContractError(f"models disagree on dimension: {sorted(dims)}")
        object.__setattr__(self, "models", tuple(self.models))
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.models[0].dim

    @property
    def mu(self) -> float:
        return float(sum(w * m.mu for w, m in zip(self.weights, self.models)))

    @property
    def lipschitz(self) -> float:
        return float(sum(w * m.lipschitz for w, m in zip(self.weights, self.models)))

    def potential(self, theta: np.ndarray) -> np.ndarray:
        return sum(w * m.potential(theta) for w, m in zip(self.weights, self.models))

    def grad(self, theta: np.ndarray) -> np.ndarray:
        out = self.weights[0] * self.models[0].grad(theta)
        for w, m in zip(self.weights[1:], self.models[1:]):
            out += w * m.grad(theta)
        return out

    def fast_grad(self):
        parts = [(float(w), m.fast_grad()) for w, m in zip(self.weights, self.models)]

        def closure(theta):
            out = parts[0][0] * parts[0][1](theta)
            for w, fn in parts[1:]:
                out += w * fn(theta)
            return out

        return closure


@dataclass(frozen=True)
class GradientNoise:
    """How gradients are randomized: exact, additive Gaussian, or minibatch.

    Additive noise is zero mean, i.i.d. across coordinates and across the
    two evaluations inside one leapfrog step.  Minibatch draws indices
    uniformly without replacement, fresh per evaluation.
    """

    kind: str
    variance: float = 0.0
    batch_size: int = 0

    _KINDS = ("exact", "gaussian", "minibatch")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ContractError(f"unknown noise kind {self.kind!r}")
        if self.kind == "gaussian" and not self.variance > 0:
            raise ContractError("gaussian noise needs variance > 0")
        if self.kind == "minibatch" and not self.batch_size >= 1:
            raise ContractError("minibatch noise needs batch_size >= 1")

    @classmethod
    def exact(cls) -> "GradientNoise":
        return cls("exact")

    @classmethod
    def additive_gaussian(cls, variance: float) -> "GradientNoise":
        return cls("gaussian", variance=float(variance))

    @classmethod
    def minibatch(cls, batch_size: int) -> "GradientNoise":
        return cls("minibatch", batch_size=int(batch_size))

    @property
    def is_exact(self) -> bool:
        return self.kind == "exact"


EXACT = GradientNoise.exact()


def grad(model, theta: np.ndarray) -> np.ndarray:
    """Exact gradient of the node loss at ``theta``."""
    return model.grad(theta)


def stochastic_grad(model, theta: np.ndarray, noise: GradientNoise,
                    rng: np.random.Generator | None = None) -> np.ndarray:
    """Unbiased gradient estimate under the given noise model.

    With ``exact`` noise the result is bit-identical to :func:`grad` and no
    randomness is consumed.
    """
    if noise.is_exact:
        return model.grad(theta)
    if rng is None:
        raise ContractError("stochastic noise requires an rng stream")
    if noise.kind == "gaussian":
        g = model.grad(theta)
        return g + np.sqrt(noise.variance) * rng.standard_normal(g.shape)
    # minibatch
    if not hasattr(model, "minibatch_grad"):
        raise UnsupportedNoiseError(
            f"minibatch noise needs a data-backed model, got {type(model).__name__}")
    if noise.batch_size > model.n_data:
        raise ContractError(f"batch_size {noise.batch_size} exceeds node data size {model.n_data}")
    indices = rng.choice(model.n_data, size=noise.batch_size, replace=False)
    return model.minibatch_grad(theta, indices)


@dataclass
class AssumptionReport:
    mu_est: float
    lipschitz_est: float
    violations: list = field(default_factory=list)
    pairs_used: int = 0


def _pair_estimates(model, x: np.ndarray, y: np.ndarray):
    """(smoothness ratio, convexity monotonicity ratio) for one probe pair,
    or None for a degenerate pair."""
    diff = x - y
    gap_sq = float(np.dot(diff, diff))
    if gap_sq <= 1e-24:
        return None
    gdiff = model.grad(x) - model.grad(y)
    ratio = float(np.linalg.norm(gdiff)) / np.sqrt(gap_sq)
    mono = float(np.dot(gdiff, diff)) / gap_sq
    return ratio, mono


def check_assumptions(model, probe_count: int, rng: np.random.Generator,
                      probe_scale: float = 2.0) -> AssumptionReport:
    """Probe random point pairs to estimate curvature bounds.

    Estimates ``||grad f(x) - grad f(y)|| / ||x - y||`` extremes and checks
    the declared ``mu`` (through the monotonicity form
    ``<grad f(x) - grad f(y), x - y> >= mu ||x - y||^2``) and ``lipschitz``.
    Report-only: violations are listed, nothing is raised.
    """
    if probe_count < 2:
        raise ContractError("probe_count must be >= 2")
    d = model.dim
    mu_est = np.inf
    l_est = 0.0
    used = 0
    for _ in range(probe_count):
        x = probe_scale * rng.standard_normal(d)
        y = probe_scale * rng.standard_normal(d)
        est = _pair_estimates(model, x, y)
        if est is None:
            continue
        ratio, mono = est
        l_est = max(l_est, ratio)
        mu_est = min(mu_est, mono)
        used += 1
    report = AssumptionReport(mu_est=mu_est, lipschitz_est=l_est, pairs_used=used)
    tol = 1e-9 * max(1.0, l_est)
    if l_est > model.lipschitz + tol:
        report.violations.append(
            f"smoothness: observed ratio {l_est:.6g} exceeds declared {model.lipschitz:.6g}")
    if mu_est < model.mu - tol:
        report.violations.append(
            f"convexity: observed monotonicity {mu_est:.6g} below declared {model.mu:.6g}")
    return report


def generate_logistic_data(n: int, d: int, seed: int, feature_sigma: float = 1.0,
                           true_theta: np.ndarray | None = None):
    """Synthetic logistic-regression data.

    Features are i.i.d. ``N(0, feature_sigma^2)``; when ``true_theta`` is
    omitted it is drawn once as standard normal scaled by ``1/sqrt(d)``.
    Labels are sampled from the logistic model and returned in {-1,+1}.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(9,)))
    X = feature_sigma * rng.standard_normal((n, d))
    if true_theta is None:
        true_theta = rng.standard_normal(d) / np.sqrt(d)
    probs = sigmoid(X @ true_theta)
    y = np.where(rng.random(n) < probs, 1.0, -1.0)
    return X, y, np.asarray(true_theta, dtype=np.float64)


def save_logistic_csv(path, X: np.ndarray, y: np.ndarray) -> None:
    """Write a dataset as CSV with header ``x_1,...,x_d,y`` (labels +-1)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y)
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x_{j + 1}" for j in range(X.shape[1])] + ["y"])
        for row, label in zip(X, y):
            writer.writerow([repr(float(v)) for v in row] + [str(int(label))])
    tmp.replace(path)


def load_logistic_csv(path):
    """Read a dataset written by :func:`save_logistic_csv`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[-1] != "y" or header[0] != "x_1":
            raise ContractError(f"{path}: expected header x_1,...,x_d,y")
        rows = list(reader)
    data = np.array([[float(v) for v in row] for row in rows], dtype=np.float64)
    return data[:, :-1], data[:, -1]
