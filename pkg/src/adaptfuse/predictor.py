"""Logistic-regression stopping classifier and the bagged veto ensemble.

The classifier outputs the probability that the current rank-1 candidate is
*not* the genuine mate. An ensemble terminates fusion only when every member
puts that probability at or below the threshold ``eta``.
"""

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels

DEFAULT_ETA = 1e-6
DEFAULT_M = 100
DEFAULT_K = 5


class TrainingError(RuntimeError):
    pass


class Decision(enum.Enum):
    TERMINATE = "terminate"
    CONTINUE = "continue"


@dataclass(frozen=True)
class TrainConfig:
    step: float = 0.1
    max_iter: int = 10_000
    tol: float = 1e-8
    l2: float = 0.0
    max_rejects: int = 10
    grow: float = 1.1  # step multiplier after an accepted step; 1.0 is fixed-step descent
    armijo: float = 0.25  # required fraction of the first-order decrease; 0 accepts any decrease


@dataclass
class TrainingSet:
    """Feature rows and labels; label 1 means the rank-1 candidate is not the mate."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=float))
        self.labels = np.asarray(self.labels, dtype=float).ravel()
        if len(self.features) != len(self.labels):
            raise ValueError("features and labels differ in length")

    def __len__(self):
        return len(self.labels)


@dataclass(frozen=True)
class LogisticModel:
    theta: np.ndarray  # index 0 multiplies the constant bias input

    @property
    def k(self):
        return len(self.theta) - 1


def logistic(z):
    z = np.asarray(z, dtype=float)
    out = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                   np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
    return float(out) if out.ndim == 0 else out


def _with_bias(features):
    x = np.atleast_2d(np.asarray(features, dtype=float))
    return np.hstack([np.ones((x.shape[0], 1)), x])


def predict(model, features):
    """Probability that rank-1 is not genuine, for one feature row or a matrix of rows."""
    x = np.asarray(features, dtype=float)
    if x.shape[-1] != model.k:
        raise ValueError(f"expected {model.k} features, got {x.shape[-1]}")
    out = logistic(_with_bias(x) @ model.theta)
    return float(out[0]) if x.ndim == 1 else out


def cost(model, data, l2=0.0):
    """Mean cross-entropy of the model on ``data``."""
    if len(data) == 0:
        raise ValueError("empty training set")
    x = _with_bias(data.features)
    w = np.full(len(data), 1.0 / len(data))
    return float(kernels.logistic_cost(x, data.labels, w, model.theta, l2))


def gradient(model, data, l2=0.0):
    """Analytic gradient of ``cost`` with respect to theta."""
    x = _with_bias(data.features)
    h = logistic(x @ model.theta)
    g = x.T @ (h - data.labels) / len(data)
    if l2 > 0:
        g[1:] += l2 * model.theta[1:]
    return g


def _fit(x, y, weights, config):
    keep = weights > 0
    theta, _, _, status = kernels.gradient_descent(
        x[keep], y[keep], weights[keep], np.zeros(x.shape[1]),
        config.step, config.max_iter, config.tol, config.l2, config.max_rejects, config.grow, config.armijo,
    )
    if status == 2:
        raise TrainingError("cost kept increasing after repeated step halving")
    return np.asarray(theta)


def train(data, config=TrainConfig()):
    """Batch gradient descent from theta = 0; deterministic."""
    if len(data) < 2:
        raise ValueError("need at least 2 training rows")
    if len(np.unique(data.labels)) < 2:
        warnings.warn("training labels contain a single class")
    x = _with_bias(data.features)
    w = np.full(len(data), 1.0 / len(data))
    return LogisticModel(_fit(x, data.labels, w, config))


def bootstrap_sample(n, seed):
    """n indices drawn uniformly with replacement from range(n)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return np.random.default_rng(seed).integers(0, n, size=n)


def member_seed(seed, i):
    """Counter-keyed child seed for ensemble member i."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key + (i,))
    return np.random.SeedSequence(seed, spawn_key=(i,))


@dataclass(frozen=True)
class VetoEnsemble:
    thetas: np.ndarray  # (m, k + 1)
    eta: float
    input_mean: np.ndarray
    input_std: np.ndarray

    @property
    def m(self):
        return self.thetas.shape[0]

    @property
    def k(self):
        return self.thetas.shape[1] - 1

    @property
    def members(self):
        return [LogisticModel(t) for t in self.thetas]

    def with_eta(self, eta):
        return VetoEnsemble(self.thetas, eta, self.input_mean, self.input_std)

    def member_probabilities(self, features):
        """(n_rows, m) member probabilities for raw (un-normalized) feature rows."""
        x = np.atleast_2d(np.asarray(features, dtype=float))
        if x.shape[1] != self.k:
            raise ValueError(f"expected {self.k} features, got {x.shape[1]}")
        z = _with_bias((x - self.input_mean) / self.input_std)
        return logistic(z @ self.thetas.T)

    def max_probability(self, features):
        return self.member_probabilities(features).max(axis=1)


def terminates(max_probability, eta):
    """Unanimity rule on the largest member probability; eta <= 0 never terminates."""
    return (np.asarray(max_probability) <= eta) & (eta > 0)


def veto_decide(ensemble, features):
    p = ensemble.max_probability(features)[0]
    return Decision.TERMINATE if terminates(p, ensemble.eta) else Decision.CONTINUE


def train_ensemble(data, m=DEFAULT_M, eta=DEFAULT_ETA, seed=0, config=TrainConfig()):
    """Bag ``m`` logistic models on bootstrap replicates of z-normalized features."""
    if len(data) == 0:
        raise ValueError("empty training set")
    feats = data.features
    n, k = feats.shape
    mean = feats.mean(axis=0)
    std = feats.std(axis=0, ddof=1) if n > 1 else np.ones(k)
    std = np.where(std > 0, std, 1.0)
    x = _with_bias((feats - mean) / std)
    thetas = np.empty((m, k + 1))
    for i in range(m):
        counts = np.bincount(bootstrap_sample(n, member_seed(seed, i)), minlength=n)
        try:
            thetas[i] = _fit(x, data.labels, counts / n, config)
        except TrainingError as exc:
            raise TrainingError(f"ensemble member {i}: {exc}") from exc
    return VetoEnsemble(thetas, eta, mean, std)


def _fmt(values):
    return " ".join(format(float(v), ".17g") for v in values)


def write_ensemble(ensemble, fh):
    fh.write("veto-ensemble\n")
    fh.write(f"m {ensemble.m}\n")
    fh.write(f"k {ensemble.k}\n")
    fh.write(f"eta {format(ensemble.eta, '.17g')}\n")
    fh.write(f"mean {_fmt(ensemble.input_mean)}\n")
    fh.write(f"std {_fmt(ensemble.input_std)}\n")
    for theta in ensemble.thetas:
        fh.write(_fmt(theta) + "\n")


def read_ensemble(lines):
    """Parse an ensemble from an iterator of lines (consumes exactly its own lines)."""
    it = iter(lines)
    if next(it).strip() != "veto-ensemble":
        raise ValueError("not a veto-ensemble block")

    def field(name):
        key, _, rest = next(it).strip().partition(" ")
        if key != name:
            raise ValueError(f"expected {name!r}, found {key!r}")
        return rest

    m = int(field("m"))
    k = int(field("k"))
    eta = float(field("eta"))
    mean = np.array(field("mean").split(), dtype=float) if k else np.empty(0)
    std = np.array(field("std").split(), dtype=float) if k else np.empty(0)
    thetas = np.array([next(it).split() for _ in range(m)], dtype=float).reshape(m, k + 1)
    if len(mean) != k or len(std) != k:
        raise ValueError("input statistics do not match k")
    if not (math.isfinite(eta) and np.all(np.isfinite(thetas))):
        raise ValueError("non-finite ensemble parameters")
    return VetoEnsemble(thetas, eta, mean, std)
