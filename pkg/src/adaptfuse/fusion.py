"""Score-level fusion rules and GMM likelihood-ratio fusion."""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

RIDGE = 1e-6
EM_RESTARTS = 5
EM_MAX_ITER = 200
EM_TOL = 1e-8
MAX_LOG_RATIO = 700.0


class WeightVector:
    """Nonnegative per-matcher weights summing to one."""

    def __init__(self, weights):
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a nonempty vector")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ValueError(f"weights sum to {w.sum()}, not 1")
        self.weights = w

    @classmethod
    def equal(cls, n):
        return cls(np.full(n, 1.0 / n))

    def __len__(self):
        return len(self.weights)


def _check(scores, w):
    s = np.asarray(scores, dtype=float)
    if w is None:
        w = WeightVector.equal(len(s))
    if len(w) != len(s):
        raise ValueError(f"{len(s)} scores but {len(w)} weights")
    return s, w.weights


def sum_rule(scores, w=None):
    """Weighted arithmetic mean."""
    s, w = _check(scores, w)
    return float(w @ s)


def product_rule(scores, w=None, printed_form=False):
    """Weighted geometric mean, prod(s_i ** w_i).

    ``printed_form=True`` evaluates prod(w_i * s_i) ** (1 / sum(w)) instead,
    the literal typeset variant kept for comparison.
    """
    s, w = _check(scores, w)
    if np.any(s < 0):
        raise ValueError("product rule needs nonnegative scores")
    if printed_form:
        return float(np.prod(w * s) ** (1.0 / w.sum()))
    if np.any(s[w > 0] == 0):
        return 0.0
    with np.errstate(divide="ignore"):
        logs = np.where(w > 0, np.log(s), 0.0)
    return float(math.exp(w @ logs))


def _nonempty(scores):
    s = np.asarray(scores, dtype=float)
    if s.size == 0:
        raise ValueError("no scores to fuse")
    return s


def median_rule(scores):
    return float(np.median(_nonempty(scores)))


def max_rule(scores):
    return float(np.max(_nonempty(scores)))


def min_rule(scores):
    return float(np.min(_nonempty(scores)))


def dynamic_select(scores, predicted_genuine):
    """Max of the scores when the classifier says genuine, min otherwise."""
    return max_rule(scores) if predicted_genuine else min_rule(scores)


@dataclass(frozen=True)
class DensityModel:
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    log_likelihood: float = float("nan")
    bic: float = float("nan")
    converged: bool = True
    trace: list = field(default_factory=list, compare=False, repr=False)

    @property
    def n_components(self):
        return len(self.weights)

    @property
    def dim(self):
        return self.means.shape[1]

    @classmethod
    def gaussian(cls, mean, cov):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        return cls(np.ones(1), mean[None, :], cov[None, :, :])

    def component_log_densities(self, x):
        """(n_samples, n_components) array of log p_j + log N(x; mu_j, Sigma_j)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        d = self.dim
        out = np.empty((x.shape[0], self.n_components))
        for j in range(self.n_components):
            chol = np.linalg.cholesky(self.covariances[j])
            diff = np.linalg.solve(chol, (x - self.means[j]).T)
            maha = np.sum(diff ** 2, axis=0)
            logdet = 2.0 * np.sum(np.log(np.diag(chol)))
            with np.errstate(divide="ignore"):
                logw = np.log(self.weights[j])
            out[:, j] = logw - 0.5 * (d * math.log(2 * math.pi) + logdet + maha)
        return out

    def log_density(self, x):
        return _logsumexp(self.component_log_densities(x))


def _logsumexp(a):
    m = np.max(a, axis=1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return (m + np.log(np.sum(np.exp(a - m), axis=1, keepdims=True)))[:, 0]


def _em(x, n_comp, rng):
    n, d = x.shape
    idx = rng.choice(n, size=n_comp, replace=False)
    means = x[idx].copy()
    base_cov = np.cov(x, rowvar=False).reshape(d, d) + RIDGE * np.eye(d)
    covs = np.repeat(base_cov[None], n_comp, axis=0)
    weights = np.full(n_comp, 1.0 / n_comp)
    trace = []
    converged = False
    model = DensityModel(weights, means, covs)
    for _ in range(EM_MAX_ITER):
        logp = model.component_log_densities(x)
        ll_rows = _logsumexp(logp)
        ll = float(ll_rows.sum())
        trace.append(ll)
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) < EM_TOL * max(1.0, abs(ll)):
            converged = True
            break
        resp = np.exp(logp - ll_rows[:, None])
        nk = resp.sum(axis=0) + 1e-300
        weights = nk / n
        means = (resp.T @ x) / nk[:, None]
        covs = np.empty((n_comp, d, d))
        for j in range(n_comp):
            diff = x - means[j]
            covs[j] = (resp[:, j, None] * diff).T @ diff / nk[j] + RIDGE * np.eye(d)
        model = DensityModel(weights, means, covs)
    return model, trace, converged


def fit_gmm(samples, max_components, seed=0):
    """Fit Gaussian mixtures with 1..max_components components; keep the lowest BIC.

    Each component count gets several random restarts; the restart with the
    highest log-likelihood represents that count.

    Returns:
      DensityModel with ``trace`` holding the per-iteration log-likelihoods
      of the selected fit and ``converged`` False if EM hit its iteration cap.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if max_components < 1:
        raise ValueError("max_components must be >= 1")
    if x.shape[0] < 2 * max_components:
        raise ValueError("too few samples for the requested component count")
    n, d = x.shape
    rng = np.random.default_rng(seed)
    best = None
    for n_comp in range(1, max_components + 1):
        fit = None
        for _ in range(EM_RESTARTS):
            model, trace, converged = _em(x, n_comp, rng)
            if fit is None or trace[-1] > fit[1][-1]:
                fit = (model, trace, converged)
        model, trace, converged = fit
        n_params = (n_comp - 1) + n_comp * d + n_comp * d * (d + 1) / 2
        ll = float(model.log_density(x).sum())
        bic = -2.0 * ll + n_params * math.log(n)
        if best is None or bic < best.bic:
            best = DensityModel(model.weights, model.means, model.covariances,
                                ll, bic, converged, trace)
    if not best.converged:
        warnings.warn("EM reached its iteration cap; returning best-so-far fit")
    return best


def likelihood_ratio(genuine, impostor, x):
    """Genuine-to-impostor density ratio at x, capped at exp(700) with a warning."""
    if genuine.dim != impostor.dim:
        raise ValueError("density models differ in dimension")
    log_ratio = float(genuine.log_density(x)[0] - impostor.log_density(x)[0])
    if log_ratio > MAX_LOG_RATIO or math.isnan(log_ratio):
        warnings.warn("impostor density underflow; likelihood ratio capped")
        return math.exp(MAX_LOG_RATIO)
    return math.exp(log_ratio)
