"""Score normalization: min-max, decimal scaling, z-score, median/MAD,
double sigmoid, and tanh (Hampel) estimators.

All normalizers accept scalars or numpy arrays.
"""

import math
from dataclasses import dataclass

import numpy as np

MAD_TO_SIGMA = 1.4826
HAMPEL_ITERATIONS = 10


class DegenerateStatisticsError(ValueError):
    """Raised when a normalizer's scale parameter is zero or undefined."""


@dataclass(frozen=True)
class HampelParams:
    a: float
    b: float
    c: float
    alpha: float = 0.01

    def __post_init__(self):
        if not (0 <= self.a <= self.b <= self.c):
            raise ValueError(f"need 0 <= a <= b <= c, got ({self.a}, {self.b}, {self.c})")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")


@dataclass(frozen=True)
class SigmoidParams:
    t: float
    r1: float
    r2: float

    def __post_init__(self):
        if self.r1 <= 0 or self.r2 <= 0:
            raise ValueError("r1 and r2 must be positive")


@dataclass(frozen=True)
class NormStats:
    min: float
    max: float
    mean: float
    std: float
    median: float
    mad: float
    hampel_mean: float
    hampel_std: float
    source: str = "estimated"

    def __post_init__(self):
        if self.max < self.min:
            raise ValueError("max < min")
        if self.std < 0 or self.mad < 0 or self.hampel_std < 0:
            raise ValueError("scale statistics must be nonnegative")

    @classmethod
    def given(cls, **fields):
        """Statistics supplied by the caller rather than estimated; unset fields are neutral."""
        base = dict(min=0.0, max=1.0, mean=0.0, std=1.0, median=0.0, mad=1.0,
                    hampel_mean=0.0, hampel_std=1.0)
        base.update(fields)
        return cls(source="given", **base)


def hampel_psi(u, p):
    """Hampel's three-part redescending influence function (odd in ``u``)."""
    u = np.asarray(u, dtype=float)
    au = np.abs(u)
    sgn = np.sign(u)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        taper = p.a * sgn * (p.c - au) / (p.c - p.b) if p.c > p.b else np.zeros_like(u)
    out = np.where(au < p.a, u,
                   np.where(au < p.b, p.a * sgn,
                            np.where(au < p.c, taper, 0.0)))
    return out if out.ndim else float(out)


def default_hampel_params(scores, alpha=0.01):
    """a, b, c at the 70th/85th/95th percentiles of standardized absolute deviations."""
    s = np.asarray(scores, dtype=float)
    med = np.median(s)
    scale = _initial_scale(s, med)
    u = np.abs(s - med) / scale
    a, b, c = np.percentile(u, [70, 85, 95])
    return HampelParams(float(a), float(b), float(c), alpha)


def _initial_scale(s, med):
    scale = MAD_TO_SIGMA * np.median(np.abs(s - med))
    if scale == 0:
        scale = np.std(s, ddof=1)
    return scale


def hampel_estimates(scores, p=None):
    """Robust location and scale under ``hampel_psi``.

    The location is an M-estimate: starting from the median, a fixed number
    of passes reweight by psi(u)/u with the scale held at 1.4826*MAD.
    Re-estimating the scale from the same truncated weights would shrink it
    on every pass, so the scale is 1.4826*MAD about the final location.
    """
    s = np.asarray(scores, dtype=float)
    if p is None:
        p = default_hampel_params(s)
    mu = float(np.median(s))
    sigma = float(_initial_scale(s, mu))
    if sigma == 0:
        raise DegenerateStatisticsError("zero spread")
    for _ in range(HAMPEL_ITERATIONS):
        u = (s - mu) / sigma
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(u == 0, 1.0, hampel_psi(u, p) / u)
        total = w.sum()
        if total <= 0:
            break
        mu = float(w @ s / total)
    scale = float(_initial_scale(s, mu))
    return mu, scale if scale > 0 else sigma


def estimate_stats(scores, hampel=None):
    """Estimate every normalization statistic from a score sample.

    The standard deviation uses the N-1 divisor.

    Raises:
      DegenerateStatisticsError: fewer than two scores, or zero variance.
    """
    s = np.asarray(scores, dtype=float).ravel()
    s = s[~np.isnan(s)]
    if s.size < 2:
        raise DegenerateStatisticsError("need at least 2 scores")
    std = float(np.std(s, ddof=1))
    if std == 0:
        raise DegenerateStatisticsError("all scores are equal")
    med = float(np.median(s))
    mad = float(np.median(np.abs(s - med)))
    hmu, hsigma = hampel_estimates(s, hampel)
    return NormStats(
        min=float(s.min()), max=float(s.max()), mean=float(s.mean()), std=std,
        median=med, mad=mad, hampel_mean=hmu, hampel_std=hsigma,
    )


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def minmax(s, stats):
    """Map [min, max] onto [0, 1]; out-of-range scores are not clamped."""
    if stats.max <= stats.min:
        raise DegenerateStatisticsError("max == min")
    return _scalar((np.asarray(s, dtype=float) - stats.min) / (stats.max - stats.min))


def decimal_scale(s, stats):
    """Divide by 10**n, n = ceil(log10(max))."""
    if stats.max <= 0:
        raise ValueError("decimal scaling needs a positive maximum")
    n = math.ceil(math.log10(stats.max))
    return _scalar(np.asarray(s, dtype=float) / 10.0 ** n)


def zscore(s, stats):
    if stats.std <= 0:
        raise DegenerateStatisticsError("zero standard deviation")
    return _scalar((np.asarray(s, dtype=float) - stats.mean) / stats.std)


def median_mad(s, stats):
    if stats.mad <= 0:
        raise DegenerateStatisticsError("zero MAD")
    return _scalar((np.asarray(s, dtype=float) - stats.median) / stats.mad)


def double_sigmoid(s, p):
    """Logistic with separate half-widths left (r1) and right (r2) of the operating point t."""
    s = np.asarray(s, dtype=float)
    r = np.where(s < p.t, p.r1, p.r2)
    with np.errstate(over="ignore"):
        out = 1.0 / (1.0 + np.exp(-2.0 * (s - p.t) / r))
    return _scalar(out)


def tanh_norm(s, stats, p):
    if stats.hampel_std <= 0:
        raise DegenerateStatisticsError("zero Hampel scale")
    u = (np.asarray(s, dtype=float) - stats.hampel_mean) / stats.hampel_std
    return _scalar(0.5 * (np.tanh(p.alpha * u) + 1.0))
