"""Log-normal fading of the optical channel.

The fade is parameterized by its mean intensity and the log-variance
``sigma_sq``, with log-location ``ln(mean_intensity) - sigma_sq / 2`` so that
the first moment equals ``mean_intensity`` exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, ndtri

from .exceptions import DegenerateDistributionError, DomainError, InsufficientDataError

# log-variances at or below this are sampled as a constant channel
DEGENERATE_SIGMA_SQ = 1e-12


@dataclass(frozen=True)
class LognormalFade:
    """Statistical parameters of a log-normal fading channel.

    Parameters
    ----------
    mean_intensity : float
        First moment of the fade, in the units of the probe amplitude.
    sigma_sq : float
        Variance of ``ln V``. Zero describes a constant (turbulence-free) channel.
    """

    mean_intensity: float
    sigma_sq: float

    def __post_init__(self):
        if not self.mean_intensity > 0 or not math.isfinite(self.mean_intensity):
            raise DomainError(f"mean_intensity must be positive and finite, got {self.mean_intensity}")
        if not self.sigma_sq >= 0 or not math.isfinite(self.sigma_sq):
            raise DomainError(f"sigma_sq must be non-negative and finite, got {self.sigma_sq}")

    @property
    def log_location(self) -> float:
        return math.log(self.mean_intensity) - self.sigma_sq / 2

    @property
    def variance(self) -> float:
        return self.mean_intensity**2 * math.expm1(self.sigma_sq)

    @property
    def median(self) -> float:
        return math.exp(self.log_location)

    def quantile(self, p: float) -> float:
        """Inverse CDF of the fade at probability ``p``."""
        if self.sigma_sq == 0:
            return self.mean_intensity
        return math.exp(self.log_location + math.sqrt(self.sigma_sq) * float(ndtri(p)))

    @classmethod
    def from_moments(cls, mean: float, variance: float) -> LognormalFade:
        return cls(mean, sigma_sq_from_moments(mean, variance))


def sigma_sq_from_moments(mean: float, variance: float) -> float:
    """Log-variance of the log-normal with the given mean and variance."""
    if not mean > 0:
        raise DomainError(f"mean must be positive, got {mean}")
    if not variance >= 0:
        raise DomainError(f"variance must be non-negative, got {variance}")
    return math.log1p(variance / mean**2)


def pdf(fade: LognormalFade, v):
    """Probability density of the fade at ``v`` (scalar or array)."""
    if fade.sigma_sq == 0:
        raise DegenerateDistributionError("a fade with sigma_sq = 0 has no density")
    arr = np.asarray(v, dtype=float)
    if np.any(arr <= 0):
        raise DomainError("pdf is defined for v > 0 only")
    sigma = math.sqrt(fade.sigma_sq)
    z = np.log(arr / fade.mean_intensity) + fade.sigma_sq / 2
    out = np.exp(-(z**2) / (2 * fade.sigma_sq)) / (math.sqrt(2 * math.pi) * sigma * arr)
    return float(out) if out.ndim == 0 else out


def _upper_tail(fade: LognormalFade, threshold, shift: float):
    t = np.asarray(threshold, dtype=float)
    if np.any(t < 0) or np.any(np.isnan(t)):
        raise DomainError("threshold must be non-negative")
    if fade.sigma_sq == 0:
        # constant channel: every sample equals the mean, selection is V > T
        out = np.where(t < fade.mean_intensity, 1.0, 0.0)
    else:
        out = np.ones_like(t)
        pos = t > 0
        z = (np.log(t[pos] / fade.mean_intensity) + shift * fade.sigma_sq / 2) / math.sqrt(
            2 * fade.sigma_sq
        )
        out[pos] = 0.5 * erfc(z)
    return float(out) if out.ndim == 0 else out


def survival_fraction(fade: LognormalFade, threshold):
    """Probability that a fade sample exceeds ``threshold``."""
    return _upper_tail(fade, threshold, +1.0)


def intensity_weighted_survival(fade: LognormalFade, threshold):
    """Fraction of the total intensity carried by samples above ``threshold``.

    Equal to ``E[V/<V> ; V > T]``. Under a linear detector this is the share
    of signal detections that survive a probe threshold ``T``.
    """
    return _upper_tail(fade, threshold, -1.0)


def sample(fade: LognormalFade, seed, n: int) -> np.ndarray:
    """Draw ``n`` i.i.d. fades; deterministic for a fixed ``seed``.

    ``seed`` may be anything accepted by :func:`numpy.random.default_rng`,
    including an existing ``Generator``.
    """
    if n < 1:
        raise DomainError(f"n must be at least 1, got {n}")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(n)
    if fade.sigma_sq <= DEGENERATE_SIGMA_SQ:
        return np.full(n, float(fade.mean_intensity))
    return np.exp(fade.log_location + math.sqrt(fade.sigma_sq) * z)


def fit_mle(samples) -> LognormalFade:
    """Maximum-likelihood log-normal fit.

    Uses the population (1/n) variance of the logs, which is the exact MLE.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise InsufficientDataError(f"need at least 2 samples, got {x.size}")
    if np.any(~(x > 0)):
        raise DomainError("all samples must be positive")
    if np.all(x == x[0]):
        return LognormalFade(float(x[0]), 0.0)
    logs = np.log(x)
    mu = float(logs.mean())
    sigma_sq = float(np.mean((logs - mu) ** 2))
    return LognormalFade(math.exp(mu + sigma_sq / 2), sigma_sq)
