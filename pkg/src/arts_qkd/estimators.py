"""scikit-learn style estimators over packet data.

Packets are passed the sklearn way: ``X`` carries the quantity a selector
thresholds on, ``y`` the quantum-channel outcome used to score a selection.

* :class:`ARTSSelector` -- ``X`` is the probe amplitude per packet and ``y``
  an ``(n, 2)`` array of ``[sifted_count, error_count]``.
* :class:`CountThresholdSelector` -- ``X`` is the sifted count per packet and
  ``y`` the error count per packet.
* :class:`LognormalFadeEstimator` -- ``X`` is a sample of probe amplitudes.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted

from . import baselines, fading, prediction
from .exceptions import DomainError
from .selection import Trace, optimize_empirical_threshold, select


def _column(X, name="X"):
    arr = check_array(X, ensure_2d=False, dtype=np.float64)
    if arr.ndim == 2:
        if arr.shape[1] != 1:
            raise DomainError(f"{name} must have exactly one feature, got {arr.shape[1]}")
        arr = arr[:, 0]
    return arr


def check_packets(X, y):
    """Validate probe amplitudes ``X`` and ``[sifted, errors]`` targets ``y``."""
    v = _column(X)
    counts = check_array(y, dtype=np.float64, ensure_2d=True)
    if counts.shape[1] != 2:
        raise DomainError("y must have two columns: sifted_count, error_count")
    check_consistent_length(v, counts)
    return v, counts[:, 0], counts[:, 1]


def _trace(v, sifted, errors) -> Trace:
    return Trace(v, sifted, errors)


class LognormalFadeEstimator(BaseEstimator):
    """Maximum-likelihood log-normal fit of probe amplitudes."""

    def fit(self, X, y=None):
        self.fade_ = fading.fit_mle(_column(X))
        self.mean_intensity_ = self.fade_.mean_intensity
        self.sigma_sq_ = self.fade_.sigma_sq
        return self

    def score_samples(self, X):
        check_is_fitted(self, "fade_")
        return np.log(fading.pdf(self.fade_, _column(X)))

    def score(self, X, y=None):
        """Mean log-likelihood of ``X``."""
        return float(np.mean(self.score_samples(X)))

    def sample(self, n_samples=1, random_state=None):
        check_is_fitted(self, "fade_")
        return fading.sample(self.fade_, random_state, n_samples)


class ARTSSelector(BaseEstimator):
    """Probe-threshold post-selection.

    Parameters
    ----------
    threshold : float or None
        Fixed probe threshold. ``None`` learns it in :meth:`fit`.
    method : {"empirical", "model"}
        How the threshold is learned. ``"empirical"`` maximizes the measured
        rate on the training packets exactly; ``"model"`` fits a log-normal to
        the probe amplitudes and maximizes the analytic rate prediction, which
        needs ``background_per_packet`` and ``intrinsic_qber``.
    background_per_packet, intrinsic_qber : float or None
        Model calibration; ignored by the empirical method.
    t_max : float or None
        Upper end of the model search range.
    n_grid : int
        Grid points for the model search.

    Attributes
    ----------
    threshold_ : float
    rate_ : float
        Measured rate on the training packets at ``threshold_``.
    qber_ : float or None
        Measured QBER on the training packets at ``threshold_``.
    outcome_ : SelectionOutcome
    fade_ : LognormalFade
        Only with ``method="model"``.
    optimum_ : OptimalThreshold
        Only with ``method="model"``.
    """

    def __init__(
        self,
        threshold=None,
        method="empirical",
        background_per_packet=None,
        intrinsic_qber=None,
        t_max=None,
        n_grid=2000,
    ):
        self.threshold = threshold
        self.method = method
        self.background_per_packet = background_per_packet
        self.intrinsic_qber = intrinsic_qber
        self.t_max = t_max
        self.n_grid = n_grid

    def fit(self, X, y):
        trace = _trace(*check_packets(X, y))
        if self.threshold is not None:
            threshold = float(self.threshold)
        elif self.method == "empirical":
            threshold = optimize_empirical_threshold(trace).threshold
        elif self.method == "model":
            if self.background_per_packet is None or self.intrinsic_qber is None:
                raise DomainError("method='model' needs background_per_packet and intrinsic_qber")
            inputs = prediction.PredictionInputs.from_trace(
                trace, self.background_per_packet, self.intrinsic_qber
            )
            self.fade_ = inputs.fade
            self.optimum_ = prediction.optimize_threshold(inputs, self.t_max, self.n_grid)
            threshold = self.optimum_.threshold
        else:
            raise DomainError(f"unknown method {self.method!r}")
        self.threshold_ = threshold
        self.outcome_ = select(trace, threshold)
        self.rate_ = self.outcome_.rate
        self.qber_ = self.outcome_.qber
        return self

    def fit_trace(self, trace: Trace):
        return self.fit(trace.probe_voltage, np.column_stack([trace.sifted_count, trace.error_count]))

    def predict(self, X):
        """Boolean mask of packets kept."""
        check_is_fitted(self, "threshold_")
        return _column(X) > self.threshold_

    def score(self, X, y):
        """Measured secret-key rate of the learned selection on ``(X, y)``."""
        check_is_fitted(self, "threshold_")
        return select(_trace(*check_packets(X, y)), self.threshold_).rate


class CountThresholdSelector(BaseEstimator):
    """Post-selection of packets whose own sifted count exceeds ``k``.

    Parameters
    ----------
    count_threshold : int or None
        Fixed ``k``; ``None`` picks the rate-maximizing ``k`` on the training
        packets by exhaustive scan.
    """

    def __init__(self, count_threshold=None):
        self.count_threshold = count_threshold

    def _trace(self, X, y):
        s = _column(X)
        e = _column(y, "y")
        check_consistent_length(s, e)
        # probe column is irrelevant here; a constant keeps Trace invariants
        return Trace(np.ones_like(s), s, e)

    def fit(self, X, y):
        trace = self._trace(X, y)
        if self.count_threshold is None:
            out = baselines.optimize_count_threshold(trace)
        else:
            out = baselines.select_by_counts(trace, int(self.count_threshold))
        self.count_threshold_ = int(out.threshold)
        self.outcome_ = out
        self.rate_ = out.rate
        self.qber_ = out.qber
        return self

    def predict(self, X):
        check_is_fitted(self, "count_threshold_")
        return _column(X) > self.count_threshold_

    def score(self, X, y):
        check_is_fitted(self, "count_threshold_")
        return baselines.select_by_counts(self._trace(X, y), self.count_threshold_).rate
