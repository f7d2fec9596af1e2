"""Analytic prediction of post-selected statistics under perfect correlation.

Assumes that signal detections scale linearly with the instantaneous fade seen
by the probe, and that a constant background of ``N_b`` counts per packet adds
errors at rate one half. With calibration totals ``N_P(0)`` and ``N_S(0)``:

    N_P(T) = N_P(0) * P[V > T]
    N_S(T) = N_b N_P(T) + (N_S(0) - N_b N_P(0)) * E[V/<V> ; V > T]
    Q(T)   = <Q> (1 - N_b / s(T)) + N_b / (2 s(T)),   s(T) = N_S(T) / N_P(T)
    R(T)   = N_S(T) / N_S(0) * max(0, 1 - 2 h2(Q(T)))
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .exceptions import CalibrationError, DegenerateDistributionError, DomainError, ModelInconsistencyError
from .fading import LognormalFade, fit_mle, intensity_weighted_survival, survival_fraction
from .selection import Trace, binary_entropy

# relative slack when comparing s(T) against the background floor
_FLOOR_RTOL = 1e-9


@dataclass(frozen=True)
class PredictionInputs:
    """Calibration of the analytic model.

    Parameters
    ----------
    fade : LognormalFade
        Probe amplitude distribution.
    background_per_packet : float
        Mean background counts per packet, ``N_b``.
    intrinsic_qber : float
        QBER of the signal photons alone, ``<Q>``.
    sifted_total : float
        ``N_S(0)``, sifted bits without selection.
    packet_total : float
        ``N_P(0)``, packets without selection.
    """

    fade: LognormalFade
    background_per_packet: float
    intrinsic_qber: float
    sifted_total: float
    packet_total: float

    def __post_init__(self):
        if not self.background_per_packet >= 0:
            raise DomainError("background_per_packet must be non-negative")
        if not 0 <= self.intrinsic_qber <= 0.5:
            raise DomainError("intrinsic_qber must lie in [0, 0.5]")
        if not self.packet_total > 0:
            raise DomainError("packet_total must be positive")
        if not self.sifted_total > 0:
            raise DomainError("sifted_total must be positive")
        floor = self.background_per_packet * self.packet_total
        if self.sifted_total < floor * (1 - _FLOOR_RTOL):
            raise CalibrationError(
                f"N_S(0) = {self.sifted_total} is below the background total "
                f"N_b * N_P(0) = {floor}"
            )

    @property
    def signal_total(self) -> float:
        return self.sifted_total - self.background_per_packet * self.packet_total

    @property
    def counts_per_packet(self) -> float:
        return self.sifted_total / self.packet_total

    @classmethod
    def from_reference_qber(
        cls,
        fade: LognormalFade,
        background_per_packet: float,
        intrinsic_qber: float,
        reference_qber: float,
        sifted_total: float,
    ) -> PredictionInputs:
        """Recover ``N_P(0)`` from the unselected QBER by inverting the QBER model.

        ``s(0) = N_b (1/2 - <Q>) / (Q(0) - <Q>)`` and ``N_P(0) = N_S(0) / s(0)``.
        """
        if not intrinsic_qber < reference_qber <= 0.5:
            raise DomainError("reference_qber must exceed intrinsic_qber and be at most 0.5")
        s0 = background_per_packet * (0.5 - intrinsic_qber) / (reference_qber - intrinsic_qber)
        return cls(fade, background_per_packet, intrinsic_qber, sifted_total, sifted_total / s0)

    @classmethod
    def from_trace(
        cls, trace: Trace, background_per_packet: float, intrinsic_qber: float
    ) -> PredictionInputs:
        """Fit the fade by MLE on the positive probe values and measure the totals."""
        keep = trace.probe_voltage > 0
        return cls(
            fit_mle(trace.probe_voltage[keep]),
            background_per_packet,
            intrinsic_qber,
            float(trace.sifted_count[keep].sum()),
            float(keep.sum()),
        )


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def predict_packets(inputs: PredictionInputs, threshold):
    """Expected packets above ``threshold``."""
    return _scalar(inputs.packet_total * np.asarray(survival_fraction(inputs.fade, threshold)))


def predict_sifted(inputs: PredictionInputs, threshold):
    """Expected sifted bits in packets above ``threshold``."""
    n_p = np.asarray(predict_packets(inputs, threshold))
    signal = inputs.signal_total * np.asarray(intensity_weighted_survival(inputs.fade, threshold))
    out = inputs.background_per_packet * n_p + signal
    # exact at T = 0 regardless of rounding in the background split
    out = np.where(np.asarray(threshold) == 0, inputs.sifted_total, out)
    return _scalar(out)


def predict_counts_per_packet(inputs: PredictionInputs, threshold):
    """Expected sifted bits per surviving packet; NaN where no packet survives."""
    n_p = np.asarray(predict_packets(inputs, threshold), dtype=float)
    n_s = np.asarray(predict_sifted(inputs, threshold), dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(n_p > 0, n_s / n_p, np.nan)
    return _scalar(s)


def predict_qber(inputs: PredictionInputs, threshold):
    """Expected QBER of the surviving bits; NaN where no packet survives.

    Raises
    ------
    ModelInconsistencyError
        If the predicted counts per packet drop below the background floor.
    """
    s = np.asarray(predict_counts_per_packet(inputs, threshold), dtype=float)
    n_b = inputs.background_per_packet
    q0 = inputs.intrinsic_qber
    if n_b == 0:
        return _scalar(np.full(s.shape, q0))
    defined = ~np.isnan(s)
    if np.any(s[defined] < n_b * (1 - _FLOOR_RTOL)):
        raise ModelInconsistencyError(
            "predicted counts per packet fall below the background level N_b"
        )
    with np.errstate(invalid="ignore"):
        bg_share = np.minimum(n_b / s, 1.0)
    return _scalar(q0 * (1 - bg_share) + 0.5 * bg_share)


def predict_rate(inputs: PredictionInputs, threshold):
    """Expected asymptotic secret fraction, relative to ``N_S(0)``."""
    frac = np.asarray(predict_sifted(inputs, threshold), dtype=float) / inputs.sifted_total
    q = np.asarray(predict_qber(inputs, threshold), dtype=float)
    rate = np.zeros(q.shape)
    ok = ~np.isnan(q)
    secret = 1 - 2 * binary_entropy(np.clip(q[ok], 0, 0.5))
    rate[ok] = np.maximum(0.0, np.clip(frac[ok], 0, 1) * secret)
    return _scalar(rate)


@dataclass(frozen=True)
class PredictionCurve:
    """Model sweep over a strictly increasing threshold grid."""

    thresholds: np.ndarray
    packets: np.ndarray
    sifted: np.ndarray
    counts_per_packet: np.ndarray
    qber: np.ndarray
    rate: np.ndarray
    inputs: PredictionInputs

    def __len__(self):
        return self.thresholds.size


def predict_curve(inputs: PredictionInputs, thresholds) -> PredictionCurve:
    t = np.atleast_1d(np.asarray(thresholds, dtype=float))
    if t.ndim != 1 or t.size == 0:
        raise DomainError("thresholds must be a non-empty 1-d sequence")
    if np.any(np.diff(t) <= 0):
        raise DomainError("thresholds must be strictly increasing")
    return PredictionCurve(
        thresholds=t,
        packets=np.atleast_1d(predict_packets(inputs, t)),
        sifted=np.atleast_1d(predict_sifted(inputs, t)),
        counts_per_packet=np.atleast_1d(predict_counts_per_packet(inputs, t)),
        qber=np.atleast_1d(predict_qber(inputs, t)),
        rate=np.atleast_1d(predict_rate(inputs, t)),
        inputs=inputs,
    )


# --- optimal threshold -------------------------------------------------------


@dataclass(frozen=True)
class OptimalThreshold:
    threshold: float
    rate: float
    qber: float
    no_key: bool


def grid_maximize(func, grid, xatol: float = 1e-10) -> tuple[float, float]:
    """Global maximum of ``func`` over ``grid``, refined inside the winning cell.

    ``func`` must accept an array. The refinement is a bounded scalar search
    between the neighbours of the best grid point and is kept only if it
    strictly improves on the grid value; ties on the grid go to the smallest
    abscissa.
    """
    x = np.asarray(grid, dtype=float)
    y = np.asarray(func(x), dtype=float)
    i = int(np.argmax(y))
    best_x, best_y = float(x[i]), float(y[i])
    lo, hi = x[max(i - 1, 0)], x[min(i + 1, x.size - 1)]
    if hi > lo and best_y > 0:
        res = minimize_scalar(
            lambda t: -float(func(np.asarray(t))),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": xatol * max(1.0, abs(hi))},
        )
        if res.success and -res.fun > best_y:
            best_x, best_y = float(res.x), float(-res.fun)
    return best_x, best_y


def threshold_grid(fade: LognormalFade, t_max: float, n_points: int = 2000) -> np.ndarray:
    """Zero, a coarse linear segment below the 1st percentile, and a log grid above."""
    low = fade.quantile(0.01)
    if t_max <= low:
        return np.linspace(0.0, t_max, n_points)
    head = np.linspace(0.0, low, 21)[:-1]
    tail = np.geomspace(low, t_max, n_points)
    return np.concatenate([head, tail])


def optimize_threshold(
    inputs: PredictionInputs, t_max: float | None = None, n_points: int = 2000
) -> OptimalThreshold:
    """Threshold maximizing the predicted rate over ``[0, t_max]``.

    ``t_max`` defaults to the fade's 99.99th percentile and must not be below
    its 99.9th. When no threshold gives a positive rate the result is
    ``threshold = 0, rate = 0`` with ``no_key`` set.
    """
    if inputs.fade.sigma_sq == 0:
        raise DegenerateDistributionError("threshold optimization needs sigma_sq > 0")
    if n_points < 1000:
        raise DomainError("use at least 1000 grid points")
    floor = inputs.fade.quantile(0.999)
    if t_max is None:
        t_max = inputs.fade.quantile(0.9999)
    elif t_max < floor * (1 - 1e-12):
        raise DomainError(f"t_max = {t_max} is below the fade's 99.9th percentile {floor}")
    grid = threshold_grid(inputs.fade, t_max, n_points)
    t_best, r_best = grid_maximize(lambda t: predict_rate(inputs, t), grid)
    if not r_best > 0:
        return OptimalThreshold(0.0, 0.0, float(predict_qber(inputs, 0.0)), True)
    return OptimalThreshold(t_best, r_best, float(predict_qber(inputs, t_best)), False)


def positive_rate_window(curve: PredictionCurve) -> tuple[float, float] | None:
    """First and last grid thresholds with positive predicted rate, if any."""
    pos = np.flatnonzero(curve.rate > 0)
    if pos.size == 0:
        return None
    return float(curve.thresholds[pos[0]]), float(curve.thresholds[pos[-1]])


__all__ = [
    "PredictionInputs",
    "PredictionCurve",
    "OptimalThreshold",
    "predict_packets",
    "predict_sifted",
    "predict_counts_per_packet",
    "predict_qber",
    "predict_rate",
    "predict_curve",
    "grid_maximize",
    "threshold_grid",
    "optimize_threshold",
    "positive_rate_window",
]
