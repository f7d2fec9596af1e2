"""Adaptive real-time selection (ARTS) for QKD over turbulent free-space links."""

from .baselines import (
    ComparisonResult,
    StrategyResult,
    compare_strategies,
    optimize_count_threshold,
    select_by_counts,
)
from .channel import ChannelSpec, background_from_snr, generate
from .estimators import ARTSSelector, CountThresholdSelector, LognormalFadeEstimator
from .exceptions import (
    CalibrationError,
    DegenerateDistributionError,
    DomainError,
    InsufficientDataError,
    ModelInconsistencyError,
    TraceFormatError,
)
from .fading import (
    LognormalFade,
    fit_mle,
    intensity_weighted_survival,
    pdf,
    sample,
    sigma_sq_from_moments,
    survival_fraction,
)
from .prediction import (
    OptimalThreshold,
    PredictionCurve,
    PredictionInputs,
    optimize_threshold,
    predict_counts_per_packet,
    predict_curve,
    predict_packets,
    predict_qber,
    predict_rate,
    predict_sifted,
)
from .selection import (
    EmpiricalCurve,
    PacketRecord,
    SelectionOutcome,
    Trace,
    binary_entropy,
    empirical_curve,
    entropy_root,
    key_rate,
    no_selection,
    optimize_empirical_threshold,
    select,
)

__version__ = "0.1.0"
