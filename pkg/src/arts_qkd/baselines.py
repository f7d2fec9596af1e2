"""Baseline selection strategies and the strategy comparison sweep.

Besides probe thresholding (ARTS) two baselines are evaluated on the same
trace: keeping every packet, and keeping packets whose own sifted count
exceeds an integer threshold. The count threshold is optimized with full
knowledge of the errors, which is the best case for that baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelSpec, background_from_snr, generate
from .exceptions import DomainError
from .fading import LognormalFade
from .selection import (
    SelectionOutcome,
    Trace,
    _outcome,
    _rates,
    _TailSums,
    no_selection,
    optimize_empirical_threshold,
)

STRATEGIES = ("arts", "count_threshold", "none")
DEFAULT_MU_GRID = (1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0)
DEFAULT_SNR_GRID = (2.0, 5.0, 10.0, 20.0, 50.0)


def _count_reference(trace: Trace) -> int:
    return int(trace.sifted_count.sum())


def select_by_counts(trace: Trace, count_threshold: int) -> SelectionOutcome:
    """Keep packets with ``S_i > count_threshold``; rate relative to all sifted bits."""
    if count_threshold < 0:
        raise DomainError("count_threshold must be non-negative")
    keep = trace.sifted_count > count_threshold
    return _outcome(
        count_threshold,
        keep.sum(),
        trace.sifted_count[keep].sum(),
        trace.error_count[keep].sum(),
        _count_reference(trace),
    )


def optimize_count_threshold(trace: Trace) -> SelectionOutcome:
    """Exhaustive scan of ``k = 0..max(S_i)``; ties go to the smallest ``k``."""
    ks = np.arange(int(trace.sifted_count.max()) + 1)
    tails = _TailSums(trace.sifted_count, trace.sifted_count, trace.error_count)
    n_p, n_s, n_e = tails(ks)
    ref = _count_reference(trace)
    rates = _rates(n_s, n_e, ref)
    best = int(np.argmax(rates))
    return _outcome(int(ks[best]), n_p[best], n_s[best], n_e[best], ref)


@dataclass(frozen=True)
class StrategyResult:
    """Rates achieved by one strategy across the comparison grid.

    ``thresholds`` holds the optimized probe threshold (arts), the optimized
    count threshold (count_threshold), or zero (none).
    """

    strategy_name: str
    mu: tuple[float, ...]
    snr: tuple[float, ...]
    rate: tuple[float, ...]
    thresholds: tuple[float, ...]
    qber: tuple[float | None, ...]

    def __post_init__(self):
        if self.strategy_name not in STRATEGIES:
            raise DomainError(f"unknown strategy {self.strategy_name!r}")
        n = len(self.rate)
        if not all(len(x) == n for x in (self.mu, self.snr, self.thresholds, self.qber)):
            raise DomainError("one entry per sweep point is required")
        if any(not 0 <= r <= 1 for r in self.rate):
            raise DomainError("rates must lie in [0, 1]")


@dataclass(frozen=True)
class ComparisonResult:
    """Outcome of :func:`compare_strategies`, with its inputs echoed."""

    intrinsic_qber: float
    sigma_sq: float
    packets_per_point: int
    seed: int
    mu_grid: tuple[float, ...]
    snr_grid: tuple[float, ...]
    results: dict[str, StrategyResult] = field(default_factory=dict)

    def __getitem__(self, name: str) -> StrategyResult:
        return self.results[name]

    def points(self):
        """Yield ``(mu, snr, {strategy: rate})`` per grid point."""
        first = self.results["none"]
        for i, (mu, snr) in enumerate(zip(first.mu, first.snr)):
            yield mu, snr, {name: r.rate[i] for name, r in self.results.items()}


def point_seed(seed: int, i_mu: int, i_snr: int) -> np.random.SeedSequence:
    """Independent stream per grid point, fixed by its position in the grid."""
    return np.random.SeedSequence(seed, spawn_key=(i_mu, i_snr))


def evaluate_trace(trace: Trace) -> dict[str, SelectionOutcome]:
    return {
        "arts": optimize_empirical_threshold(trace),
        "count_threshold": optimize_count_threshold(trace),
        "none": no_selection(trace),
    }


def compare_strategies(
    intrinsic_qber: float = 0.03,
    sigma_sq: float = 1.0,
    mu_grid=DEFAULT_MU_GRID,
    snr_grid=DEFAULT_SNR_GRID,
    packets_per_point: int = 100_000,
    seed: int = 0,
) -> ComparisonResult:
    """Simulate one trace per (mu, SNR) point and evaluate all three strategies."""
    mu_grid = tuple(float(m) for m in mu_grid)
    snr_grid = tuple(float(s) for s in snr_grid)
    if not mu_grid or not snr_grid:
        raise DomainError("the comparison grid must be non-empty")
    if packets_per_point < 10_000:
        raise DomainError("use at least 10^4 packets per grid point")
    fade = LognormalFade(1.0, sigma_sq)
    cols = {name: {"mu": [], "snr": [], "rate": [], "thr": [], "q": []} for name in STRATEGIES}
    for i, mu in enumerate(mu_grid):
        for j, snr in enumerate(snr_grid):
            spec = ChannelSpec(mu, background_from_snr(mu, snr), intrinsic_qber, fade)
            trace = generate(spec, packets_per_point, point_seed(seed, i, j))
            for name, out in evaluate_trace(trace).items():
                c = cols[name]
                c["mu"].append(mu)
                c["snr"].append(snr)
                c["rate"].append(out.rate)
                c["thr"].append(out.threshold)
                c["q"].append(out.qber)
    results = {
        name: StrategyResult(name, tuple(c["mu"]), tuple(c["snr"]), tuple(c["rate"]),
                             tuple(c["thr"]), tuple(c["q"]))
        for name, c in cols.items()
    }
    return ComparisonResult(intrinsic_qber, sigma_sq, packets_per_point, seed,
                            mu_grid, snr_grid, results)
