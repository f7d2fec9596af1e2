"""Empirical probe-threshold selection over packet traces.

A packet ``i`` survives threshold ``T`` when its probe amplitude satisfies the
strict inequality ``V_i > T``. Statistics over the surviving packets are the
packet count ``N_P``, sifted bits ``N_S``, errors ``E``, the mean sifted bits
per packet ``s = N_S / N_P``, the QBER ``Q = E / N_S`` and the asymptotic BB84
secret fraction ``R = (N_S / N_S(0)) * (1 - 2 h2(Q))`` clamped at zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np
from scipy.optimize import bisect
from scipy.special import entr

from .exceptions import DomainError

DEFAULT_PACKET_DURATION = 1e-3


class PacketRecord(NamedTuple):
    index: int
    probe_voltage: float
    sifted_count: int
    error_count: int


class Trace:
    """An ordered acquisition of packets, stored column-wise.

    Columns are read-only numpy arrays; iterating yields :class:`PacketRecord`.

    Parameters
    ----------
    probe_voltage, sifted_count, error_count : array_like
        One entry per packet.
    index : array_like, optional
        Strictly increasing packet indices. Defaults to ``0..n-1``.
    packet_duration : float
        Seconds per packet.
    provenance : dict, optional
        Free-form description of where the trace came from (channel
        parameters, seed). Echoed into trace files. ``source`` defaults to
        ``"experimental"``.
    """

    def __init__(
        self,
        probe_voltage,
        sifted_count,
        error_count,
        index=None,
        packet_duration: float = DEFAULT_PACKET_DURATION,
        provenance: dict | None = None,
    ):
        v = np.array(probe_voltage, dtype=float).ravel()
        s = _as_counts(sifted_count, "sifted_count")
        e = _as_counts(error_count, "error_count")
        n = v.size
        if n < 1:
            raise DomainError("a trace needs at least one packet")
        if s.size != n or e.size != n:
            raise DomainError("column lengths differ")
        idx = np.arange(n, dtype=np.int64) if index is None else _as_counts(index, "index")
        if idx.size != n:
            raise DomainError("column lengths differ")
        if n > 1 and np.any(np.diff(idx) <= 0):
            raise DomainError("packet indices must be strictly increasing")
        if np.any(~(v >= 0)) or not np.all(np.isfinite(v)):
            raise DomainError("probe voltages must be finite and non-negative")
        if np.any(e > s):
            bad = int(np.argmax(e > s))
            raise DomainError(f"packet {int(idx[bad])}: error_count exceeds sifted_count")
        if not packet_duration > 0:
            raise DomainError("packet_duration must be positive")
        for arr in (v, s, e, idx):
            arr.setflags(write=False)
        self.index = idx
        self.probe_voltage = v
        self.sifted_count = s
        self.error_count = e
        self.packet_duration = float(packet_duration)
        self.provenance = {"source": "experimental", **(provenance or {})}

    @classmethod
    def from_records(cls, records, packet_duration=DEFAULT_PACKET_DURATION, provenance=None):
        records = list(records)
        if not records:
            raise DomainError("a trace needs at least one packet")
        idx, v, s, e = zip(*records)
        return cls(v, s, e, index=idx, packet_duration=packet_duration, provenance=provenance)

    @property
    def packets(self) -> list[PacketRecord]:
        return list(self)

    def __len__(self) -> int:
        return self.probe_voltage.size

    def __iter__(self) -> Iterator[PacketRecord]:
        for i, v, s, e in zip(
            self.index.tolist(),
            self.probe_voltage.tolist(),
            self.sifted_count.tolist(),
            self.error_count.tolist(),
        ):
            yield PacketRecord(i, v, s, e)

    def __eq__(self, other):
        if not isinstance(other, Trace):
            return NotImplemented
        return (
            self.packet_duration == other.packet_duration
            and self.provenance == other.provenance
            and np.array_equal(self.index, other.index)
            and np.array_equal(self.probe_voltage, other.probe_voltage)
            and np.array_equal(self.sifted_count, other.sifted_count)
            and np.array_equal(self.error_count, other.error_count)
        )

    def __repr__(self):
        return f"Trace(n_packets={len(self)}, packet_duration={self.packet_duration})"


def _as_counts(values, name):
    arr = np.asarray(values)
    if arr.dtype.kind == "f":
        if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
            raise DomainError(f"{name} must hold integers")
    elif arr.dtype.kind not in "iub":
        raise DomainError(f"{name} must hold integers")
    arr = np.array(arr, dtype=np.int64).ravel()
    if np.any(arr < 0):
        raise DomainError(f"{name} must be non-negative")
    return arr


@dataclass(frozen=True)
class SelectionOutcome:
    """Statistics of the packets kept by a selection rule.

    ``qber`` is ``None`` when no sifted bits survive.
    """

    threshold: float
    selected_count: int
    sifted_total: int
    error_total: int
    counts_per_packet: float
    qber: float | None
    rate: float

    @property
    def n_packets(self) -> int:
        return self.selected_count

    @property
    def n_sifted(self) -> int:
        return self.sifted_total


# --- secret fraction -------------------------------------------------------


def binary_entropy(q):
    """Binary Shannon entropy in bits, with ``h2(0) = h2(1) = 0``."""
    arr = np.asarray(q, dtype=float)
    if np.any(~((arr >= 0) & (arr <= 1))):
        raise DomainError("binary entropy is defined on [0, 1]")
    out = (entr(arr) + entr(1 - arr)) / math.log(2)
    return float(out) if out.ndim == 0 else out


def entropy_root(xtol: float = 1e-12) -> float:
    """QBER at which ``1 - 2 h2(q)`` vanishes on (0, 1/2), found by bisection."""
    return bisect(lambda q: 1 - 2 * binary_entropy(q), 1e-6, 0.5 - 1e-9, xtol=xtol)


def key_rate(n_sifted_fraction: float, qber: float) -> float:
    """Asymptotic BB84 secret fraction of the transmitted sifted bits.

    ``max(0, fraction * (1 - 2 h2(qber)))``.
    """
    if not 0 <= n_sifted_fraction <= 1:
        raise DomainError(f"sifted fraction must lie in [0, 1], got {n_sifted_fraction}")
    if not 0 <= qber <= 0.5:
        raise DomainError(f"qber must lie in [0, 0.5], got {qber}")
    return max(0.0, n_sifted_fraction * (1 - 2 * binary_entropy(qber)))


def _rates(sifted, errors, reference):
    """Vectorized clamped rate; zero for empty selections and QBER above 1/2."""
    sifted, errors = np.broadcast_arrays(np.asarray(sifted, float), np.asarray(errors, float))
    shape = sifted.shape
    sifted, errors = sifted.ravel(), errors.ravel()
    out = np.zeros(sifted.size)
    if reference > 0:
        ok = sifted > 0
        q = np.zeros_like(out)
        q[ok] = errors[ok] / sifted[ok]
        ok &= q <= 0.5
        secret = 1 - 2 * np.atleast_1d(binary_entropy(np.clip(q, 0, 1)))
        out[ok] = np.maximum(0.0, sifted[ok] / reference * secret[ok])
    return out.reshape(shape)


# --- selection over a trace --------------------------------------------------


def _outcome(threshold, n_p, n_s, n_e, reference) -> SelectionOutcome:
    n_p, n_s, n_e = int(n_p), int(n_s), int(n_e)
    rate = float(_rates(n_s, n_e, reference))
    return SelectionOutcome(
        threshold=float(threshold),
        selected_count=n_p,
        sifted_total=n_s,
        error_total=n_e,
        counts_per_packet=n_s / n_p if n_p else 0.0,
        qber=n_e / n_s if n_s else None,
        rate=rate,
    )


class _TailSums:
    """Sums of packet columns over ``{i : key_i > t}`` for many ``t`` at once."""

    def __init__(self, keys, sifted, errors):
        order = np.argsort(keys, kind="stable")
        self.keys = np.asarray(keys)[order]
        zero = np.zeros(1, dtype=np.int64)
        # suffix[j] = sum over sorted positions >= j
        self.s_suffix = np.concatenate([np.cumsum(sifted[order][::-1])[::-1], zero])
        self.e_suffix = np.concatenate([np.cumsum(errors[order][::-1])[::-1], zero])

    def __call__(self, thresholds):
        start = np.searchsorted(self.keys, thresholds, side="right")
        return self.keys.size - start, self.s_suffix[start], self.e_suffix[start]


def reference_sifted(trace: Trace) -> int:
    """``N_S(0)``: sifted bits in packets with a strictly positive probe."""
    return int(trace.sifted_count[trace.probe_voltage > 0].sum())


def select(trace: Trace, threshold: float) -> SelectionOutcome:
    """Keep packets whose probe amplitude exceeds ``threshold``."""
    if not threshold >= 0:
        raise DomainError(f"threshold must be non-negative, got {threshold}")
    keep = trace.probe_voltage > threshold
    return _outcome(
        threshold,
        keep.sum(),
        trace.sifted_count[keep].sum(),
        trace.error_count[keep].sum(),
        reference_sifted(trace),
    )


def empirical_curve(trace: Trace, thresholds) -> list[SelectionOutcome]:
    """One :func:`select` outcome per threshold (thresholds ascending)."""
    t = np.asarray(thresholds, dtype=float).ravel()
    if np.any(t < 0):
        raise DomainError("thresholds must be non-negative")
    if t.size > 1 and np.any(np.diff(t) < 0):
        raise DomainError("thresholds must be sorted ascending")
    tails = _TailSums(trace.probe_voltage, trace.sifted_count, trace.error_count)
    n_p, n_s, n_e = tails(t)
    ref = reference_sifted(trace)
    return [_outcome(*row, ref) for row in zip(t, n_p, n_s, n_e)]


def optimize_empirical_threshold(trace: Trace) -> SelectionOutcome:
    """Exhaustively find the probe threshold maximizing the measured rate.

    Every distinct selection ``{V_i > T}`` is realized by ``T = 0`` or by ``T``
    equal to one of the probe values, so scanning those is exact. Ties go to
    the smallest threshold.
    """
    candidates = np.concatenate([[0.0], np.unique(trace.probe_voltage)])
    candidates = np.unique(candidates)
    tails = _TailSums(trace.probe_voltage, trace.sifted_count, trace.error_count)
    n_p, n_s, n_e = tails(candidates)
    ref = reference_sifted(trace)
    rates = _rates(n_s, n_e, ref)
    best = int(np.argmax(rates))
    return _outcome(candidates[best], n_p[best], n_s[best], n_e[best], ref)


def no_selection(trace: Trace) -> SelectionOutcome:
    """Statistics of the whole trace, every packet kept."""
    n_s = int(trace.sifted_count.sum())
    return _outcome(0.0, len(trace), n_s, trace.error_count.sum(), n_s)


@dataclass(frozen=True)
class EmpiricalCurve:
    """Per-threshold selection outcomes of one trace, for serialization."""

    thresholds: tuple[float, ...]
    outcomes: tuple[SelectionOutcome, ...]
    trace_provenance: dict = field(default_factory=dict)

    @classmethod
    def from_trace(cls, trace: Trace, thresholds) -> EmpiricalCurve:
        t = tuple(float(x) for x in np.asarray(thresholds, dtype=float).ravel())
        return cls(t, tuple(empirical_curve(trace, t)), dict(trace.provenance))
