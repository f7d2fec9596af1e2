"""Monte Carlo generation of correlated probe / photon-count traces."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import DomainError
from .fading import LognormalFade, sample
from .selection import DEFAULT_PACKET_DURATION, Trace

CORRELATION_MODES = ("perfect",)


def background_from_snr(mean_signal: float, snr: float) -> float:
    """Background counts per packet for a given SNR.

    SNR is (signal + background) / background, so ``N_b = mu / (SNR - 1)``.
    An infinite SNR means no background.
    """
    if not snr > 1:
        raise DomainError(f"SNR must exceed 1, got {snr}")
    if math.isinf(snr):
        return 0.0
    return mean_signal / (snr - 1)


@dataclass(frozen=True)
class ChannelSpec:
    """Ground truth of a simulated link.

    Parameters
    ----------
    mean_signal_per_packet : float
        Expected signal sifted counts per packet at unit transmissivity (mu).
    background_per_packet : float
        Expected background counts per packet (N_b).
    intrinsic_qber : float
        Error probability of a signal bit.
    fade : LognormalFade
        Transmissivity distribution; must have unit mean.
    """

    mean_signal_per_packet: float
    background_per_packet: float
    intrinsic_qber: float
    fade: LognormalFade = field(default_factory=lambda: LognormalFade(1.0, 1.0))
    correlation: str = "perfect"

    def __post_init__(self):
        if not self.mean_signal_per_packet > 0:
            raise DomainError("mean_signal_per_packet must be positive")
        if not self.background_per_packet >= 0 or math.isinf(self.background_per_packet):
            raise DomainError("background_per_packet must be finite and non-negative")
        if not 0 <= self.intrinsic_qber <= 0.5:
            raise DomainError("intrinsic_qber must lie in [0, 0.5]")
        if self.fade.mean_intensity != 1.0:
            raise DomainError("the simulated fade must be normalized to unit mean")
        if self.correlation not in CORRELATION_MODES:
            raise DomainError(f"unsupported correlation mode {self.correlation!r}")

    @classmethod
    def from_snr(cls, mu: float, snr: float, qber: float, sigma_sq: float) -> ChannelSpec:
        return cls(mu, background_from_snr(mu, snr), qber, LognormalFade(1.0, sigma_sq))

    @property
    def snr(self) -> float:
        if self.background_per_packet == 0:
            return math.inf
        return (self.mean_signal_per_packet + self.background_per_packet) / self.background_per_packet

    @property
    def expected_qber(self) -> float:
        """QBER of the unselected stream."""
        total = self.mean_signal_per_packet + self.background_per_packet
        share = self.background_per_packet / total
        return self.intrinsic_qber * (1 - share) + 0.5 * share

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fade"] = {"mean_intensity": self.fade.mean_intensity, "sigma_sq": self.fade.sigma_sq}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ChannelSpec:
        return cls(
            float(d["mean_signal_per_packet"]),
            float(d["background_per_packet"]),
            float(d["intrinsic_qber"]),
            LognormalFade(float(d["fade"]["mean_intensity"]), float(d["fade"]["sigma_sq"])),
            d.get("correlation", "perfect"),
        )


def _seed_echo(seed):
    if isinstance(seed, (int, np.integer)):
        return int(seed)
    if isinstance(seed, np.random.SeedSequence):
        return {"entropy": int(seed.entropy), "spawn_key": [int(k) for k in seed.spawn_key]}
    return None


def generate(
    spec: ChannelSpec,
    n_packets: int,
    seed,
    packet_duration: float = DEFAULT_PACKET_DURATION,
) -> Trace:
    """Simulate ``n_packets`` packets; a pure function of its arguments.

    Per packet: a fade ``eta`` is drawn and reported as the probe amplitude,
    signal counts are Poisson(mu * eta), background counts Poisson(N_b).
    Signal bits err with probability ``intrinsic_qber``, background bits
    with probability 1/2.
    """
    if n_packets < 1:
        raise DomainError("n_packets must be at least 1")
    rng = np.random.default_rng(seed)
    eta = sample(spec.fade, rng, n_packets)
    signal = rng.poisson(spec.mean_signal_per_packet * eta)
    background = rng.poisson(spec.background_per_packet, n_packets)
    errors = rng.binomial(signal, spec.intrinsic_qber) + rng.binomial(background, 0.5)
    provenance = {"source": "simulated", "seed": _seed_echo(seed), "channel": spec.to_dict()}
    return Trace(
        eta,
        signal + background,
        errors,
        packet_duration=packet_duration,
        provenance=provenance,
    )
