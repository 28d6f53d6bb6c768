"""
Shared waveform types, PRBS generation and NRZ burst framing.

Amplitudes are unitless and normalised to a transmit mark level of 1.0.
Times are in picoseconds throughout; sample rates in Hz.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError

SPEED_OF_LIGHT_M_PER_S = 299_792_458.0
DEFAULT_GROUP_INDEX = 1.4682  # SMF-28 class fibre near 1550 nm


@dataclass(frozen=True)
class PhysicalConstants:
    """Latency <-> length conversion constants.

    Only latency is observable in a reflectometry trace; the group index is
    needed solely to translate between fibre length and delay.
    """

    speed_of_light_m_per_s: float = SPEED_OF_LIGHT_M_PER_S
    default_group_index: float = DEFAULT_GROUP_INDEX

    def one_way_latency_ps(self, length_m: float, group_index: float | None = None) -> float:
        n = self.default_group_index if group_index is None else group_index
        return length_m * n / self.speed_of_light_m_per_s * 1e12

    def round_trip_latency_ps(self, length_m: float, group_index: float | None = None) -> float:
        return 2.0 * self.one_way_latency_ps(length_m, group_index)

    def length_from_round_trip_m(self, rtt_ps: float, group_index: float | None = None) -> float:
        n = self.default_group_index if group_index is None else group_index
        return 0.5 * rtt_ps * 1e-12 * self.speed_of_light_m_per_s / n


@dataclass(frozen=True, eq=False)
class SampledWaveform:
    """Uniformly sampled real-valued trace.

    Parameters
    ----------
    sample_rate_hz : float
        Samples per second, must be positive.
    start_time_ps : float
        Time of sample 0 relative to the burst trigger.
    samples : array_like
        Sample amplitudes. Stored as a read-only float64 array.
    """

    sample_rate_hz: float
    start_time_ps: float
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not self.sample_rate_hz > 0:
            raise InvalidArgumentError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        arr = np.array(self.samples, dtype=np.float64, copy=True).reshape(-1)
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))
        object.__setattr__(self, "start_time_ps", float(self.start_time_ps))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def sample_interval_ps(self) -> float:
        return 1e12 / self.sample_rate_hz

    @property
    def duration_ps(self) -> float:
        return len(self) * self.sample_interval_ps

    def times_ps(self) -> np.ndarray:
        return self.start_time_ps + np.arange(len(self)) * self.sample_interval_ps

    def time_of(self, index: float) -> float:
        return self.start_time_ps + index * self.sample_interval_ps

    def index_of(self, time_ps: float) -> float:
        """Fractional sample index at which ``time_ps`` falls."""
        return (time_ps - self.start_time_ps) / self.sample_interval_ps

    def active_span(self) -> tuple[int, int]:
        """Half-open index range ``[first, last + 1)`` of non-zero samples.

        An all-zero waveform yields ``(0, 0)``.
        """
        nz = np.flatnonzero(self.samples)
        if nz.size == 0:
            return 0, 0
        return int(nz[0]), int(nz[-1]) + 1

    def with_samples(self, samples, start_time_ps: float | None = None) -> "SampledWaveform":
        start = self.start_time_ps if start_time_ps is None else start_time_ps
        return type(self)(self.sample_rate_hz, start, samples)

    def __eq__(self, other):
        if not isinstance(other, SampledWaveform):
            return NotImplemented
        return (
            self.sample_rate_hz == other.sample_rate_hz
            and self.start_time_ps == other.start_time_ps
            and np.array_equal(self.samples, other.samples)
        )

    __hash__ = None


def _seed_bits(seed, n: int) -> list[int]:
    """Normalise a seed to a list of stage values, stage 1 first."""
    if seed is None:
        return [1] * n
    if isinstance(seed, str):
        s = seed.strip()
        if len(s) != n or set(s) - {"0", "1"}:
            raise InvalidArgumentError(f"seed string must be {n} characters of 0/1, got {seed!r}")
        return [int(c) for c in s]
    if isinstance(seed, (int, np.integer)):
        seed = int(seed)
        if seed < 0 or seed >= 1 << n:
            raise InvalidArgumentError(f"integer seed must fit in {n} bits, got {seed}")
        return [(seed >> k) & 1 for k in range(n)]
    bits = [int(b) for b in seed]
    if len(bits) != n or set(bits) - {0, 1}:
        raise InvalidArgumentError(f"seed must hold {n} bits")
    return bits


@dataclass(frozen=True)
class PrbsSpec:
    """Fibonacci LFSR description.

    Parameters
    ----------
    register_length : int
        Number of register stages ``n``; the period is ``2**n - 1``.
    feedback_taps : tuple of int
        Polynomial exponents, e.g. ``(7, 6)`` for x^7 + x^6 + 1. The
        register length must be one of them.
    seed : int, str, sequence of bits or None
        Initial stage contents. An ``int`` holds stage ``k`` in bit ``k-1``;
        a string or sequence lists stages 1..n in order. ``None`` means
        all ones.
    """

    register_length: int = 7
    feedback_taps: tuple = (7, 6)
    seed: object = None

    def __post_init__(self):
        n = int(self.register_length)
        if n < 2:
            raise InvalidArgumentError("register_length must be at least 2")
        taps = tuple(sorted({int(t) for t in self.feedback_taps}, reverse=True))
        if not taps or taps[0] != n or taps[-1] < 1:
            raise InvalidArgumentError(f"feedback taps {self.feedback_taps} must lie in 1..{n} and include {n}")
        object.__setattr__(self, "register_length", n)
        object.__setattr__(self, "feedback_taps", taps)
        if not any(_seed_bits(self.seed, n)):
            raise InvalidArgumentError("PRBS seed must not be all zeros")

    @property
    def sequence_length(self) -> int:
        return (1 << self.register_length) - 1

    def stages(self) -> list[int]:
        return _seed_bits(self.seed, self.register_length)


def generate_prbs(spec: PrbsSpec) -> np.ndarray:
    """One full period of the shift-register output.

    Each clock emits the last stage, shifts the register towards it and
    loads the XOR of the tapped stages into stage 1.

    Returns
    -------
    ndarray of uint8, length ``2**register_length - 1``
    """
    state = spec.stages()
    taps = [t - 1 for t in spec.feedback_taps]
    out = np.empty(spec.sequence_length, dtype=np.uint8)
    for i in range(out.size):
        out[i] = state[-1]
        fb = 0
        for t in taps:
            fb ^= state[t]
        state = [fb] + state[:-1]
    return out


@dataclass(frozen=True)
class BurstSpec:
    """PRBS burst followed by zeros up to the packet length."""

    prbs: PrbsSpec = field(default_factory=PrbsSpec)
    bit_rate_bps: float = 10e9
    packet_duration_ps: float = 1e8
    line_code: str = "NRZ"

    def __post_init__(self):
        if self.line_code != "NRZ":
            raise InvalidArgumentError(f"unsupported line code {self.line_code!r}")
        if not self.bit_rate_bps > 0:
            raise InvalidArgumentError("bit_rate_bps must be positive")
        if self.packet_duration_ps < self.prbs_duration_ps:
            raise InvalidArgumentError(
                f"packet of {self.packet_duration_ps} ps is shorter than the PRBS ({self.prbs_duration_ps} ps)"
            )

    @property
    def prbs_duration_ps(self) -> float:
        return self.prbs.sequence_length / self.bit_rate_bps * 1e12


def samples_per_bit(sample_rate_hz: float, bit_rate_bps: float) -> int:
    ratio = sample_rate_hz / bit_rate_bps
    spb = int(round(ratio))
    if spb < 1 or abs(ratio - spb) > 1e-9 * ratio:
        raise InvalidArgumentError(
            f"sample rate {sample_rate_hz:g} Hz is not an integer multiple of bit rate {bit_rate_bps:g} b/s"
        )
    return spb


def nrz_encode(bits, bit_rate_bps: float, sample_rate_hz: float,
               packet_duration_ps: float | None = None) -> SampledWaveform:
    """Hold each bit for an integral number of samples, then zero-pad."""
    bits = np.asarray(bits)
    spb = samples_per_bit(sample_rate_hz, bit_rate_bps)
    body = np.repeat((bits != 0).astype(np.float64), spb)
    n = body.size
    if packet_duration_ps is not None:
        n = int(round(packet_duration_ps * sample_rate_hz * 1e-12))
        if n < body.size:
            raise InvalidArgumentError("packet duration shorter than the bit sequence")
    samples = np.zeros(n)
    samples[: body.size] = body
    return SampledWaveform(sample_rate_hz, 0.0, samples)


def build_burst(spec: BurstSpec, sample_rate_hz: float) -> SampledWaveform:
    """NRZ waveform of the PRBS burst padded to the packet length."""
    return nrz_encode(generate_prbs(spec.prbs), spec.bit_rate_bps, sample_rate_hz,
                      spec.packet_duration_ps)
