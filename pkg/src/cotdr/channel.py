"""
Synthetic C-OTDR acquisition: near-end reference plus far-end reflectors.

The received trace is a sum of scaled, delayed copies of the transmitted
burst, filtered by a single-pole receiver and corrupted by white Gaussian
noise reduced by trace averaging. Delays are applied with a linear-phase
factor in the frequency domain so ground-truth latencies are not tied to
the sampling grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .errors import InvalidArgumentError
from .signal import PhysicalConstants, SampledWaveform

REFERENCE_LABEL = "reference"

# Samples of padding either side of the burst when building each delayed
# echo; bounds the support of the fractional-delay interpolation kernel.
_ECHO_GUARD = 2048

# Round-trip trims of the four far-end reflectors relative to the nominal
# cable round trip. Fibres 1 and 2 are matched to within 100 ps.
DEFAULT_FIBER_TRIMS_PS = {"fiber1": 3.7, "fiber2": 71.0, "fiber3": 38_412.9}


@dataclass(frozen=True)
class Reflector:
    label: str
    round_trip_latency_ps: float
    amplitude: float = 1.0

    def __post_init__(self):
        if not self.round_trip_latency_ps >= 0:
            raise InvalidArgumentError(f"reflector {self.label!r}: latency must be >= 0")


@dataclass(frozen=True)
class FiberPlant:
    """Simulated link as seen from the instrument port.

    Parameters
    ----------
    reflectors : sequence of Reflector
        Must contain one labelled ``"reference"``; labels must be unique.
    receiver_bandwidth_hz : float
        3 dB cutoff of the single-pole receiver. ``math.inf`` disables it.
    noise_sigma : float
        Per-trace white noise standard deviation at the sampler.
    rng_seed : int
        Seed of the noise generator.
    """

    reflectors: tuple
    receiver_bandwidth_hz: float = 7.5e9
    noise_sigma: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        refl = tuple(self.reflectors)
        object.__setattr__(self, "reflectors", refl)
        labels = [r.label for r in refl]
        if len(set(labels)) != len(labels):
            raise InvalidArgumentError(f"reflector labels must be unique: {labels}")
        if REFERENCE_LABEL not in labels:
            raise InvalidArgumentError("plant needs a reflector labelled 'reference'")
        if not self.receiver_bandwidth_hz > 0:
            raise InvalidArgumentError("receiver_bandwidth_hz must be positive")
        if not self.noise_sigma >= 0:
            raise InvalidArgumentError("noise_sigma must be >= 0")

    def latencies(self) -> dict:
        return {r.label: r.round_trip_latency_ps for r in self.reflectors}

    def replace(self, **changes) -> "FiberPlant":
        kw = dict(reflectors=self.reflectors, receiver_bandwidth_hz=self.receiver_bandwidth_hz,
                  noise_sigma=self.noise_sigma, rng_seed=self.rng_seed)
        kw.update(changes)
        return FiberPlant(**kw)

    def shifted(self, offset_ps: float) -> "FiberPlant":
        """Same plant with every reflector delayed by ``offset_ps``."""
        refl = tuple(Reflector(r.label, r.round_trip_latency_ps + offset_ps, r.amplitude)
                     for r in self.reflectors)
        return self.replace(reflectors=refl)


@dataclass(frozen=True)
class TraceAcquisition:
    """Oscilloscope record settings.

    ``pretrigger_ps`` of record precede the burst trigger so that the
    near-end reflection's correlation cursors are captured.
    """

    n_traces: int = 2000
    observation_window_ps: float = 1e8
    pretrigger_ps: float = 20_000.0
    per_trace_noise: bool = False

    def __post_init__(self):
        if int(self.n_traces) < 1:
            raise InvalidArgumentError("n_traces must be >= 1")
        if not self.observation_window_ps > 0 or self.pretrigger_ps < 0:
            raise InvalidArgumentError("observation window must be positive and pretrigger >= 0")


def default_plant_from_paper(
    constants: PhysicalConstants = PhysicalConstants(),
    cable_length_m: float = 8500.0,
    jumper_length_m: float = 25.0,
    trims_ps: dict | None = None,
    reference_amplitude: float = 0.2,
    fiber_amplitude: float = 1.0,
    receiver_bandwidth_hz: float = 7.5e9,
    noise_sigma: float = 1.0,
    rng_seed: int = 0,
) -> FiberPlant:
    """Four-fibre plant of an 8.5 km buried cable; fibre 4 carries a jumper."""
    trims = dict(DEFAULT_FIBER_TRIMS_PS if trims_ps is None else trims_ps)
    base = constants.round_trip_latency_ps(cable_length_m)
    jumper = constants.round_trip_latency_ps(jumper_length_m)
    fibers = {
        "fiber1": base + trims["fiber1"],
        "fiber2": base + trims["fiber2"],
        "fiber3": base + trims["fiber3"],
    }
    fibers["fiber4"] = fibers["fiber3"] + jumper
    reflectors = [Reflector(REFERENCE_LABEL, 0.0, reference_amplitude)]
    reflectors += [Reflector(k, v, fiber_amplitude) for k, v in fibers.items()]
    return FiberPlant(tuple(reflectors), receiver_bandwidth_hz, noise_sigma, rng_seed)


def receiver_response(freq_hz, bandwidth_hz: float):
    """Single-pole low-pass transfer function."""
    if math.isinf(bandwidth_hz):
        return np.ones_like(freq_hz, dtype=np.complex128)
    return 1.0 / (1.0 + 1j * np.asarray(freq_hz) / bandwidth_hz)


def fractional_delay(samples, delay_samples: float) -> np.ndarray:
    """Circularly delay ``samples`` by a possibly fractional sample count.

    Integer delays reduce to ``np.roll``.
    """
    x = np.asarray(samples, dtype=np.float64)
    n = x.size
    k = np.arange(n // 2 + 1)
    return sfft.irfft(sfft.rfft(x) * np.exp(-2j * np.pi * k * delay_samples / n), n)


def _output_grid(burst: SampledWaveform, acq: TraceAcquisition) -> tuple[float, int]:
    dt = burst.sample_interval_ps
    n_pre = int(round(acq.pretrigger_ps / dt))
    n_out = n_pre + int(round(acq.observation_window_ps / dt))
    return -n_pre * dt, n_out


def simulate_averaged_trace(burst: SampledWaveform, plant: FiberPlant,
                            acq: TraceAcquisition = TraceAcquisition()) -> SampledWaveform:
    """Averaged received trace for ``plant`` probed with ``burst``.

    Returns
    -------
    SampledWaveform
        Same sample rate as ``burst``; sample 0 lies ``acq.pretrigger_ps``
        before the trigger.

    Raises
    ------
    InvalidArgumentError
        If a reflector's echo does not end inside the observation window.
    """
    dt = burst.sample_interval_ps
    start_ps, n_out = _output_grid(burst, acq)
    lo, hi = burst.active_span()
    burst_end_ps = burst.time_of(hi) if hi > lo else burst.start_time_ps
    for r in plant.reflectors:
        if r.round_trip_latency_ps + burst_end_ps > acq.observation_window_ps:
            raise InvalidArgumentError(
                f"observation window of {acq.observation_window_ps:g} ps too short for reflector "
                f"{r.label!r} at {r.round_trip_latency_ps:g} ps (echo ends at "
                f"{r.round_trip_latency_ps + burst_end_ps:g} ps)"
            )

    out = np.zeros(n_out)
    if hi > lo:
        active = burst.samples[lo:hi]
        seg_len = sfft.next_fast_len(active.size + 2 * _ECHO_GUARD, real=True)
        seg = np.zeros(seg_len)
        seg[_ECHO_GUARD:_ECHO_GUARD + active.size] = active
        freq = sfft.rfftfreq(seg_len, dt * 1e-12)
        base_spec = sfft.rfft(seg) * receiver_response(freq, plant.receiver_bandwidth_hz)
        k = np.arange(freq.size)
        for r in plant.reflectors:
            pos = (burst.time_of(lo) + r.round_trip_latency_ps - start_ps) / dt
            whole = math.floor(pos)
            frac = pos - whole
            spec = r.amplitude * base_spec
            if frac:
                spec = spec * np.exp(-2j * np.pi * k * frac / seg_len)
            echo = sfft.irfft(spec, seg_len)
            first = whole - _ECHO_GUARD
            a, b = max(first, 0), min(first + seg_len, n_out)
            if a < b:
                out[a:b] += echo[a - first:b - first]

    sigma = plant.noise_sigma
    if sigma > 0:
        rng = np.random.default_rng(plant.rng_seed)
        if acq.per_trace_noise:
            acc = np.zeros(n_out)
            for _ in range(int(acq.n_traces)):
                acc += rng.normal(0.0, sigma, n_out)
            out += acc / acq.n_traces
        else:
            out += rng.normal(0.0, sigma / math.sqrt(acq.n_traces), n_out)
    return SampledWaveform(burst.sample_rate_hz, start_ps, out)
