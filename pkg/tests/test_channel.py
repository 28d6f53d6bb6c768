import math

import numpy as np
import pytest

from cotdr.channel import (DEFAULT_FIBER_TRIMS_PS, FiberPlant, Reflector, TraceAcquisition,
                           default_plant_from_paper, fractional_delay, receiver_response,
                           simulate_averaged_trace)
from cotdr.correlator import cross_correlate
from cotdr.errors import InvalidArgumentError
from cotdr.signal import BurstSpec, PhysicalConstants, build_burst

SHORT = TraceAcquisition(observation_window_ps=2e6, pretrigger_ps=0.0)


def plant(*refl, bw=7.5e9, sigma=0.0, seed=0):
    return FiberPlant(tuple(Reflector(*r) for r in refl), bw, sigma, seed)


def test_identity_channel(short_burst):
    out = simulate_averaged_trace(short_burst, plant(("reference", 0.0, 1.0), bw=math.inf), SHORT)
    assert out.start_time_ps == 0.0
    np.testing.assert_allclose(out.samples, short_burst.samples, atol=1e-9)


def test_high_bandwidth_approaches_burst(short_burst):
    out = simulate_averaged_trace(short_burst, plant(("reference", 0.0, 1.0), bw=5e12), SHORT)
    assert np.abs(out.samples - short_burst.samples).max() < 0.05


def test_integer_delay_is_index_shift(short_burst):
    out = simulate_averaged_trace(short_burst, plant(("reference", 100 * 20.0, 0.5), bw=math.inf), SHORT)
    np.testing.assert_allclose(out.samples[100:], 0.5 * short_burst.samples[:-100], atol=1e-9)
    np.testing.assert_allclose(out.samples[:100], 0.0, atol=1e-9)


def test_fractional_delay_integer_equals_roll(rng):
    x = rng.normal(size=257)
    np.testing.assert_allclose(fractional_delay(x, 7), np.roll(x, 7), atol=1e-12)


def test_fractional_delay_moves_a_band_limited_pulse(rng):
    t = np.arange(512)
    pulse = np.exp(-0.5 * ((t - 200.0) / 6.0) ** 2)
    moved = fractional_delay(pulse, 0.35)
    expected = np.exp(-0.5 * ((t - 200.35) / 6.0) ** 2)
    np.testing.assert_allclose(moved, expected, atol=1e-9)


def test_linearity_sample_exact(short_burst):
    a = ("reference", 0.0, 0.2)
    b = ("fiber1", 123_456.7, 1.0)
    c = ("fiber2", 123_523.9, 0.8)
    both = simulate_averaged_trace(short_burst, plant(a, b, c), SHORT)
    silent = ("reference", 0.0, 0.0)
    sep = (simulate_averaged_trace(short_burst, plant(a), SHORT).samples
           + simulate_averaged_trace(short_burst, plant(b, silent), SHORT).samples
           + simulate_averaged_trace(short_burst, plant(c, silent), SHORT).samples)
    np.testing.assert_array_equal(both.samples, sep)


def test_overlapping_packets_sum(short_burst):
    # 67 ps apart: far less than the 12.7 ns burst, so the packets overlap
    a = ("reference", 0.0, 0.0)
    f1 = ("fiber1", 500_000.0, 1.0)
    f2 = ("fiber2", 500_067.0, 1.0)
    both = simulate_averaged_trace(short_burst, plant(a, f1, f2), SHORT).samples
    one = simulate_averaged_trace(short_burst, plant(a, f1), SHORT).samples
    two = simulate_averaged_trace(short_burst, plant(a, f2), SHORT).samples
    s1 = np.flatnonzero(np.abs(one) > 0.05)
    s2 = np.flatnonzero(np.abs(two) > 0.05)
    assert min(s1[-1], s2[-1]) - max(s1[0], s2[0]) > 600
    np.testing.assert_allclose(both, one + two, atol=1e-12)
    assert both.max() > 1.5


def test_jumper_offset(short_burst):
    jumper = PhysicalConstants().round_trip_latency_ps(25.0)
    assert jumper == pytest.approx(244_870, abs=1)
    out = simulate_averaged_trace(short_burst, plant(("reference", 0.0, 1.0), ("far", jumper, 1.0)), SHORT)
    corr = cross_correlate(out, short_burst)
    late = corr.times_ps() > 100_000
    lag = corr.times_ps()[late][np.argmax(corr.samples[late])]
    assert abs(lag - jumper) <= 20.0
    # quoted as roughly 250 ns for 25 m
    assert abs(lag - 250_000) / 250_000 < 0.03


def test_default_plant():
    p = default_plant_from_paper()
    lat = p.latencies()
    assert lat["reference"] == 0.0
    base = 2 * 8500 * 1.4682 / 299_792_458 * 1e12
    for f in ("fiber1", "fiber2", "fiber3"):
        assert lat[f] == pytest.approx(base + DEFAULT_FIBER_TRIMS_PS[f])
        assert abs(lat[f] / 1e6 - 83.255) < 0.05
    assert abs(lat["fiber1"] - lat["fiber2"]) < 100.0
    assert lat["fiber4"] - lat["fiber3"] == pytest.approx(244_870, abs=1.0)
    amps = {r.label: r.amplitude for r in p.reflectors}
    assert amps == {"reference": 0.2, "fiber1": 1.0, "fiber2": 1.0, "fiber3": 1.0, "fiber4": 1.0}


def test_window_too_short_names_reflector(short_burst):
    p = plant(("reference", 0.0, 0.2), ("fiber9", 1_995_000.0, 1.0))
    with pytest.raises(InvalidArgumentError, match="fiber9"):
        simulate_averaged_trace(short_burst, p, SHORT)


def test_plant_invariants():
    with pytest.raises(InvalidArgumentError):
        FiberPlant((Reflector("fiber1", 1.0),))
    with pytest.raises(InvalidArgumentError):
        FiberPlant((Reflector("reference", 0.0), Reflector("reference", 5.0)))
    with pytest.raises(InvalidArgumentError):
        FiberPlant((Reflector("reference", 0.0),), receiver_bandwidth_hz=0.0)
    with pytest.raises(InvalidArgumentError):
        Reflector("x", -1.0)


def test_determinism(short_burst):
    p = plant(("reference", 0.0, 0.2), ("f", 1e6 + 3.3, 1.0), sigma=1.0, seed=42)
    a = simulate_averaged_trace(short_burst, p, SHORT)
    b = simulate_averaged_trace(short_burst, p, SHORT)
    assert a.samples.tobytes() == b.samples.tobytes()
    c = simulate_averaged_trace(short_burst, p.replace(rng_seed=43), SHORT)
    assert not np.array_equal(a.samples, c.samples)


def test_noise_level_matches_averaging(short_burst):
    p = plant(("reference", 0.0, 0.0), sigma=2.0, seed=1)
    out = simulate_averaged_trace(short_burst, p, TraceAcquisition(n_traces=400, observation_window_ps=2e6))
    assert np.std(out.samples) == pytest.approx(2.0 / 20.0, rel=0.02)


@pytest.mark.parametrize("n_traces", [4, 16, 64])
def test_per_trace_averaging_scales_as_inverse_sqrt(n_traces):
    burst = build_burst(BurstSpec(packet_duration_ps=20_000.0), 50e9)
    acq = TraceAcquisition(n_traces=n_traces, observation_window_ps=20_000.0, pretrigger_ps=0.0,
                           per_trace_noise=True)
    stds = [np.std(simulate_averaged_trace(burst, plant(("reference", 0.0, 0.0), sigma=1.0, seed=s), acq).samples)
            for s in range(100)]
    assert np.mean(stds) == pytest.approx(1.0 / math.sqrt(n_traces), rel=0.10)


def test_receiver_response():
    f = np.array([0.0, 7.5e9])
    h = receiver_response(f, 7.5e9)
    assert h[0] == 1.0
    assert abs(h[1]) == pytest.approx(1 / math.sqrt(2))
    assert np.all(receiver_response(f, math.inf) == 1.0)


def test_output_grid_includes_pretrigger(short_burst):
    acq = TraceAcquisition(observation_window_ps=2e6, pretrigger_ps=20_000.0)
    out = simulate_averaged_trace(short_burst, plant(("reference", 0.0, 1.0), bw=math.inf), acq)
    assert out.start_time_ps == -20_000.0
    assert len(out) == 1000 + 100_000
    np.testing.assert_allclose(out.samples[1000:], short_burst.samples, atol=1e-9)
