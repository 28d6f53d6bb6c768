import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cotdr import correlator as corrmod
from cotdr.channel import (FiberPlant, Reflector, TraceAcquisition, default_plant_from_paper,
                           fractional_delay, simulate_averaged_trace)
from cotdr.correlator import (CorrelationTrace, PeakDetectConfig, cross_correlate, detect_peaks,
                              equalized_correlation, measure_latencies, measure_peaks, refine_cluster,
                              refine_peak, suppress_cursors, windowed_correlation, windows_around)
from cotdr.errors import FitError, InvalidArgumentError, MissingReferenceError, PeakAssignmentError
from cotdr.signal import BurstSpec, SampledWaveform, build_burst

FS = 50e9
DT = 20.0
CFG = PeakDetectConfig()
SHORT_ACQ = TraceAcquisition(observation_window_ps=2e6)


def direct_correlation(rec, ref):
    """Time-domain oracle: out[k] = sum_m rec[m + k] ref[m], k = 0..len(rec)-1."""
    full = np.correlate(np.concatenate([rec, np.zeros(ref.size)]), ref, mode="valid")
    return full[:rec.size]


def rc(t, a, t0, w):
    u = (t - t0) / w
    return np.where(np.abs(u) < 1, 0.5 * a * (1 + np.cos(np.pi * u)), 0.0)


def rc_trace(t0, a=1.0, w=60.0, n=64, start=0.0):
    t = start + np.arange(n) * DT
    return CorrelationTrace(FS, start, rc(t, a, t0, w))


# -- cross_correlate -------------------------------------------------------

def test_autocorrelation_peaks_at_zero(short_burst):
    corr = cross_correlate(short_burst, short_burst)
    assert corr.start_time_ps == 0.0
    assert int(np.argmax(corr.samples)) == 0


def test_delay_of_100_samples(short_burst):
    rec = short_burst.with_samples(np.roll(short_burst.samples, 100))
    corr = cross_correlate(rec, short_burst)
    assert corr.times_ps()[np.argmax(corr.samples)] == pytest.approx(2000.0)


def test_four_copies_match_direct_sum(rng):
    ref = rng.integers(0, 2, 60).astype(float)
    rec = np.zeros(3000)
    delays = [200, 640, 1500, 2410]
    for d, a in zip(delays, [1.0, 0.7, 0.9, 0.5]):
        rec[d:d + ref.size] += a * ref
    r = SampledWaveform(FS, 0.0, rec)
    corr = cross_correlate(r, SampledWaveform(FS, 0.0, ref))
    oracle = direct_correlation(rec, ref)
    assert np.abs(corr.samples - oracle).max() <= 1e-9 * np.abs(oracle).max()
    peaks = detect_peaks(corr, PeakDetectConfig(relative_threshold=0.4, min_separation_ps=400))
    assert peaks == delays


def test_lag_axis_accounts_for_start_times(rng):
    ref = SampledWaveform(FS, 0.0, np.r_[np.zeros(10), rng.integers(0, 2, 50), np.zeros(5)])
    rec = SampledWaveform(FS, -400.0, np.zeros(500))
    corr = cross_correlate(rec, ref)
    # active part of the reference starts at sample 10 -> 200 ps
    assert corr.start_time_ps == -600.0


def test_mismatched_rates():
    with pytest.raises(InvalidArgumentError):
        cross_correlate(SampledWaveform(FS, 0, [1.0]), SampledWaveform(2 * FS, 0, [1.0]))


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 4000), m=st.integers(1, 300), seed=st.integers(0, 2 ** 31))
def test_fft_equals_direct_property(n, m, seed):
    g = np.random.default_rng(seed)
    rec = g.normal(size=n)
    ref = g.normal(size=m)
    ref[0] = ref[-1] = 1.0  # keep the active span equal to the full array
    corr = cross_correlate(SampledWaveform(FS, 0.0, rec), SampledWaveform(FS, 0.0, ref))
    oracle = direct_correlation(rec, ref)
    assert np.abs(corr.samples - oracle).max() <= 1e-9 * max(np.abs(oracle).max(), 1e-300)


# -- suppress_cursors ------------------------------------------------------

@pytest.fixture(scope="module")
def prbs_only():
    return build_burst(BurstSpec(packet_duration_ps=12_700.0), FS)


def padded(burst, pre=1000, post=1000):
    return SampledWaveform(FS, -pre * DT, np.r_[np.zeros(pre), burst.samples, np.zeros(post)])


def brute_aperiodic_autocorrelation(x):
    n = x.size
    return np.array([np.dot(x[max(0, -k):n - max(0, k)], x[max(0, k):n - max(0, -k)])
                     for k in range(-n + 1, n)])


def test_raw_cursors_are_large(prbs_only):
    raw = cross_correlate(padded(prbs_only), prbs_only)
    x = prbs_only.samples
    brute = brute_aperiodic_autocorrelation(x)
    lags = np.arange(-x.size + 1, x.size)
    got = np.interp(lags * DT, raw.times_ps(), raw.samples)
    np.testing.assert_allclose(got, brute, atol=1e-9 * brute.max())
    side = np.abs(brute[np.abs(lags) > 6]).max() / brute.max()
    assert side > 0.3


def sidelobe_ratio(corr, main_ps):
    lag = corr.times_ps()
    main = np.abs(lag) <= main_ps
    return np.abs(corr.samples[~main]).max() / corr.samples.max()


def test_suppressed_sidelobes_below_5_percent(prbs_only):
    raw = cross_correlate(padded(prbs_only), prbs_only)
    out = suppress_cursors(raw, prbs_only, 1e-3)
    assert out.times_ps()[np.argmax(out.samples)] == 0.0
    # main lobe: the 100 ps target half-width plus one sample
    assert sidelobe_ratio(out, 120.0) < 0.05
    assert sidelobe_ratio(raw, 120.0) > 0.3


def test_suppress_cursors_with_receiver_equalisation(prbs_only):
    rec = simulate_averaged_trace(prbs_only, FiberPlant((Reflector("reference", 0.0, 1.0),), noise_sigma=0.0),
                                  TraceAcquisition(observation_window_ps=12_700.0 + 20_000, pretrigger_ps=20_000))
    raw = cross_correlate(rec, prbs_only)
    out = suppress_cursors(raw, prbs_only, 1e-3, receiver_bandwidth_hz=7.5e9)
    assert sidelobe_ratio(out, 120.0) < 0.05


def test_ideal_impulse_unchanged():
    reg = 1e-3
    ref = SampledWaveform(FS, 0.0, [1.0])
    x = np.zeros(256)
    x[100] = 1.0
    out = suppress_cursors(CorrelationTrace(FS, 0.0, x), ref, reg, pulse_halfwidth_ps=None)
    np.testing.assert_allclose(out.samples, x, atol=2 * reg)


def test_regularization_must_be_positive(prbs_only):
    with pytest.raises(InvalidArgumentError):
        suppress_cursors(cross_correlate(prbs_only, prbs_only), prbs_only, 0.0)


def test_overlapping_packets_resolve(short_burst):
    p = FiberPlant((Reflector("reference", 0.0, 0.2), Reflector("a", 400_000.0, 1.0),
                    Reflector("b", 400_060.0, 1.0)), noise_sigma=0.0)
    trace = simulate_averaged_trace(short_burst, p, SHORT_ACQ)
    raw = cross_correlate(trace, short_burst)
    eq = equalized_correlation(trace, short_burst, CFG)
    far = [k for k in detect_peaks(eq, CFG) if eq.time_of(k) > 300_000]
    assert len(far) == 2
    far_raw = [k for k in detect_peaks(raw, CFG) if raw.time_of(k) > 300_000]
    assert len(far_raw) != 2 or abs(np.diff([raw.time_of(k) for k in far_raw])[0] - 60) > 20


def test_fused_matches_two_step(short_burst):
    p = FiberPlant((Reflector("reference", 0.0, 0.2), Reflector("a", 1_000_013.0, 1.0)), noise_sigma=0.3)
    trace = simulate_averaged_trace(short_burst, p, SHORT_ACQ)
    cfg = PeakDetectConfig(receiver_bandwidth_hz=None)
    two = suppress_cursors(cross_correlate(trace, short_burst), short_burst, cfg.regularization,
                           pulse_halfwidth_ps=cfg.pulse_halfwidth_ps)
    one = equalized_correlation(trace, short_burst, cfg)
    # both ends differ: the two-step form crops lags before the filter sees them
    away = slice(40_000, len(one) - 40_000)
    assert np.abs(one.samples[away] - two.samples[away]).max() < 1e-6 * one.samples.max()


def test_windowed_matches_full(short_burst):
    p = FiberPlant((Reflector("reference", 0.0, 0.2), Reflector("a", 900_007.0, 1.0)), noise_sigma=1.0)
    trace = simulate_averaged_trace(short_burst, p, SHORT_ACQ)
    full = equalized_correlation(trace, short_burst, CFG)
    segs = windowed_correlation(trace, short_burst, CFG, [(-40, 40), (899_950, 900_050)])
    assert len(segs) == 2
    for s in segs:
        i0 = int(round(full.index_of(s.start_time_ps)))
        ref = full.samples[i0:i0 + len(s)]
        assert np.abs(s.samples - ref).max() < 1e-4 * full.samples.max()


# -- detect_peaks ----------------------------------------------------------

def test_default_trace_has_five_peaks(full_burst):
    trace = simulate_averaged_trace(full_burst, default_plant_from_paper(rng_seed=3), TraceAcquisition())
    corr = equalized_correlation(trace, full_burst, CFG)
    assert len(detect_peaks(corr, CFG)) == 5


def test_all_zero_trace():
    assert detect_peaks(CorrelationTrace(FS, 0.0, np.zeros(100)), CFG) == []


def test_min_separation_keeps_larger():
    t = np.arange(200) * 1.0  # 1 ps grid
    y = rc(t, 1.0, 90.0, 4.0) + rc(t, 0.8, 100.0, 4.0)
    corr = CorrelationTrace(1e12, 0.0, y)
    assert detect_peaks(corr, PeakDetectConfig(min_separation_ps=1.0)) == [90, 100]
    assert detect_peaks(corr, PeakDetectConfig(min_separation_ps=1000.0)) == [90]


def test_tie_prefers_smaller_lag():
    y = np.zeros(50)
    y[[10, 14]] = 1.0
    assert detect_peaks(CorrelationTrace(FS, 0.0, y), PeakDetectConfig(min_separation_ps=200.0)) == [10]


def test_threshold_is_relative():
    y = np.zeros(50)
    y[10], y[30] = 1.0, 0.1
    assert detect_peaks(CorrelationTrace(FS, 0.0, y), PeakDetectConfig(relative_threshold=0.12)) == [10]
    assert detect_peaks(CorrelationTrace(FS, 0.0, y), PeakDetectConfig(relative_threshold=0.05)) == [10, 30]


def test_config_validation():
    for bad in (dict(relative_threshold=0.0), dict(relative_threshold=1.5), dict(fit_window_samples=4),
                dict(fit_window_samples=3), dict(regularization=0.0), dict(min_separation_ps=-1.0)):
        with pytest.raises(InvalidArgumentError):
            PeakDetectConfig(**bad)


# -- refine_peak -----------------------------------------------------------

def test_refine_on_sample_exact():
    p = refine_peak(rc_trace(20 * DT), 20, CFG)
    assert abs(p.refined_lag_ps - 400.0) < 0.01
    assert p.amplitude == pytest.approx(1.0, abs=1e-6)
    assert p.half_width_ps == pytest.approx(60.0, abs=1e-3)
    assert p.fit_rms_residual >= 0


def test_refine_subsample_offset():
    p = refine_peak(rc_trace(20 * DT + 7.3), 20, CFG)
    assert abs(p.refined_lag_ps - 407.3) < 2.0
    assert abs(p.refined_lag_ps - 20 * DT) < DT


@pytest.mark.parametrize("offset", [-19.0, -7.3, 0.0, 3.3, 9.99, 15.0])
def test_refine_within_one_sample(offset):
    p = refine_peak(rc_trace(30 * DT + offset, w=80.0), 30, CFG)
    assert abs(p.refined_lag_ps - (600 + offset)) < 0.05
    assert abs(p.refined_lag_ps - 30 * DT) < DT


def test_refine_window_at_edge():
    with pytest.raises(InvalidArgumentError):
        refine_peak(rc_trace(2 * DT), 2, CFG)


def test_refine_reports_fit_failure(monkeypatch):
    class Failed:
        status = 0
        message = "forced"

    monkeypatch.setattr(corrmod, "least_squares", lambda *a, **k: Failed())
    with pytest.raises(FitError) as err:
        refine_peak(rc_trace(20 * DT + 3.0), 20, CFG)
    assert np.isfinite(err.value.best_residual)


@pytest.mark.parametrize("delta", [1.0, 7.3, 19.9, 33.3])
def test_refine_shift_equivariance(short_burst, delta):
    p = FiberPlant((Reflector("reference", 0.0, 0.0), Reflector("a", 500_000.0, 1.0)), noise_sigma=0.0)
    corr = equalized_correlation(simulate_averaged_trace(short_burst, p, SHORT_ACQ), short_burst, CFG)
    k0 = int(np.argmax(corr.samples))
    base = refine_peak(corr, k0, CFG).refined_lag_ps
    moved = corr.with_samples(fractional_delay(corr.samples, delta / DT))
    k1 = int(np.argmax(moved.samples))
    assert abs(refine_peak(moved, k1, CFG).refined_lag_ps - base - delta) < 0.5


def test_cluster_fit_without_template_separates_pair():
    t = np.arange(64) * DT
    y = rc(t, 1.0, 400.0, 40.0) + rc(t, 0.9, 467.0, 40.0)
    peaks = refine_cluster(CorrelationTrace(FS, 0.0, y), [20, 23], CFG)
    assert [round(p.refined_lag_ps, 3) for p in peaks] == [400.0, 467.0]


# -- measure_latencies -----------------------------------------------------

@pytest.fixture(scope="module")
def noiseless_default(full_burst):
    plant = default_plant_from_paper(noise_sigma=0.0)
    return plant, simulate_averaged_trace(full_burst, plant, TraceAcquisition())


def test_noiseless_default_plant(full_burst, noiseless_default):
    plant, trace = noiseless_default
    truth = plant.latencies()
    got = measure_latencies(trace, full_burst, CFG, windows_around(truth, 40.0))
    assert set(got) == {"fiber1", "fiber2", "fiber3", "fiber4"}
    for k, v in got.items():
        assert abs(v - truth[k]) < 0.5


def test_full_scope_agrees_with_windows(full_burst, noiseless_default):
    plant, trace = noiseless_default
    w = windows_around(plant.latencies(), 40.0)
    a = measure_latencies(trace, full_burst, CFG, w, scope="windows")
    b = measure_latencies(trace, full_burst, CFG, w, scope="full")
    for k in a:
        assert abs(a[k] - b[k]) < 0.01


def test_common_shift_cancels(full_burst, noiseless_default):
    plant, trace = noiseless_default
    base = measure_latencies(trace, full_burst, CFG, windows_around(plant.latencies(), 40.0))
    moved = plant.shifted(300.0)
    trace2 = simulate_averaged_trace(full_burst, moved, TraceAcquisition())
    got = measure_latencies(trace2, full_burst, CFG, windows_around(moved.latencies(), 40.0))
    for k in base:
        assert abs(got[k] - base[k]) < 0.1


@pytest.mark.parametrize("offset", [0.0, 4.1, 13.7])
def test_sixty_ps_pair_resolved(short_burst, offset):
    truth = {"reference": 0.0, "fiber1": 800_000.0 + offset, "fiber2": 800_060.0 + offset}
    p = FiberPlant(tuple(Reflector(k, v, 0.2 if k == "reference" else 1.0) for k, v in truth.items()),
                   noise_sigma=0.0)
    trace = simulate_averaged_trace(short_burst, p, SHORT_ACQ)
    windows = windows_around(truth, 40.0)
    assert windows["fiber1"][1] < windows["fiber2"][0]
    got = measure_latencies(trace, short_burst, CFG, windows)
    assert abs(got["fiber1"] - truth["fiber1"]) < 0.5
    assert abs(got["fiber2"] - truth["fiber2"]) < 0.5


def test_parallel_refinement_identical(full_burst, noiseless_default):
    plant, trace = noiseless_default
    w = windows_around(plant.latencies(), 40.0)
    assert measure_peaks(trace, full_burst, CFG, w, workers=4) == measure_peaks(trace, full_burst, CFG, w)


def test_coarse_index_on_full_grid(full_burst, noiseless_default):
    plant, trace = noiseless_default
    peaks = measure_peaks(trace, full_burst, CFG, windows_around(plant.latencies(), 40.0))
    for p in peaks.values():
        lag = trace.start_time_ps + p.coarse_index * DT
        assert abs(p.refined_lag_ps - lag) < DT


def test_missing_reference(full_burst, noiseless_default):
    plant, trace = noiseless_default
    w = windows_around(plant.latencies(), 40.0)
    w["reference"] = (5_000.0, 5_100.0)
    with pytest.raises(MissingReferenceError):
        measure_latencies(trace, full_burst, CFG, w)


def test_empty_fibre_window_named(full_burst, noiseless_default):
    plant, trace = noiseless_default
    w = windows_around(plant.latencies(), 40.0)
    w["fiber5"] = (90_000_000.0, 90_000_100.0)
    with pytest.raises(PeakAssignmentError) as err:
        measure_latencies(trace, full_burst, CFG, w)
    assert err.value.windows == {"fiber5": 0}
    assert "fiber5" in str(err.value)


def test_window_with_two_peaks(full_burst, noiseless_default):
    plant, trace = noiseless_default
    lat = plant.latencies()
    w = {"reference": (-40.0, 40.0), "pair": (lat["fiber1"] - 40, lat["fiber2"] + 40)}
    with pytest.raises(PeakAssignmentError) as err:
        measure_latencies(trace, full_burst, CFG, w)
    assert err.value.windows == {"pair": 2}


def test_window_validation():
    with pytest.raises(InvalidArgumentError):
        corrmod._check_windows({"fiber1": (0, 10)})
    with pytest.raises(InvalidArgumentError):
        corrmod._check_windows({"reference": (0, 10), "fiber1": (5, 20)})
    with pytest.raises(InvalidArgumentError):
        corrmod._check_windows({"reference": (10, 10)})


def test_windows_around_clip_at_midpoints():
    w = windows_around({"reference": 0.0, "a": 1000.0, "b": 1060.0}, 40.0)
    assert w["a"] == (960.0, 1030.0)
    assert w["b"][0] > 1030.0 and w["b"][1] == 1100.0
    assert w["reference"] == (-40.0, 40.0)


def test_error_grows_with_noise(short_burst):
    truth = {"reference": 0.0, "fiber1": 800_007.3}
    windows = windows_around(truth, 40.0)
    rms = []
    for sigma in (0.25, 0.5, 1.0, 2.0, 4.0):
        errs = []
        for seed in range(50):
            p = FiberPlant(tuple(Reflector(k, v, 0.2 if k == "reference" else 1.0) for k, v in truth.items()),
                           noise_sigma=sigma, rng_seed=seed)
            got = measure_latencies(simulate_averaged_trace(short_burst, p, SHORT_ACQ), short_burst, CFG, windows)
            errs.append(got["fiber1"] - truth["fiber1"])
        rms.append(float(np.sqrt(np.mean(np.square(errs)))))
    assert all(b >= a for a, b in zip(rms, rms[1:])), rms
