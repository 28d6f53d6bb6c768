"""Synthetic air-temperature records and thermally driven latency campaigns."""
from __future__ import annotations

import math

import numpy as np
from scipy import signal as ssig

from .analytics import LatencySeries
from .errors import InvalidArgumentError
from .thermal import SECONDS_PER_DAY, TemperatureSeries, lowpass_filter, spinup_initial_temp

# 2018-01-01T00:00:00Z
DEFAULT_START_S = 1_514_764_800.0


def synthetic_air_temperature(
    days: float,
    step_s: float = 600.0,
    start_s: float = DEFAULT_START_S,
    mean_c: float = 10.0,
    annual_pk_pk_k: float = 27.0,
    coldest_day: float = 15.0,
    daily_amplitude_k: float = 4.0,
    weather_sigma_k: float = 3.5,
    weather_corr_days: float = 3.0,
    seed: int = 0,
) -> TemperatureSeries:
    """Mid-latitude style air temperature on a regular grid.

    Sum of an annual cosine (minimum on ``coldest_day``), a daily cosine
    peaking mid-afternoon and an AR(1) weather process with the given
    stationary standard deviation and correlation time.
    """
    if not days > 0 or not step_s > 0:
        raise InvalidArgumentError("days and step_s must be positive")
    n = int(math.floor(days * SECONDS_PER_DAY / step_s)) + 1
    t = start_s + np.arange(n) * step_s
    d = (t - start_s) / SECONDS_PER_DAY
    annual = -0.5 * annual_pk_pk_k * np.cos(2 * np.pi * (d - coldest_day) / 365.25)
    hour = ((t % SECONDS_PER_DAY) / 3600.0)
    daily = daily_amplitude_k * np.cos(2 * np.pi * (hour - 15.0) / 24.0)
    weather = np.zeros(n)
    if weather_sigma_k > 0:
        rng = np.random.default_rng(seed)
        phi = math.exp(-step_s / (weather_corr_days * SECONDS_PER_DAY))
        innov = rng.normal(0.0, weather_sigma_k * math.sqrt(1 - phi * phi), n)
        innov[0] = rng.normal(0.0, weather_sigma_k)
        weather = ssig.lfilter([1.0], [1.0, -phi], innov)
    return TemperatureSeries(t, mean_c + annual + daily + weather)


def latency_campaign(
    air: TemperatureSeries,
    fibers: dict,
    tau_days: float,
    start_s: float,
    duration_days: float,
    interval_s: float = 600.0,
    noise_ps: float = 0.0,
    seed: int = 0,
    gap: tuple | None = None,
) -> dict:
    """Latency records driven by the low-pass thermal model.

    Parameters
    ----------
    air : TemperatureSeries
        Must cover ``[start_s, start_s + duration_days]``; earlier samples
        spin up the filter.
    fibers : dict
        ``label -> (rtt_ps, tdc_ppm_per_k)``; ``rtt_ps`` is the round trip
        at the campaign start.
    gap : (gap_start_s, gap_duration_s), optional
        Interval without records.

    Returns
    -------
    dict of label -> LatencySeries (absolute round trips)
    """
    stop = start_s + duration_days * SECONDS_PER_DAY
    if len(air) == 0 or air.timestamps_s[0] > start_s or air.timestamps_s[-1] < stop:
        raise InvalidArgumentError("air record does not cover the campaign")
    t = np.arange(start_s, stop + 0.5 * interval_s, interval_s)
    t = t[t <= stop]
    if gap is not None:
        g0, gl = gap
        t = t[(t < g0) | (t >= g0 + gl)]
    init = spinup_initial_temp(air, tau_days, start_s)
    tf = lowpass_filter(air, tau_days, init)
    tf_at = np.interp(t, tf.timestamps_s, tf.temps_c)
    tf_start = float(np.interp(start_s, tf.timestamps_s, tf.temps_c))
    rng = np.random.default_rng(seed)
    out = {}
    for label, (rtt, tdc) in fibers.items():
        v = rtt + rtt * tdc * 1e-6 * (tf_at - tf_start)
        if noise_ps > 0:
            v = v + rng.normal(0.0, noise_ps, v.size)
        out[label] = LatencySeries(label, t, v)
    return out
