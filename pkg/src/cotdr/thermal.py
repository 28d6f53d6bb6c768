"""
First-order thermal lag model of buried fibre latency.

The cable temperature is modelled as a first-order low-pass of the outside
air temperature with time constant ``tau``; the round-trip latency then
varies linearly with that filtered temperature through the temperature
delay coefficient (TDC, in ppm/K).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, signal as ssig

from .analytics import LatencySeries
from .errors import InvalidArgumentError

SECONDS_PER_DAY = 86_400.0

# Residual RMS above this fraction of the latency standard deviation means
# the filtered temperature explains little of the measured variation.
LOW_CONFIDENCE_RATIO = 0.8


@dataclass(frozen=True, eq=False)
class TemperatureSeries:
    """Air or fibre temperature samples in degrees Celsius.

    Timestamps are UTC seconds and must be strictly increasing; spacing
    may be irregular.
    """

    timestamps_s: np.ndarray = field(repr=False)
    temps_c: np.ndarray = field(repr=False)

    def __post_init__(self):
        t = np.array(self.timestamps_s, dtype=np.float64, copy=True).reshape(-1)
        v = np.array(self.temps_c, dtype=np.float64, copy=True).reshape(-1)
        if t.shape != v.shape:
            raise InvalidArgumentError("timestamps and temperatures differ in length")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise InvalidArgumentError("temperature timestamps are not strictly increasing")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "timestamps_s", t)
        object.__setattr__(self, "temps_c", v)

    def __len__(self):
        return self.timestamps_s.size

    @property
    def span_days(self) -> float:
        if len(self) < 2:
            return 0.0
        return float(self.timestamps_s[-1] - self.timestamps_s[0]) / SECONDS_PER_DAY

    def between(self, start_s: float, stop_s: float) -> "TemperatureSeries":
        """Samples with ``start_s <= t <= stop_s``."""
        m = (self.timestamps_s >= start_s) & (self.timestamps_s <= stop_s)
        return TemperatureSeries(self.timestamps_s[m], self.temps_c[m])


@dataclass(frozen=True)
class ThermalFit:
    """Result of fitting the low-pass model to a latency series.

    Attributes
    ----------
    tdc_ppm_per_k : float
        Temperature delay coefficient.
    tau_days : float
        Low-pass time constant.
    reference_rtt_ps : float
        Round trip the TDC is relative to.
    initial_fiber_temp_c : float
        Filter state at the first air sample.
    rms_residual_ps : float
        RMS of measured minus modelled latency.
    offset_ps : float
        Free constant of the linear model (latency at 0 degC fibre
        temperature, relative to the series' own zero).
    residual_ratio : float
        ``rms_residual_ps`` divided by the standard deviation of the
        measured latency; close to 1 when temperature explains nothing.
    low_confidence : bool
        ``residual_ratio > LOW_CONFIDENCE_RATIO``.
    n_samples : int
        Latency samples used in the fit.
    """

    tdc_ppm_per_k: float
    tau_days: float
    reference_rtt_ps: float
    initial_fiber_temp_c: float
    rms_residual_ps: float
    offset_ps: float = 0.0
    residual_ratio: float = 0.0
    low_confidence: bool = False
    n_samples: int = 0

    def __post_init__(self):
        if not self.tau_days > 0:
            raise InvalidArgumentError(f"tau_days must be positive, got {self.tau_days}")
        if not self.rms_residual_ps >= 0:
            raise InvalidArgumentError("rms_residual_ps must be >= 0")

    @property
    def sensitivity_ps_per_k(self) -> float:
        return self.reference_rtt_ps * self.tdc_ppm_per_k * 1e-6


@dataclass(frozen=True)
class TauGrid:
    """Logarithmic grid of candidate time constants in days."""

    lo_days: float = 0.5
    hi_days: float = 50.0
    n_points: int = 60

    def __post_init__(self):
        if not (0 < self.lo_days < self.hi_days) or self.n_points < 2:
            raise InvalidArgumentError("tau grid needs 0 < lo < hi and at least 2 points")

    def values(self) -> np.ndarray:
        return np.geomspace(self.lo_days, self.hi_days, int(self.n_points))


def lowpass_filter(air: TemperatureSeries, tau_days: float,
                   initial_temp_c: float | None = None) -> TemperatureSeries:
    """Exact first-order lag over possibly irregular timestamps.

    ``T[k] = T[k-1] + (1 - exp(-dt_k / tau)) * (air[k] - T[k-1])`` with
    ``T[0] = initial_temp_c`` (the first air sample when omitted).

    Runs of equal spacing are filtered with :func:`scipy.signal.lfilter`,
    so regularly sampled data with a few gaps costs a handful of calls.
    """
    if len(air) == 0:
        raise InvalidArgumentError("cannot filter an empty temperature series")
    if not tau_days > 0:
        raise InvalidArgumentError(f"tau_days must be positive, got {tau_days}")
    x = air.temps_c
    y = np.empty_like(x)
    y[0] = x[0] if initial_temp_c is None else float(initial_temp_c)
    if x.size > 1:
        tau_s = tau_days * SECONDS_PER_DAY
        dt = np.diff(air.timestamps_s)
        # Boundaries between runs of identical spacing.
        cuts = np.flatnonzero(dt[1:] != dt[:-1]) + 1
        starts = np.concatenate(([0], cuts))
        stops = np.concatenate((cuts, [dt.size]))
        for a, b in zip(starts, stops):
            alpha = -math.expm1(-dt[a] / tau_s)
            keep = 1.0 - alpha
            seg, _ = ssig.lfilter([alpha], [1.0, -keep], x[a + 1:b + 1], zi=[keep * y[a]])
            y[a + 1:b + 1] = seg
    return TemperatureSeries(air.timestamps_s, y)


def spinup_initial_temp(air: TemperatureSeries, tau_days: float,
                        analysis_start_s: float | None = None) -> float:
    """Filter state to start from at the first air sample.

    The mean air temperature over the first ``3 tau`` of data when at least
    that much precedes ``analysis_start_s``; otherwise the first sample.
    """
    if len(air) == 0:
        raise InvalidArgumentError("empty temperature series")
    t0 = air.timestamps_s[0]
    spin = 3.0 * tau_days * SECONDS_PER_DAY
    start = air.timestamps_s[-1] if analysis_start_s is None else analysis_start_s
    if start - t0 >= spin:
        m = air.timestamps_s <= t0 + spin
        return float(air.temps_c[m].mean())
    return float(air.temps_c[0])


def predict_latency_delta(fiber_temp: TemperatureSeries, fit: ThermalFit) -> LatencySeries:
    """Latency change relative to the first fibre-temperature sample."""
    if len(fiber_temp) == 0:
        raise InvalidArgumentError("empty fibre temperature series")
    d = fit.sensitivity_ps_per_k * (fiber_temp.temps_c - fiber_temp.temps_c[0])
    return LatencySeries("model", fiber_temp.timestamps_s, d)


def _overlap(latency: LatencySeries, air: TemperatureSeries):
    t = latency.timestamps_s
    m = (t >= air.timestamps_s[0]) & (t <= air.timestamps_s[-1]) & np.isfinite(latency.rtt_ps)
    return t[m], latency.rtt_ps[m]


def _linear_fit(tf_at, y, rtt_ref):
    """Least-squares (TDC, offset) for fixed filtered temperatures."""
    A = np.column_stack((rtt_ref * 1e-6 * tf_at, np.ones_like(tf_at)))
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return float(coef[0]), float(coef[1]), float(resid @ resid)


class _Objective:
    """Residual sum of squares as a function of tau, for one data set."""

    def __init__(self, latency, air, reference_rtt_ps):
        self.t, self.y = _overlap(latency, air)
        if self.t.size < 2:
            raise InvalidArgumentError(
                f"latency and air temperature overlap in {self.t.size} sample(s); at least 2 needed"
            )
        self.air = air
        self.rtt = reference_rtt_ps
        self.start = float(self.t[0])

    def evaluate(self, tau_days):
        t0c = spinup_initial_temp(self.air, tau_days, self.start)
        tf = lowpass_filter(self.air, tau_days, t0c)
        tf_at = np.interp(self.t, tf.timestamps_s, tf.temps_c)
        tdc, off, sse = _linear_fit(tf_at, self.y, self.rtt)
        return sse, tdc, off, t0c

    def sse(self, tau_days):
        return self.evaluate(tau_days)[0]


def fit_thermal(latency: LatencySeries, air: TemperatureSeries,
                tau_grid: TauGrid = TauGrid(), reference_rtt_ps: float | None = None,
                workers: int = 1) -> ThermalFit:
    """Fit TDC and time constant of the low-pass model to a latency series.

    Parameters
    ----------
    latency : LatencySeries
        Measured latency (absolute or relative, any constant offset is
        absorbed by the fit).
    air : TemperatureSeries
        Outside air temperature covering the latency record. Data before
        the first latency sample is used to initialise the filter.
    tau_grid : TauGrid
        Candidate time constants; the best one is refined by golden-section
        search between its grid neighbours.
    reference_rtt_ps : float, optional
        Round trip the TDC refers to. Defaults to the first latency value,
        which must then be an absolute round trip.
    workers : int
        Threads used for the grid scan. Results do not depend on it.

    Returns
    -------
    ThermalFit

    Raises
    ------
    InvalidArgumentError
        If fewer than two latency samples fall inside the air record.
    """
    if len(air) < 2:
        raise InvalidArgumentError("air temperature series needs at least 2 samples")
    if reference_rtt_ps is None:
        reference_rtt_ps = float(latency.rtt_ps[0]) if len(latency) else 0.0
    if not reference_rtt_ps > 0:
        raise InvalidArgumentError("reference_rtt_ps must be positive")
    obj = _Objective(latency, air, reference_rtt_ps)
    grid = tau_grid.values()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            sse = np.array(list(ex.map(obj.sse, grid)))
    else:
        sse = np.array([obj.sse(tau) for tau in grid])

    i = int(np.argmin(sse))
    logf = lambda u: obj.sse(math.exp(u))  # noqa: E731
    lg = np.log(grid)
    if 0 < i < grid.size - 1 and sse[i] < sse[i - 1] and sse[i] < sse[i + 1]:
        res = optimize.minimize_scalar(logf, bracket=(lg[i - 1], lg[i], lg[i + 1]),
                                       method="golden", tol=1e-10)
    else:
        lo, hi = lg[max(i - 1, 0)], lg[min(i + 1, grid.size - 1)]
        res = optimize.minimize_scalar(logf, bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-10})
    u = float(res.x) if res.fun <= sse[i] else float(lg[i])
    tau = math.exp(u)
    s, tdc, off, t0c = obj.evaluate(tau)
    n = obj.y.size
    rms = math.sqrt(s / n)
    spread = float(np.std(obj.y))
    ratio = rms / spread if spread > 0 else (0.0 if rms == 0 else math.inf)
    return ThermalFit(
        tdc_ppm_per_k=tdc, tau_days=tau, reference_rtt_ps=float(reference_rtt_ps),
        initial_fiber_temp_c=t0c, rms_residual_ps=rms, offset_ps=off,
        residual_ratio=ratio, low_confidence=bool(ratio > LOW_CONFIDENCE_RATIO), n_samples=n,
    )


def modelled_latency(timestamps_s, air: TemperatureSeries, fit: ThermalFit) -> LatencySeries:
    """Fitted model evaluated at ``timestamps_s`` (same offset as the data)."""
    tf = lowpass_filter(air, fit.tau_days, fit.initial_fiber_temp_c)
    t = np.asarray(timestamps_s, dtype=np.float64)
    tf_at = np.interp(t, tf.timestamps_s, tf.temps_c)
    return LatencySeries("model", t, fit.sensitivity_ps_per_k * tf_at + fit.offset_ps)


@dataclass(frozen=True)
class AnnualProjection:
    """Peak-to-peak figures of a projected year.

    The ``full_span_*`` values cover everything after the spin-up prefix,
    which can be longer than the projection window (e.g. 18 months).
    """

    latency_pk_pk_ps: float
    skew_pk_pk_ps: float
    fiber_temp_pk_pk_k: float
    full_span_fiber_temp_pk_pk_k: float = float("nan")
    full_span_latency_pk_pk_ps: float = float("nan")
    fiber_temp: TemperatureSeries | None = field(default=None, repr=False, compare=False)

    def as_tuple(self) -> tuple[float, float, float]:
        return self.latency_pk_pk_ps, self.skew_pk_pk_ps, self.fiber_temp_pk_pk_k


def projection_from_swing(fiber_temp_pk_pk_k: float, fit: ThermalFit,
                          tdc_mismatch_fraction: float) -> AnnualProjection:
    """Latency and skew peak-to-peak implied by a fibre temperature swing."""
    if fiber_temp_pk_pk_k < 0:
        raise InvalidArgumentError("temperature swing must be >= 0")
    lat = abs(fit.sensitivity_ps_per_k) * fiber_temp_pk_pk_k
    return AnnualProjection(lat, abs(tdc_mismatch_fraction) * lat, float(fiber_temp_pk_pk_k),
                            float(fiber_temp_pk_pk_k), lat)


def annual_projection(air_full: TemperatureSeries, fit: ThermalFit, tdc_mismatch_fraction: float,
                      projection_days: float = 365.0) -> AnnualProjection:
    """Project yearly latency and skew variation from an air record.

    The first ``3 tau`` of ``air_full`` only spin up the filter (whose
    initial state is the mean air temperature over that prefix); the
    following ``projection_days`` give the reported peak-to-peak values.

    Raises
    ------
    InvalidArgumentError
        If ``air_full`` is shorter than spin-up plus projection period.
    """
    spin_days = 3.0 * fit.tau_days
    need = spin_days + projection_days
    if len(air_full) < 2 or air_full.span_days < need:
        raise InvalidArgumentError(
            f"air record spans {air_full.span_days:.2f} days; {need:.2f} days required "
            f"({spin_days:.2f} spin-up + {projection_days:.2f} projection)"
        )
    t0 = air_full.timestamps_s[0]
    init = spinup_initial_temp(air_full, fit.tau_days)
    tf = lowpass_filter(air_full, fit.tau_days, init)
    begin = t0 + spin_days * SECONDS_PER_DAY
    after = tf.between(begin, np.inf)
    window = tf.between(begin, begin + projection_days * SECONDS_PER_DAY)
    pk = float(np.ptp(window.temps_c))
    full = float(np.ptp(after.temps_c))
    sens = abs(fit.sensitivity_ps_per_k)
    lat = sens * pk
    return AnnualProjection(lat, abs(tdc_mismatch_fraction) * lat, pk, full, sens * full, after)
