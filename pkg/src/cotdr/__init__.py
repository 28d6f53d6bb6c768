"""Correlation-OTDR latency toolkit.

Simulate reflected PRBS-burst traces, recover round-trip latencies with
sub-sample accuracy, derive inter-fibre skew and fit a first-order thermal
lag model to latency drift.
"""
from .analytics import (LatencyRecord, LatencySeries, latency_sensitivity, relative_series,
                        skew_series)
from .channel import (FiberPlant, Reflector, TraceAcquisition, default_plant_from_paper,
                      simulate_averaged_trace)
from .correlator import (CorrelationPeak, CorrelationTrace, PeakDetectConfig, cross_correlate,
                         detect_peaks, equalized_correlation, measure_latencies, measure_peaks,
                         refine_cluster, refine_peak, suppress_cursors, windowed_correlation,
                         windows_around)
from .errors import (CotdrError, FitError, FormatError, InvalidArgumentError, MissingReferenceError,
                     PeakAssignmentError, UnsupportedVersionError)
from .signal import (BurstSpec, PhysicalConstants, PrbsSpec, SampledWaveform, build_burst,
                     generate_prbs)
from .synthetic import latency_campaign, synthetic_air_temperature
from .thermal import (SECONDS_PER_DAY, AnnualProjection, TauGrid, TemperatureSeries, ThermalFit,
                      annual_projection, fit_thermal, lowpass_filter, modelled_latency,
                      predict_latency_delta, projection_from_swing, spinup_initial_temp)

__version__ = "0.1.0"
