"""
Why buried fibre latency follows the weather, slowly
====================================================

A buried cable sees a low-passed version of the air temperature. With a
time constant of about two weeks the daily cycle is almost gone, while
the annual cycle passes nearly unchanged. Through the temperature delay
coefficient (TDC) the fibre temperature becomes a latency change.

This demo fits TDC and time constant to a synthetic two-week latency
record and projects the annual latency swing and the skew between two
fibres whose TDCs differ by 1 %.
"""
import sys
from pathlib import Path

import numpy as np

from cotdr import (SECONDS_PER_DAY, ThermalFit, annual_projection, fit_thermal, latency_campaign,
                   lowpass_filter, modelled_latency, projection_from_swing, spinup_initial_temp,
                   synthetic_air_temperature)
from cotdr.svgplot import line_plot_svg

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(exist_ok=True)

# %% 18 months of 10-minute air temperature
air = synthetic_air_temperature(550, seed=3)
tau = 12.7
fibre = lowpass_filter(air, tau, spinup_initial_temp(air, tau))
days = (air.timestamps_s - air.timestamps_s[0]) / SECONDS_PER_DAY
(out / "temperature.svg").write_text(line_plot_svg(
    [("air", days, air.temps_c), ("fibre", days, fibre.temps_c)],
    "Air vs buried-fibre temperature", "days", "degC"))

# %% Gain of the first-order lag at one cycle per day and one per year
for period in (1.0, 365.0):
    print(f"gain at {period:5.0f} day period: {1 / np.sqrt(1 + (2 * np.pi * tau / period) ** 2):.4f}")

# %% A two-week latency campaign in July, with 5 ps measurement noise
rtt = 83.2547e6
start = air.timestamps_s[0] + 187 * SECONDS_PER_DAY
lat = latency_campaign(air, {"fiber1": (rtt, 7.5)}, tau, start, 14, noise_ps=5.0, seed=1)["fiber1"]
fit = fit_thermal(lat, air, reference_rtt_ps=rtt)
print(f"\nfit: TDC {fit.tdc_ppm_per_k:.3f} ppm/K, tau {fit.tau_days:.2f} days, "
      f"residual {fit.rms_residual_ps:.2f} ps, low confidence: {fit.low_confidence}")
model = modelled_latency(lat.timestamps_s, air, fit)
d = (lat.timestamps_s - start) / SECONDS_PER_DAY
(out / "fit.svg").write_text(line_plot_svg(
    [("measured", d, lat.rtt_ps - rtt), ("model", d, model.rtt_ps - rtt)],
    "Latency: measured vs low-pass model", "days", "ps"))

# %% Annual projection from this air record
p = annual_projection(air, fit, 0.01)
print(f"\nannual fibre-temperature swing {p.fiber_temp_pk_pk_k:.1f} K -> latency "
      f"{p.latency_pk_pk_ps / 1000:.2f} ns, skew at 1% TDC mismatch {p.skew_pk_pk_ps:.0f} ps")

# %% The same arithmetic for a 28 K swing
q = projection_from_swing(28.0, ThermalFit(7.5, tau, rtt, 0.0, 0.0), 0.01)
print(f"28 K swing -> {q.latency_pk_pk_ps / 1000:.2f} ns latency, {q.skew_pk_pk_ps:.1f} ps skew")
