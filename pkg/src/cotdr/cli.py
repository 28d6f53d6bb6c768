"""
``cotdr`` command line: simulate | measure | analyze | fit | predict.

Exit status: 0 success, 1 usage error, 2 I/O or format error (including
invalid arguments), 3 analysis failure (peak assignment, fit).
"""
from __future__ import annotations

import itertools
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import click
import numpy as np

from . import analytics, ingest, synthetic, thermal
from .channel import REFERENCE_LABEL, simulate_averaged_trace
from .config import RunConfig
from .correlator import measure_peaks
from .errors import CotdrError, FitError, FormatError, InvalidArgumentError, PeakAssignmentError
from .svgplot import line_plot_svg

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_ANALYSIS = 0, 1, 2, 3
SIDECAR_SUFFIX = ".truth.json"


def _load_config(path) -> RunConfig:
    return RunConfig.paper() if path is None else RunConfig.load(path)


def _out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _dump_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _fmt(v) -> str:
    return format(float(v), ".17g")


def _write_columns(path: Path, header, *columns) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*columns):
            fh.write(",".join(c if isinstance(c, str) else _fmt(c) for c in row) + "\n")


def _read_dwd(path, tz) -> thermal.TemperatureSeries:
    with open(path, encoding="latin-1") as fh:
        res = ingest.parse_dwd_10min(fh, tz)
    if res.n_errors:
        click.echo(f"{path}: skipped {res.n_errors} malformed row(s); first on line {res.errors[0][0]}",
                   err=True)
    if res.n_missing:
        click.echo(f"{path}: dropped {res.n_missing} row(s) with missing temperature", err=True)
    return res.series


def _read_latency(path) -> list:
    with open(path, encoding="utf-8", newline="") as fh:
        return ingest.read_latency_csv(fh)


config_option = click.option("--config", "config_path", type=click.Path(dir_okay=False),
                             default=None, help="JSON run configuration (default: bundled paper.cfg).")
out_option = click.option("--out", "out_dir", type=click.Path(file_okay=False), default=".",
                          show_default=True, help="Output directory.")
parallel_option = click.option("--parallel", type=click.IntRange(min=1), default=1, show_default=True,
                               help="Worker threads for peak refinement / tau grid.")
tz_option = click.option("--timezone", "tz", type=click.Choice(["utc", "mez"]), default="utc",
                         show_default=True, help="Time zone of DWD timestamps.")


@click.group()
@click.version_option(package_name="artifact")
def cli():
    """Correlation-OTDR latency toolkit."""


@cli.command()
@config_option
@click.option("--seed", type=int, default=None, help="Noise seed (overrides the config).")
@click.option("--noise", type=float, default=None, help="Per-trace noise sigma (overrides the config).")
@out_option
@click.option("--name", default="trace", show_default=True, help="Base name of the trace file.")
@click.option("--timestamp", type=float, default=None,
              help="Acquisition time (UTC s) stored in the sidecar; default: campaign start.")
@click.option("--campaign/--no-campaign", default=False,
              help="Also write a synthetic DWD air record and a thermal latency campaign CSV.")
def simulate(config_path, seed, noise, out_dir, name, timestamp, campaign):
    """Simulate an averaged trace plus a ground-truth sidecar."""
    cfg = _load_config(config_path)
    out = _out_dir(out_dir)
    plant = cfg.plant.build(seed=seed, noise_sigma=noise)
    burst = cfg.burst.build()
    trace = simulate_averaged_trace(burst, plant, cfg.acquisition)
    trace_path = out / f"{name}.bin"
    with open(trace_path, "wb") as fh:
        ingest.write_trace(fh, trace)
    lat = plant.latencies()
    ref = lat[REFERENCE_LABEL]
    ts = cfg.campaign.campaign_start_s if timestamp is None else timestamp
    _dump_json(out / f"{name}{SIDECAR_SUFFIX}", {
        "timestamp_s": ts,
        "rng_seed": plant.rng_seed,
        "noise_sigma": plant.noise_sigma,
        "n_traces": cfg.acquisition.n_traces,
        "reflectors_ps": lat,
        "latencies_ps": {k: v - ref for k, v in lat.items() if k != REFERENCE_LABEL},
    })
    click.echo(f"wrote {trace_path} ({len(trace)} samples, {len(lat)} reflectors)")
    if campaign:
        _simulate_campaign(cfg, plant, out, cfg.plant.rng_seed if seed is None else seed)


def _simulate_campaign(cfg: RunConfig, plant, out: Path, seed: int) -> None:
    c = cfg.campaign
    air = synthetic.synthetic_air_temperature(
        c.air_days, 600.0, c.start_s, c.mean_c, c.annual_pk_pk_k, daily_amplitude_k=c.daily_amplitude_k,
        weather_sigma_k=c.weather_sigma_k, weather_corr_days=c.weather_corr_days, seed=seed,
    )
    # Quantise like the archive does so the written file is the whole truth.
    air = thermal.TemperatureSeries(air.timestamps_s, np.round(air.temps_c, 1))
    recs = [ingest.DwdRecord(c.station_id, datetime.fromtimestamp(t, timezone.utc), 3, v)
            for t, v in zip(air.timestamps_s, air.temps_c)]
    with open(out / "air_dwd.txt", "w", encoding="latin-1") as fh:
        ingest.write_dwd_10min(fh, recs)
    lat = plant.latencies()
    fibers = {k: (lat[k] - lat[REFERENCE_LABEL], tdc) for k, tdc in c.tdc_ppm_per_k.items()}
    gap = None
    if c.gap_start_days is not None:
        gap = (c.campaign_start_s + c.gap_start_days * 86_400.0, c.gap_days * 86_400.0)
    series = synthetic.latency_campaign(air, fibers, c.tau_days, c.campaign_start_s, c.duration_days,
                                        c.interval_s, c.noise_ps, seed, gap)
    records = sorted((r for s in series.values() for r in s.to_records()),
                     key=lambda r: (r.timestamp_s, r.fiber))
    with open(out / "campaign.csv", "w", encoding="utf-8", newline="") as fh:
        ingest.write_latency_csv(fh, records)
    _dump_json(out / "campaign.truth.json", {
        "tau_days": c.tau_days, "tdc_ppm_per_k": c.tdc_ppm_per_k, "noise_ps": c.noise_ps,
        "start_s": c.campaign_start_s, "duration_days": c.duration_days,
    })
    click.echo(f"wrote {out / 'air_dwd.txt'} ({len(air)} rows) and {out / 'campaign.csv'} "
               f"({len(records)} records)")


@cli.command()
@click.argument("trace_path", type=click.Path(dir_okay=False))
@config_option
@out_option
@parallel_option
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None,
              help="Latency CSV to append to (default: OUT/measurements.csv).")
@click.option("--timestamp", type=float, default=None,
              help="Record time (UTC s); default: from the trace sidecar, else 0.")
def measure(trace_path, config_path, out_dir, parallel, csv_path, timestamp):
    """Measure per-fibre round-trip latencies from a trace file."""
    cfg = _load_config(config_path)
    with open(trace_path, "rb") as fh:
        trace = ingest.read_trace(fh)
    sidecar = Path(str(Path(trace_path).with_suffix("")) + SIDECAR_SUFFIX)
    if timestamp is None:
        timestamp = 0.0
        if sidecar.exists():
            timestamp = float(json.loads(sidecar.read_text(encoding="utf-8"))["timestamp_s"])
    burst = cfg.burst.build()
    windows = cfg.windows.build(cfg.plant.build())
    peaks = measure_peaks(trace, burst, cfg.peaks, windows, workers=parallel)
    ref = peaks[REFERENCE_LABEL].refined_lag_ps
    click.echo(f"{'window':<10} {'lag_ps':>18} {'latency_ps':>18} {'amplitude':>10} {'residual':>10}")
    records = []
    for label, p in sorted(peaks.items(), key=lambda kv: kv[1].refined_lag_ps):
        rel = p.refined_lag_ps - ref
        click.echo(f"{label:<10} {p.refined_lag_ps:18.3f} {rel:18.3f} {p.amplitude:10.4g} "
                   f"{p.fit_rms_residual:10.3g}")
        if label != REFERENCE_LABEL:
            records.append(analytics.LatencyRecord(timestamp, label, rel))
    target = Path(csv_path) if csv_path else _out_dir(out_dir) / "measurements.csv"
    fresh = not target.exists() or target.stat().st_size == 0
    with open(target, "a", encoding="utf-8", newline="") as fh:
        ingest.write_latency_csv(fh, records, header=fresh)


@cli.command()
@click.argument("latency_csv", type=click.Path(dir_okay=False))
@click.option("--fibers", default=None, help="Comma-separated fibre labels (default: all).")
@config_option
@out_option
def analyze(latency_csv, fibers, config_path, out_dir):
    """Relative latency per fibre and pairwise skew, as CSV and SVG."""
    cfg = _load_config(config_path)
    out = _out_dir(out_dir)
    records = _read_latency(latency_csv)
    labels = sorted({r.fiber for r in records}) if fibers is None else [f.strip() for f in fibers.split(",")]
    series = {}
    for label in labels:
        s = analytics.LatencySeries.from_records(records, fiber=label)
        if len(s) == 0:
            raise InvalidArgumentError(f"no records for fibre {label!r}")
        series[label] = s
    day0 = min(s.timestamps_s[0] for s in series.values())
    rel_plot = []
    for label, s in series.items():
        r = analytics.relative_series(s)
        _write_columns(out / f"relative_{label}.csv", ("timestamp_s", "delta_ps"), r.timestamps_s, r.rtt_ps)
        rel_plot.append((label, (r.timestamps_s - day0) / 86_400.0, r.rtt_ps))
        click.echo(f"{label}: {len(r)} records, relative latency range "
                   f"{r.rtt_ps.min():.1f} .. {r.rtt_ps.max():.1f} ps")
    (out / "relative.svg").write_text(
        line_plot_svg(rel_plot, "Relative round-trip latency", "time (days)", "latency change (ps)"),
        encoding="utf-8")
    skew_plot = []
    for a, b in itertools.combinations(labels, 2):
        sk = analytics.skew_series(series[a], series[b], cfg.thermal.align_tolerance_s)
        _write_columns(out / f"skew_{a}_{b}.csv", ("timestamp_s", "skew_ps"), sk.timestamps_s, sk.rtt_ps)
        skew_plot.append((sk.fiber, (sk.timestamps_s - day0) / 86_400.0, sk.rtt_ps))
        click.echo(f"skew {a}-{b}: peak-to-peak {np.ptp(sk.rtt_ps):.1f} ps")
    if skew_plot:
        (out / "skew.svg").write_text(
            line_plot_svg(skew_plot, "Skew offset by minimum", "time (days)", "skew (ps)"),
            encoding="utf-8")


@cli.command()
@click.argument("latency_csv", type=click.Path(dir_okay=False))
@click.argument("dwd_file", type=click.Path(dir_okay=False))
@config_option
@out_option
@parallel_option
@tz_option
@click.option("--fiber", default=None, help="Fibre to fit (default: thermal.fit_fiber).")
def fit(latency_csv, dwd_file, config_path, out_dir, parallel, tz, fiber):
    """Fit TDC and low-pass time constant to one fibre's latency."""
    cfg = _load_config(config_path)
    out = _out_dir(out_dir)
    label = fiber or cfg.thermal.fit_fiber
    series = analytics.LatencySeries.from_records(_read_latency(latency_csv), fiber=label)
    if len(series) == 0:
        raise InvalidArgumentError(f"no records for fibre {label!r}")
    air = _read_dwd(dwd_file, tz)
    result = thermal.fit_thermal(series, air, cfg.thermal.grid(), cfg.thermal.reference_rtt_ps, parallel)
    with open(out / "fit.jsonl", "w", encoding="utf-8") as fh:
        ingest.write_fit_report(fh, result, fiber=label)
    model = thermal.modelled_latency(series.timestamps_s, air, result)
    t0 = series.timestamps_s[0]
    base = series.rtt_ps[0]
    _write_columns(out / "fit_overlay.csv", ("timestamp_s", "measured_ps", "model_ps"),
                   series.timestamps_s, series.rtt_ps - base, model.rtt_ps - base)
    days = (series.timestamps_s - t0) / 86_400.0
    (out / "fit_overlay.svg").write_text(line_plot_svg(
        [("measured", days, series.rtt_ps - base), ("model", days, model.rtt_ps - base)],
        f"Latency of {label}: measured vs low-pass model", "time (days)", "latency change (ps)"),
        encoding="utf-8")
    click.echo(f"{label}: TDC {result.tdc_ppm_per_k:.4f} ppm/K, tau {result.tau_days:.3f} days, "
               f"rms residual {result.rms_residual_ps:.2f} ps")
    if result.low_confidence:
        click.echo(f"warning: low confidence fit (residual ratio {result.residual_ratio:.2f})", err=True)


@cli.command()
@click.argument("dwd_file", type=click.Path(dir_okay=False))
@click.argument("fit_report", type=click.Path(dir_okay=False))
@config_option
@out_option
@tz_option
def predict(dwd_file, fit_report, config_path, out_dir, tz):
    """Project annual fibre temperature, latency and skew swings."""
    cfg = _load_config(config_path)
    out = _out_dir(out_dir)
    with open(fit_report, encoding="utf-8") as fh:
        result = ingest.read_fit_report(fh)
    air = _read_dwd(dwd_file, tz)
    proj = thermal.annual_projection(air, result, cfg.thermal.tdc_mismatch_fraction,
                                     cfg.thermal.projection_days)
    tf = proj.fiber_temp
    _write_columns(out / "fiber_temperature.csv", ("timestamp_s", "fiber_temp_c"), tf.timestamps_s, tf.temps_c)
    doc = {
        "latency_pk_pk_ps": proj.latency_pk_pk_ps,
        "skew_pk_pk_ps": proj.skew_pk_pk_ps,
        "fiber_temp_pk_pk_k": proj.fiber_temp_pk_pk_k,
        "full_span_fiber_temp_pk_pk_k": proj.full_span_fiber_temp_pk_pk_k,
        "full_span_latency_pk_pk_ps": proj.full_span_latency_pk_pk_ps,
        "tdc_mismatch_fraction": cfg.thermal.tdc_mismatch_fraction,
        "projection_days": cfg.thermal.projection_days,
        "tau_days": result.tau_days,
        "tdc_ppm_per_k": result.tdc_ppm_per_k,
    }
    _dump_json(out / "projection.json", doc)
    days = (air.timestamps_s - air.timestamps_s[0]) / 86_400.0
    full = thermal.lowpass_filter(air, result.tau_days, thermal.spinup_initial_temp(air, result.tau_days))
    (out / "fiber_temperature.svg").write_text(line_plot_svg(
        [("air", days, air.temps_c), ("fibre (low-pass)", days, full.temps_c)],
        "Air and modelled fibre temperature", "time (days)", "temperature (degC)"), encoding="utf-8")
    click.echo(f"fibre temperature pk-pk {proj.fiber_temp_pk_pk_k:.2f} K "
               f"(full span {proj.full_span_fiber_temp_pk_pk_k:.2f} K); latency pk-pk "
               f"{proj.latency_pk_pk_ps / 1000:.2f} ns; skew pk-pk {proj.skew_pk_pk_ps:.1f} ps")


def _status_for(exc: BaseException) -> int:
    if isinstance(exc, (PeakAssignmentError, FitError)):
        return EXIT_ANALYSIS
    if isinstance(exc, (FormatError, InvalidArgumentError, OSError)):
        return EXIT_IO
    if isinstance(exc, CotdrError):
        return EXIT_ANALYSIS
    return EXIT_IO


def main(argv=None) -> int:
    """Run the CLI and return its exit status instead of exiting."""
    try:
        cli.main(args=argv, prog_name="cotdr", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except (CotdrError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return _status_for(exc)
    return EXIT_OK


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
