"""
File formats: DWD 10-minute air temperature, latency CSV, binary traces and
thermal-fit reports.

Binary trace layout (all little endian)::

    offset  size  field
    0       8     magic  b"COTDRTRC"
    8       4     uint32 format version (1)
    12      4     uint32 header size in bytes (40)
    16      8     float64 sample_rate_hz
    24      8     float64 start_time_ps
    32      8     uint64 sample_count
    40      8*N   float64 samples
"""
from __future__ import annotations

import csv
import io
import json
import math
import struct
import warnings
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta, timezone

import numpy as np

from .analytics import LatencyRecord
from .errors import FormatError, InvalidArgumentError, UnsupportedVersionError
from .signal import SampledWaveform
from .thermal import TemperatureSeries, ThermalFit

TRACE_MAGIC = b"COTDRTRC"
TRACE_VERSION = 1
_TRACE_HEADER = struct.Struct("<8sIIddQ")

DWD_MISSING = -999.0
# Legacy DWD archives are stamped in MEZ (UTC+1, no daylight saving).
_TIMEZONES = {"utc": timedelta(0), "mez": timedelta(hours=1)}

LATENCY_COLUMNS = ("timestamp_s", "fiber", "rtt_ps")


class DataWarning(UserWarning):
    """Recoverable oddity in an input file (duplicates, ordering)."""


# --------------------------------------------------------------------------
# DWD 10-minute air temperature
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DwdRecord:
    station_id: int
    measurement_time: datetime
    quality: int
    air_temp_c: float

    @property
    def timestamp_s(self) -> float:
        return self.measurement_time.timestamp()


@dataclass
class DwdParseResult:
    """Outcome of parsing one DWD file.

    ``errors`` lists ``(line_number, message)`` for skipped rows; line
    numbers are 1-based and count the header.
    """

    records: list = field(default_factory=list)
    n_missing: int = 0
    n_duplicates: int = 0
    errors: list = field(default_factory=list)

    @property
    def n_errors(self) -> int:
        return len(self.errors)

    @property
    def series(self) -> TemperatureSeries:
        return TemperatureSeries([r.timestamp_s for r in self.records],
                                 [r.air_temp_c for r in self.records])


def parse_dwd_timestamp(text: str, tz: str = "utc") -> datetime:
    """``YYYYMMDDHHMM`` (optionally ``YYYYMMDDHH:MM``) to an aware UTC datetime."""
    try:
        offset = _TIMEZONES[tz.lower()]
    except KeyError:
        raise InvalidArgumentError(f"unknown timezone {tz!r}; expected one of {sorted(_TIMEZONES)}") from None
    s = text.strip().replace(":", "")
    if len(s) != 12 or not s.isdigit():
        raise FormatError(f"bad MESS_DATUM {text.strip()!r}")
    local = datetime.strptime(s, "%Y%m%d%H%M")
    return (local - offset).replace(tzinfo=timezone.utc)


def parse_dwd_10min(stream, tz: str = "utc") -> DwdParseResult:
    """Parse a DWD ``10minutenwerte_TU`` product file.

    Columns are located by header name, so extra or reordered columns are
    harmless. Rows with ``TT_10 == -999`` are dropped and counted; rows that
    fail to parse are skipped and reported with their line number. The
    result is sorted by time; for repeated timestamps the first row in file
    order wins and a :class:`DataWarning` is issued.

    Raises
    ------
    FormatError
        If the header is missing or lacks STATIONS_ID, MESS_DATUM or TT_10.
    """
    if tz.lower() not in _TIMEZONES:
        raise InvalidArgumentError(f"unknown timezone {tz!r}; expected one of {sorted(_TIMEZONES)}")
    lines = iter(stream)
    header_line = next(lines, None)
    if header_line is None or not header_line.strip():
        raise FormatError("DWD file has no header line")
    names = [c.strip().upper() for c in header_line.strip().split(";")]
    col = {n: i for i, n in enumerate(names) if n}
    for need in ("STATIONS_ID", "MESS_DATUM", "TT_10"):
        if need not in col:
            raise FormatError(f"DWD header lacks column {need}: {header_line.strip()!r}")
    i_st, i_dt, i_tt = col["STATIONS_ID"], col["MESS_DATUM"], col["TT_10"]
    i_qn = col.get("QN")
    width = max(i_st, i_dt, i_tt, i_qn or 0) + 1

    res = DwdParseResult()
    seen = {}
    for lineno, raw in enumerate(lines, start=2):
        line = raw.strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(";")]
        if len(parts) < width:
            res.errors.append((lineno, f"expected at least {width} fields, got {len(parts)}"))
            continue
        try:
            station = int(parts[i_st])
            when = parse_dwd_timestamp(parts[i_dt], tz)
            temp = float(parts[i_tt])
            quality = int(parts[i_qn]) if i_qn is not None and parts[i_qn] else -1
        except (ValueError, FormatError) as exc:
            res.errors.append((lineno, str(exc)))
            continue
        if temp == DWD_MISSING or not math.isfinite(temp):
            res.n_missing += 1
            continue
        if when in seen:
            res.n_duplicates += 1
            warnings.warn(f"line {lineno}: duplicate timestamp {when:%Y-%m-%d %H:%M} "
                          f"(first seen on line {seen[when][0]}), keeping the first", DataWarning,
                          stacklevel=2)
            continue
        seen[when] = (lineno, DwdRecord(station, when, quality, temp))
    res.records = [rec for _, (_, rec) in sorted(seen.items(), key=lambda kv: kv[0])]
    return res


def write_dwd_10min(stream, records) -> None:
    """Write records in the DWD layout (UTC stamps); used for fixtures."""
    stream.write("STATIONS_ID;MESS_DATUM;  QN;PP_10;TT_10;TM5_10;RF_10;TD_10;eor\n")
    for r in records:
        stream.write(f"{r.station_id:>11d};{r.measurement_time:%Y%m%d%H%M};{r.quality:>5d};"
                     f" -999;{r.air_temp_c:>6.1f}; -999; -999; -999;eor\n")


# --------------------------------------------------------------------------
# Latency CSV
# --------------------------------------------------------------------------

def write_latency_csv(stream, records, header: bool = True) -> None:
    """Write records with 17 significant digits so reading back is exact."""
    w = csv.writer(stream, lineterminator="\n")
    if header:
        w.writerow(LATENCY_COLUMNS)
    for r in records:
        w.writerow((format(r.timestamp_s, ".17g"), r.fiber, format(r.rtt_ps, ".17g")))


def read_latency_csv(stream) -> list[LatencyRecord]:
    """Read a latency CSV.

    Records are returned in file order. Decreasing timestamps are accepted
    but reported through a :class:`DataWarning`.

    Raises
    ------
    FormatError
        On a missing header or a malformed row (message carries the line).
    """
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None:
        raise FormatError("latency CSV has no header")
    cols = [h.strip() for h in header]
    try:
        idx = [cols.index(c) for c in LATENCY_COLUMNS]
    except ValueError:
        raise FormatError(f"latency CSV header must contain {LATENCY_COLUMNS}, got {cols}") from None
    out = []
    prev = -math.inf
    disorder = 0
    for row in reader:
        lineno = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        try:
            t = float(row[idx[0]])
            fiber = row[idx[1]].strip()
            rtt = float(row[idx[2]])
            if not fiber:
                raise ValueError("empty fiber label")
            rec = LatencyRecord(t, fiber, rtt)
        except (ValueError, IndexError) as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
        if t < prev:
            disorder += 1
        prev = t
        out.append(rec)
    if disorder:
        warnings.warn(f"latency CSV has {disorder} out-of-order timestamp(s)", DataWarning, stacklevel=2)
    return out


# --------------------------------------------------------------------------
# Traces
# --------------------------------------------------------------------------

def write_trace(stream, wf: SampledWaveform) -> None:
    """Write ``wf`` in the binary trace format (see module docstring)."""
    stream.write(_TRACE_HEADER.pack(TRACE_MAGIC, TRACE_VERSION, _TRACE_HEADER.size,
                                    wf.sample_rate_hz, wf.start_time_ps, len(wf)))
    stream.write(np.ascontiguousarray(wf.samples, dtype="<f8").tobytes())


def read_trace(stream) -> SampledWaveform:
    """Read a binary trace.

    Raises
    ------
    UnsupportedVersionError
        For a version other than 1.
    FormatError
        For a bad magic, short header or truncated payload.
    """
    head = stream.read(_TRACE_HEADER.size)
    if len(head) < _TRACE_HEADER.size:
        raise FormatError(f"trace header truncated: {len(head)} of {_TRACE_HEADER.size} bytes")
    magic, version, hsize, fs, start, count = _TRACE_HEADER.unpack(head)
    if magic != TRACE_MAGIC:
        raise FormatError(f"not a trace file (magic {magic!r})")
    if version != TRACE_VERSION:
        raise UnsupportedVersionError(f"trace format version {version} is not supported (expected {TRACE_VERSION})")
    if hsize > _TRACE_HEADER.size:
        stream.read(hsize - _TRACE_HEADER.size)
    payload = stream.read(8 * count)
    if len(payload) != 8 * count:
        raise FormatError(f"trace payload truncated: expected {count} samples, got {len(payload) // 8}")
    if not fs > 0:
        raise FormatError(f"invalid sample rate {fs} in trace header")
    return SampledWaveform(fs, start, np.frombuffer(payload, dtype="<f8"))


def write_trace_csv(stream, wf: SampledWaveform, start: int = 0, stop: int | None = None) -> None:
    """Debug export of ``samples[start:stop]`` as ``time_ps,amplitude``."""
    stop = len(wf) if stop is None else min(stop, len(wf))
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(("time_ps", "amplitude"))
    for i in range(start, stop):
        w.writerow((format(wf.time_of(i), ".17g"), format(wf.samples[i], ".17g")))


# --------------------------------------------------------------------------
# Fit reports (JSON lines)
# --------------------------------------------------------------------------

def write_fit_report(stream, fit: ThermalFit, **extra) -> None:
    """Append one ``{"kind": "thermal_fit", ...}`` JSON line."""
    doc = {"kind": "thermal_fit", **asdict(fit), **extra}
    stream.write(json.dumps(doc, sort_keys=True) + "\n")


def read_fit_report(stream) -> ThermalFit:
    """Last ``thermal_fit`` line of a JSON-lines report."""
    found = None
    names = set(ThermalFit.__dataclass_fields__)
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
        if isinstance(doc, dict) and doc.get("kind") == "thermal_fit":
            found = (lineno, doc)
    if found is None:
        raise FormatError("no thermal_fit record in report")
    lineno, doc = found
    try:
        return ThermalFit(**{k: v for k, v in doc.items() if k in names})
    except (TypeError, InvalidArgumentError) as exc:
        raise FormatError(f"line {lineno}: {exc}") from None


def dumps_records(records) -> str:
    """Latency CSV text of ``records`` (convenience for tests and demos)."""
    buf = io.StringIO()
    write_latency_csv(buf, records)
    return buf.getvalue()
