"""Relative latency, inter-fibre skew and thermal sensitivity conversions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError

# Round-trip sensitivity of the 25 m lab jumper as quoted from the
# literature; kept next to the formula because the two disagree.
JUMPER_CITED_PS_PER_K = 10.0


@dataclass(frozen=True)
class LatencyRecord:
    timestamp_s: float
    fiber: str
    rtt_ps: float

    def __post_init__(self):
        if not self.rtt_ps > 0:
            raise InvalidArgumentError(f"rtt_ps must be positive, got {self.rtt_ps}")


@dataclass(frozen=True, eq=False)
class LatencySeries:
    """Time-ordered latency values of one fibre (or one fibre pair).

    ``rtt_ps`` may hold absolute round trips, deltas or skews; only the
    timestamps are constrained (strictly increasing). Gaps are allowed.
    """

    fiber: str
    timestamps_s: np.ndarray = field(repr=False)
    rtt_ps: np.ndarray = field(repr=False)

    def __post_init__(self):
        t = np.array(self.timestamps_s, dtype=np.float64, copy=True).reshape(-1)
        v = np.array(self.rtt_ps, dtype=np.float64, copy=True).reshape(-1)
        if t.shape != v.shape:
            raise InvalidArgumentError("timestamps and values differ in length")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise InvalidArgumentError(f"timestamps of series {self.fiber!r} are not strictly increasing")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "timestamps_s", t)
        object.__setattr__(self, "rtt_ps", v)

    def __len__(self):
        return self.timestamps_s.size

    @classmethod
    def from_records(cls, records, fiber: str | None = None) -> "LatencySeries":
        """Collect one fibre's records, sorted by time.

        With ``fiber=None`` all records must belong to the same fibre.
        """
        recs = list(records)
        if fiber is None:
            names = {r.fiber for r in recs}
            if len(names) > 1:
                raise InvalidArgumentError(f"records span several fibres: {sorted(names)}")
            fiber = names.pop() if names else ""
        recs = sorted((r for r in recs if r.fiber == fiber), key=lambda r: r.timestamp_s)
        return cls(fiber, [r.timestamp_s for r in recs], [r.rtt_ps for r in recs])

    def to_records(self) -> list[LatencyRecord]:
        return [LatencyRecord(float(t), self.fiber, float(v)) for t, v in zip(self.timestamps_s, self.rtt_ps)]

    def with_values(self, values, fiber: str | None = None) -> "LatencySeries":
        return LatencySeries(self.fiber if fiber is None else fiber, self.timestamps_s, values)


def relative_series(series: LatencySeries) -> LatencySeries:
    """Latency change since the first record; the first value is exactly 0."""
    if len(series) == 0:
        raise InvalidArgumentError("cannot reference an empty series")
    return series.with_values(series.rtt_ps - series.rtt_ps[0])


def pair_records(ta, tb, tolerance_s: float) -> list[tuple[int, int]]:
    """Nearest-neighbour matching of two timestamp arrays.

    Candidate pairs within ``tolerance_s`` are taken closest-first (ties by
    pair midpoint); each record is used at most once. Returned pairs are
    sorted by the index into ``ta``.
    """
    ta = np.asarray(ta, dtype=np.float64)
    tb = np.asarray(tb, dtype=np.float64)
    if ta.size == 0 or tb.size == 0:
        return []
    cands = []
    for i in range(ta.size):
        lo = int(np.searchsorted(tb, ta[i] - tolerance_s, side="left"))
        hi = int(np.searchsorted(tb, ta[i] + tolerance_s, side="right"))
        for j in range(lo, hi):
            cands.append((abs(ta[i] - tb[j]), ta[i] + tb[j], i, j))
    cands.sort()
    used_a, used_b, pairs = set(), set(), []
    for _, _, i, j in cands:
        if i not in used_a and j not in used_b:
            used_a.add(i)
            used_b.add(j)
            pairs.append((i, j))
    return sorted(pairs)


def skew_series(a: LatencySeries, b: LatencySeries, align_tolerance_s: float = 60.0,
                offset_minimum: bool = True) -> LatencySeries:
    """Differential latency ``a - b`` on paired timestamps.

    Each output point sits at the midpoint of its two timestamps. With
    ``offset_minimum`` the series is shifted so its minimum is 0.

    Raises
    ------
    InvalidArgumentError
        If no records pair up within the tolerance.
    """
    pairs = pair_records(a.timestamps_s, b.timestamps_s, align_tolerance_s)
    if not pairs:
        raise InvalidArgumentError(
            f"no records of {a.fiber!r} and {b.fiber!r} align within {align_tolerance_s} s"
        )
    i, j = np.array(pairs).T
    t = 0.5 * (a.timestamps_s[i] + b.timestamps_s[j])
    skew = a.rtt_ps[i] - b.rtt_ps[j]
    order = np.argsort(t, kind="stable")
    t, skew = t[order], skew[order]
    if offset_minimum:
        skew = skew - skew.min()
    return LatencySeries(f"{a.fiber}-{b.fiber}", t, skew)


def latency_sensitivity(rtt_ps: float, tdc_ppm_per_k: float) -> float:
    """Latency change per kelvin in ps/K: ``rtt * TDC * 1e-6``."""
    if rtt_ps < 0 or tdc_ppm_per_k < 0:
        raise InvalidArgumentError("rtt_ps and tdc_ppm_per_k must be non-negative")
    return rtt_ps * tdc_ppm_per_k * 1e-6
