"""Planar magnetic field schedules.

A schedule is a contiguous sequence of segments, each producing a field of
fixed magnitude whose direction is constant, rotating at a fixed rate, or
sweeping sinusoidally about a base axis.
"""

from __future__ import annotations

import bisect
import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

DEFAULT_AMPLITUDE_MT = 5.0
DEFAULT_ANGULAR_AMPLITUDE = math.pi / 4
# Boundary slack when comparing segment edges and query times.
_TIME_TOL = 1e-9

FIELD_LOG_HEADER = ("time_s", "Bx_mT", "By_mT")


class FieldError(ValueError):
    """Invalid segment or schedule definition."""


class FieldRangeError(FieldError):
    """Query time outside the schedule span."""


class SegmentKind(str, enum.Enum):
    CONSTANT = "constant"
    ROTATING = "rotating"
    OSCILLATING = "oscillating"


@dataclass(frozen=True)
class FieldSegment:
    kind: SegmentKind
    t_start: float
    t_end: float
    amplitude: float = DEFAULT_AMPLITUDE_MT
    base_angle: float = 0.0
    frequency: float = 0.0
    angular_amplitude: float = DEFAULT_ANGULAR_AMPLITUDE
    rotation_sign: int = 1
    phase: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", SegmentKind(self.kind))
        if not self.t_end > self.t_start:
            raise FieldError(f"segment needs t_end > t_start, got [{self.t_start}, {self.t_end}]")
        if not self.amplitude > 0:
            raise FieldError(f"amplitude must be positive, got {self.amplitude}")
        if not self.frequency >= 0:
            raise FieldError(f"frequency must be non-negative, got {self.frequency}")
        if self.kind is SegmentKind.OSCILLATING and not 0 < self.angular_amplitude <= math.pi:
            raise FieldError(f"angular_amplitude must lie in (0, pi], got {self.angular_amplitude}")
        if self.rotation_sign not in (1, -1):
            raise FieldError(f"rotation_sign must be +1 or -1, got {self.rotation_sign}")

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def angle(self, t: float) -> float:
        """Field direction at ``t`` (unwrapped, no range check)."""
        tau = t - self.t_start
        if self.kind is SegmentKind.CONSTANT:
            return self.base_angle
        if self.kind is SegmentKind.ROTATING:
            return self.base_angle + self.rotation_sign * 2 * math.pi * self.frequency * tau + self.phase
        return self.base_angle + self.angular_amplitude * math.sin(2 * math.pi * self.frequency * tau + self.phase)


@dataclass(frozen=True)
class FieldSchedule:
    segments: tuple[FieldSegment, ...]
    _starts: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise FieldError("schedule needs at least one segment")
        for prev, nxt in zip(segs, segs[1:]):
            if abs(nxt.t_start - prev.t_end) > _TIME_TOL:
                raise FieldError(
                    f"segments must tile time: segment ending at {prev.t_end} "
                    f"is followed by one starting at {nxt.t_start}"
                )
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "_starts", tuple(s.t_start for s in segs))

    @property
    def t_start(self) -> float:
        return self.segments[0].t_start

    @property
    def t_end(self) -> float:
        return self.segments[-1].t_end

    def segment_at(self, t: float) -> FieldSegment:
        if t < self.t_start - _TIME_TOL or t > self.t_end + _TIME_TOL:
            raise FieldRangeError(f"t={t} outside schedule span [{self.t_start}, {self.t_end}]")
        i = bisect.bisect_right(self._starts, t) - 1
        return self.segments[min(max(i, 0), len(self.segments) - 1)]

    def oscillating_segments(self) -> list[FieldSegment]:
        return [s for s in self.segments if s.kind is SegmentKind.OSCILLATING]


def constant(t_start, t_end, amplitude=DEFAULT_AMPLITUDE_MT, angle=0.0) -> FieldSegment:
    return FieldSegment(SegmentKind.CONSTANT, t_start, t_end, amplitude, base_angle=angle)


def rotating(t_start, t_end, frequency, amplitude=DEFAULT_AMPLITUDE_MT, base_angle=0.0,
             sign=1, phase=0.0) -> FieldSegment:
    return FieldSegment(SegmentKind.ROTATING, t_start, t_end, amplitude, base_angle=base_angle,
                        frequency=frequency, rotation_sign=sign, phase=phase)


def oscillating(t_start, t_end, frequency, amplitude=DEFAULT_AMPLITUDE_MT, base_angle=0.0,
                angular_amplitude=DEFAULT_ANGULAR_AMPLITUDE, phase=0.0) -> FieldSegment:
    return FieldSegment(SegmentKind.OSCILLATING, t_start, t_end, amplitude, base_angle=base_angle,
                        frequency=frequency, angular_amplitude=angular_amplitude, phase=phase)


def reference_schedule(amplitude=DEFAULT_AMPLITUDE_MT, base_angle=0.0) -> FieldSchedule:
    """80 s test: constant, rotating at 0.25 Hz, then oscillating at 1.02 Hz for 40 s."""
    return FieldSchedule((
        constant(0.0, 20.0, amplitude, base_angle),
        rotating(20.0, 40.0, 0.25, amplitude, base_angle),
        oscillating(40.0, 80.0, 1.02, amplitude, base_angle),
    ))


def field_angle(schedule: FieldSchedule, t: float) -> float:
    """Field direction in radians, continuous within the active segment."""
    return schedule.segment_at(t).angle(t)


def eval_field(schedule: FieldSchedule, t: float) -> tuple[float, float]:
    """Planar field vector (Bx, By) in mT at time ``t``."""
    seg = schedule.segment_at(t)
    theta = seg.angle(t)
    return seg.amplitude * math.cos(theta), seg.amplitude * math.sin(theta)


def sample_times(t_start: float, t_end: float, rate: float) -> np.ndarray:
    """Uniform grid from t_start to t_end inclusive at ``rate`` samples per second."""
    if not rate > 0:
        raise FieldError(f"sample rate must be positive, got {rate}")
    n = int(round((t_end - t_start) * rate))
    return t_start + np.arange(n + 1) / rate


def sample_field(schedule: FieldSchedule, times: Sequence[float]) -> np.ndarray:
    """Field components at each time, shape (len(times), 2)."""
    return np.array([eval_field(schedule, float(t)) for t in times], dtype=float).reshape(-1, 2)


def emit_field_log(schedule: FieldSchedule, sample_rate: float, path) -> Path:
    """Write a magnetometer-style CSV log of the schedule."""
    times = sample_times(schedule.t_start, schedule.t_end, sample_rate)
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIELD_LOG_HEADER)
        for t in times:
            bx, by = eval_field(schedule, float(t))
            w.writerow((f"{t:.17g}", f"{bx:.17g}", f"{by:.17g}"))
    return path


def read_field_log(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a field log; returns (times, B) with B of shape (n, 2)."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header is None or tuple(h.strip() for h in header) != FIELD_LOG_HEADER:
            raise FieldError(f"{path}: expected header {','.join(FIELD_LOG_HEADER)}")
        rows = [[float(v) for v in row] for row in r if row]
    if not rows:
        raise FieldError(f"{path}: no samples")
    arr = np.asarray(rows, dtype=float)
    if arr.shape[1] != 3:
        raise FieldError(f"{path}: expected 3 columns")
    if np.any(np.diff(arr[:, 0]) <= 0):
        raise FieldError(f"{path}: time column must be strictly increasing")
    return arr[:, 0], arr[:, 1:]


def nearest_samples(log_times: np.ndarray, values: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Nearest-sample lookup of logged values at query times."""
    idx = np.searchsorted(log_times, query)
    idx = np.clip(idx, 1, len(log_times) - 1)
    left = log_times[idx - 1]
    right = log_times[idx]
    idx = np.where(np.abs(query - left) <= np.abs(right - query), idx - 1, idx)
    if len(log_times) == 1:
        idx = np.zeros_like(idx)
    return values[idx]


def infer_oscillation_window(times: np.ndarray, field_xy: np.ndarray, span: float = 2.0,
                             min_sweep: float = 0.05) -> tuple[float, float] | None:
    """Longest interval in which a logged field sweeps back and forth.

    Within a sliding window of ``span`` seconds the direction is classed as
    oscillating when it moves by more than ``min_sweep`` radians but ends
    close to where it started. Returns ``None`` when no such interval exists.
    """
    ang = np.unwrap(np.arctan2(field_xy[:, 1], field_xy[:, 0]))
    dt = np.median(np.diff(times))
    half = max(1, int(round(span / dt / 2)))
    n = len(ang)
    osc = np.zeros(n, dtype=bool)
    for i in range(n):
        lo, hi = max(0, i - half), min(n, i + half + 1)
        seg = ang[lo:hi]
        sweep = seg.max() - seg.min()
        net = abs(seg[-1] - seg[0])
        osc[i] = sweep > min_sweep and net < 0.5 * sweep and np.any(np.diff(np.sign(np.diff(seg))) != 0)
    best = None
    i = 0
    while i < n:
        if not osc[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and osc[j + 1]:
            j += 1
        if best is None or (j - i) > (best[1] - best[0]):
            best = (i, j)
        i = j + 1
    if best is None:
        return None
    # only window centres at least half a span inside the oscillation qualify
    a = max(times[0], times[best[0]] - span / 2)
    b = min(times[-1], times[best[1]] + span / 2)
    # turning points sit a half period apart; the first and last pin the edges
    inside = np.flatnonzero((times >= a) & (times <= b))
    d = np.diff(ang[inside])
    nz = np.flatnonzero(np.abs(d) > 1e-12)
    flips = nz[1:][np.sign(d[nz[1:]]) != np.sign(d[nz[:-1]])]
    if len(flips) >= 3:
        tp = times[inside[flips]]
        quarter = 0.5 * float(np.median(np.diff(tp)))
        a = max(a, tp[0] - quarter)
        b = min(b, tp[-1] + quarter)
    if b <= a:
        return None
    return float(a), float(b)
