"""Tracker-style trajectory container and CSV format."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CSV_HEADER = ("frame", "time_s", "particle_id", "kind", "x_um", "y_um", "theta_rad")
KINDS = ("nonmag", "mag", "swimmer")


class TrajectoryError(ValueError):
    """Malformed or inconsistent trajectory data."""


@dataclass
class TrajectorySet:
    """Per-particle planar positions on a shared uniform frame grid.

    ``xy`` has shape (n_particles, n_frames, 2) and ``theta`` shape
    (n_particles, n_frames); missing samples are NaN.
    """

    times: np.ndarray
    ids: list
    kinds: list
    xy: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.xy = np.asarray(self.xy, dtype=float)
        self.theta = np.asarray(self.theta, dtype=float)
        self.ids = list(self.ids)
        self.kinds = list(self.kinds)
        n, f = len(self.ids), len(self.times)
        if self.xy.shape != (n, f, 2) or self.theta.shape != (n, f):
            raise TrajectoryError(f"array shapes {self.xy.shape}/{self.theta.shape} do not match {n} particles x {f} frames")
        if len(self.kinds) != n:
            raise TrajectoryError("one kind per particle required")
        bad = [k for k in self.kinds if k not in KINDS]
        if bad:
            raise TrajectoryError(f"unknown particle kind {bad[0]!r}")
        if len(set(self.ids)) != n:
            raise TrajectoryError("duplicate particle ids")

    @property
    def n_frames(self) -> int:
        return len(self.times)

    @property
    def frame_interval(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else float("nan")

    def index(self, pid) -> int:
        try:
            return self.ids.index(pid)
        except ValueError:
            raise KeyError(f"no particle {pid!r}") from None

    def ids_of(self, kind) -> list:
        return [i for i, k in zip(self.ids, self.kinds) if k == kind]

    def positions(self, pid) -> np.ndarray:
        return self.xy[self.index(pid)]

    def subset(self, ids) -> "TrajectorySet":
        idx = [self.index(i) for i in ids]
        return TrajectorySet(self.times.copy(), [self.ids[i] for i in idx], [self.kinds[i] for i in idx],
                             self.xy[idx].copy(), self.theta[idx].copy())

    def equals(self, other: "TrajectorySet") -> bool:
        return (self.ids == other.ids and self.kinds == other.kinds
                and np.array_equal(self.times, other.times)
                and np.array_equal(self.xy, other.xy, equal_nan=True)
                and np.array_equal(self.theta, other.theta, equal_nan=True))


def _num(v: float) -> str:
    return "" if math.isnan(v) else f"{v:.17g}"


def write_csv(traj: TrajectorySet, path) -> Path:
    """Rows sorted by (frame, particle_id); absent samples are skipped."""
    path = Path(path)
    order = sorted(range(len(traj.ids)), key=lambda i: traj.ids[i])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for f, t in enumerate(traj.times):
            for i in order:
                x, y = traj.xy[i, f]
                if math.isnan(x) or math.isnan(y):
                    continue
                w.writerow((f, _num(t), traj.ids[i], traj.kinds[i], _num(x), _num(y), _num(traj.theta[i, f])))
    return path


def read_csv(path, grid_tol: float = 1e-6) -> TrajectorySet:
    """Parse a trajectory CSV.

    Raises TrajectoryError on malformed rows, duplicate (frame, particle)
    pairs, conflicting kinds or frame times, or a non-uniform frame grid.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise TrajectoryError(f"{path}: expected header {','.join(CSV_HEADER)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise TrajectoryError(f"{path}:{lineno}: expected {len(CSV_HEADER)} fields, got {len(row)}")
            try:
                frame = int(row[0])
                t = float(row[1])
                x = float(row[4])
                y = float(row[5])
                th = float(row[6]) if row[6].strip() else math.nan
            except ValueError as exc:
                raise TrajectoryError(f"{path}:{lineno}: {exc}") from None
            if frame < 0:
                raise TrajectoryError(f"{path}:{lineno}: negative frame index")
            rows.append((frame, t, row[2], row[3], x, y, th))
    if not rows:
        raise TrajectoryError(f"{path}: no data rows")

    ids = sorted({r[2] for r in rows})
    pidx = {pid: i for i, pid in enumerate(ids)}
    n_frames = max(r[0] for r in rows) + 1
    kinds = [None] * len(ids)
    times = np.full(n_frames, np.nan)
    xy = np.full((len(ids), n_frames, 2), np.nan)
    theta = np.full((len(ids), n_frames), np.nan)
    seen = np.zeros((len(ids), n_frames), dtype=bool)
    for frame, t, pid, kind, x, y, th in rows:
        i = pidx[pid]
        if seen[i, frame]:
            raise TrajectoryError(f"particle {pid!r} appears twice in frame {frame}")
        seen[i, frame] = True
        if kinds[i] is None:
            kinds[i] = kind
        elif kinds[i] != kind:
            raise TrajectoryError(f"particle {pid!r} changes kind from {kinds[i]!r} to {kind!r}")
        if math.isnan(times[frame]):
            times[frame] = t
        elif times[frame] != t:
            raise TrajectoryError(f"frame {frame} has conflicting times {times[frame]} and {t}")
        xy[i, frame] = (x, y)
        theta[i, frame] = th

    if np.any(np.isnan(times)):
        missing = int(np.flatnonzero(np.isnan(times))[0])
        raise TrajectoryError(f"frame {missing} has no samples")
    if n_frames > 1:
        dt = (times[-1] - times[0]) / (n_frames - 1)
        expected = times[0] + dt * np.arange(n_frames)
        if dt <= 0 or np.max(np.abs(times - expected)) > grid_tol * max(dt, 1.0):
            raise TrajectoryError("frame times are not on a uniform grid")
    return TrajectorySet(times, ids, kinds, xy, theta)
