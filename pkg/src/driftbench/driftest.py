"""Drift estimation from fiducial trajectories.

The flow experienced by a swimmer is estimated as the per-frame median
displacement of the fiducials of one class. Accuracy is summarized by the
root-mean-square deviation of individual fiducials from that median over all
post-initial frames. Fiducials that stray into a swimmer's own flow
disturbance can be masked with an exclusion zone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .trajectory import TrajectorySet

DEFAULT_EXCLUSION_RADIUS_UM = 100.0
DEFAULT_BIN_WIDTH_UM = 10.0
MEDIAN_AXES = ("drift", "lab")


class DriftError(ValueError):
    """Invalid input to a drift-estimation step."""


@dataclass
class DisplacementSeries:
    """Translation from the frame-0 position, shape (n_frames, 2)."""

    particle_id: str
    times: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.delta = np.asarray(self.delta, dtype=float)
        if self.delta.shape != (len(self.times), 2):
            raise DriftError(f"series {self.particle_id!r}: delta must have shape (n_frames, 2)")
        if len(self.times) and self.delta[0].any():
            raise DriftError(f"series {self.particle_id!r}: displacement at frame 0 must be zero")

    @property
    def dx(self) -> np.ndarray:
        return self.delta[:, 0]

    @property
    def dy(self) -> np.ndarray:
        return self.delta[:, 1]

    @property
    def n_frames(self) -> int:
        return len(self.times)


@dataclass
class LinearFit:
    vx: float
    vy: float
    r2: float


@dataclass
class DriftEstimate:
    median: np.ndarray
    times: np.ndarray
    particle_ids: list
    errors: np.ndarray
    rmse: float
    n_particles: int
    n_frames_used: int
    linear_fit: Optional[LinearFit]
    median_axes: str = "drift"

    @property
    def final(self) -> np.ndarray:
        return self.median[-1]

    def per_particle_rmse(self) -> np.ndarray:
        return per_particle_rmse(self.errors)

    def summary(self) -> dict:
        return {
            "particle_ids": list(self.particle_ids),
            "n": self.n_particles,
            "s": self.n_frames_used,
            "median_axes": self.median_axes,
            "rmse_um": self.rmse,
            "final_displacement_um": [float(v) for v in self.final],
            "linear_fit": None if self.linear_fit is None else {
                "vx": self.linear_fit.vx, "vy": self.linear_fit.vy, "r2": self.linear_fit.r2},
        }


@dataclass(frozen=True)
class ExclusionConfig:
    center_source: str
    radius: float = DEFAULT_EXCLUSION_RADIUS_UM
    mode: str = "increment_masking"

    def __post_init__(self):
        if not self.radius > 0:
            raise DriftError(f"exclusion radius must be positive, got {self.radius}")
        if self.mode not in ("off", "increment_masking"):
            raise DriftError(f"unknown exclusion mode {self.mode!r}")


def displacements(traj: TrajectorySet, kinds: Optional[Iterable[str] | str] = None,
                  ids: Optional[Sequence[str]] = None) -> list[DisplacementSeries]:
    """Displacement-from-start series for the selected particles.

    Every selected particle must be present in every frame.
    """
    if isinstance(kinds, str):
        kinds = (kinds,)
    if ids is None:
        ids = [pid for pid, k in zip(traj.ids, traj.kinds) if kinds is None or k in kinds]
    out = []
    for pid in ids:
        xy = traj.positions(pid)
        missing = np.flatnonzero(np.isnan(xy).any(axis=1))
        if missing.size:
            raise DriftError(f"particle {pid!r} is missing from frame {int(missing[0])}; "
                             "only particles tracked in every frame can be used")
        out.append(DisplacementSeries(pid, traj.times.copy(), xy - xy[0]))
    return out


def _stack(series: Sequence[DisplacementSeries]) -> np.ndarray:
    if not series:
        raise DriftError("need at least one displacement series")
    t0 = series[0].times
    for s in series[1:]:
        if s.times.shape != t0.shape or not np.allclose(s.times, t0, rtol=0, atol=1e-9):
            raise DriftError(f"series {s.particle_id!r} is on a different frame grid")
    return np.stack([s.delta for s in series])


def drift_axes(d: np.ndarray) -> np.ndarray:
    """Rotation whose first column is the mean displacement direction of ``d`` (identity if none)."""
    u = np.asarray(d, dtype=float).reshape(-1, 2).sum(axis=0)
    norm = math.hypot(u[0], u[1])
    if norm == 0.0 or norm <= 1e-12 * float(np.abs(d).sum()):
        return np.eye(2)
    c, s = u / norm
    if s == 0.0:
        return np.eye(2)
    return np.array([[c, -s], [s, c]])


def marginal_median(d: np.ndarray, axes: str = "drift") -> np.ndarray:
    """Per-frame componentwise median of ``d`` with shape (n, n_frames, 2).

    With ``axes="lab"`` the medians are taken along x and y. With
    ``axes="drift"`` they are taken along and across the mean displacement
    direction and rotated back, which makes the estimate independent of the
    camera orientation. Both agree when the mean drift lies along x or y, and
    "drift" falls back to "lab" when there is no net displacement.
    """
    if axes not in MEDIAN_AXES:
        raise DriftError(f"unknown median axes {axes!r}")
    lab = np.median(d, axis=0)
    R = drift_axes(d) if axes == "drift" else np.eye(2)
    if R[0, 1] == 0.0:
        return lab
    med = np.median(d @ R, axis=0) @ R.T
    # keep the lab value wherever the two differ only by rounding
    scale = np.maximum(np.abs(d).max(axis=0), 1e-300)
    same = np.abs(med - lab) <= 64 * np.finfo(float).eps * scale
    return np.where(same.all(axis=1, keepdims=True), lab, med)


def median_series(series: Sequence[DisplacementSeries], axes: str = "drift") -> np.ndarray:
    """Componentwise median across particles per frame, shape (n_frames, 2)."""
    return marginal_median(_stack(series), axes)


def rmse(series: Sequence[DisplacementSeries], median) -> float:
    """Root-mean-square deviation from the median over particles and post-initial frames.

    Frame 0 carries zero error by construction and is left out of both the
    sum and the n*s denominator.
    """
    d = _stack(series)
    med = np.asarray(median, dtype=float)
    n, f = d.shape[0], d.shape[1]
    s = f - 1
    if n == 0 or s <= 0:
        raise DriftError("RMSE needs at least one particle and one post-initial frame")
    if med.shape != (f, 2):
        raise DriftError("median series has the wrong shape")
    err = d[:, 1:, :] - med[None, 1:, :]
    return math.sqrt(float(np.sum(err * err)) / (n * s))


def per_particle_rmse(errors: np.ndarray) -> np.ndarray:
    """RMSE of each particle's error series over post-initial frames."""
    e = errors[:, 1:, :]
    return np.sqrt(np.sum(e * e, axis=(1, 2)) / e.shape[1])


def linear_fit_r2(median, times, through_origin: bool = False) -> LinearFit:
    """Least-squares drift velocity and pooled 2-D R^2.

    Both components are fitted against time, with a free intercept by default
    or pinned to (t0, 0) when ``through_origin`` is set. R^2 pools the x and y
    residuals against the spread about the componentwise means. An all-zero
    series gives zero velocity and R^2 = 1.
    """
    med = np.asarray(median, dtype=float)
    t = np.asarray(times, dtype=float)
    if len(t) < 3:
        raise DriftError("linear fit needs at least 3 frames")
    if not np.any(med):
        return LinearFit(0.0, 0.0, 1.0)
    tau = t - t[0]
    if through_origin:
        tt = float(tau @ tau)
        vx = float(tau @ med[:, 0]) / tt
        vy = float(tau @ med[:, 1]) / tt
        fitted = np.outer(tau, (vx, vy))
    else:
        tc = tau - tau.mean()
        tt = float(tc @ tc)
        vx = float(tc @ med[:, 0]) / tt
        vy = float(tc @ med[:, 1]) / tt
        fitted = med.mean(axis=0) + np.outer(tc, (vx, vy))
    resid = med - fitted
    ss_res = float(np.sum(resid ** 2))
    ss_tot = float(np.sum((med - med.mean(axis=0)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return LinearFit(vx, vy, r2)


def median_drift(series: Sequence[DisplacementSeries], axes: str = "drift") -> DriftEstimate:
    """Median translation series with per-particle errors, RMSE and linear fit."""
    d = _stack(series)
    med = marginal_median(d, axes)
    times = series[0].times
    errors = d - med[None]
    n, f = d.shape[0], d.shape[1]
    return DriftEstimate(
        median=med, times=times, particle_ids=[s.particle_id for s in series], errors=errors,
        rmse=rmse(series, med) if f > 1 else 0.0, n_particles=n, n_frames_used=f - 1,
        linear_fit=linear_fit_r2(med, times) if f >= 3 else None, median_axes=axes)


def distances_to(traj: TrajectorySet, ids: Sequence[str], center_id: str) -> np.ndarray:
    """Distance of each particle to ``center_id`` per frame, shape (n, n_frames)."""
    c = traj.positions(center_id)
    return np.stack([np.hypot(*(traj.positions(pid) - c).T) for pid in ids])


def inside_mask(traj: TrajectorySet, series: Sequence[DisplacementSeries], cfg: ExclusionConfig) -> np.ndarray:
    """True where a fiducial lies inside the exclusion zone, shape (n, n_frames)."""
    try:
        traj.index(cfg.center_source)
    except KeyError:
        raise DriftError(f"exclusion centre {cfg.center_source!r} not in trajectories") from None
    dist = distances_to(traj, [s.particle_id for s in series], cfg.center_source)
    return dist < cfg.radius


def masked_increments(inside: np.ndarray) -> np.ndarray:
    """Increment j is usable iff the fiducial is outside at frames j-1 and j; shape (n, n_frames-1)."""
    return ~inside[:, 1:] & ~inside[:, :-1]


def apply_exclusion(traj: TrajectorySet, series: Sequence[DisplacementSeries],
                    cfg: ExclusionConfig) -> list[DisplacementSeries]:
    """Effective displacement accrued only while outside the exclusion zone.

    After a fiducial leaves the zone its motion counts again from the exit
    point, so repeated entries and exits are handled uniformly.
    """
    if cfg.mode == "off":
        return list(series)
    valid = masked_increments(inside_mask(traj, series, cfg))
    out = []
    for s, ok in zip(series, valid):
        if ok.all():
            out.append(s)
            continue
        inc = np.diff(s.delta, axis=0) * ok[:, None]
        eff = np.zeros_like(s.delta)
        eff[1:] = np.cumsum(inc, axis=0)
        out.append(DisplacementSeries(s.particle_id, s.times, eff))
    return out


@dataclass
class ExclusionResult:
    series: list
    inside: np.ndarray
    valid_increments: np.ndarray
    radius: float

    @property
    def ever_inside(self) -> list:
        return [s.particle_id for s, m in zip(self.series, self.inside) if m.any()]

    @property
    def never_valid(self) -> list:
        return [s.particle_id for s, v in zip(self.series, self.valid_increments) if not v.any()]

    @property
    def masked_fraction(self) -> float:
        v = self.valid_increments
        return float(1.0 - v.mean()) if v.size else 0.0

    def usable(self) -> list:
        """Masked series that keep at least one valid increment."""
        return [s for s, v in zip(self.series, self.valid_increments) if v.any()]


def exclude(traj: TrajectorySet, series: Sequence[DisplacementSeries], cfg: ExclusionConfig) -> ExclusionResult:
    """apply_exclusion plus the bookkeeping needed for reporting."""
    inside = inside_mask(traj, series, cfg)
    masked = apply_exclusion(traj, series, cfg)
    return ExclusionResult(masked, inside, masked_increments(inside), cfg.radius)


@dataclass
class DistanceBin:
    lo: float
    hi: float
    mean_abs_error: float
    count: int


def error_vs_distance(traj: TrajectorySet, series: Sequence[DisplacementSeries], swimmer_id: str,
                      bin_width: float = DEFAULT_BIN_WIDTH_UM) -> list[DistanceBin]:
    """Mean frame-to-frame increment error against distance from the swimmer.

    Each fiducial increment is compared with the median increment of all
    fiducials in that frame and filed under its midpoint distance to the
    swimmer. Only non-empty bins are returned.
    """
    d = _stack(series)
    if d.shape[1] < 2:
        return []
    inc = np.diff(d, axis=1)
    med_inc = marginal_median(inc)
    err = np.hypot(*(inc - med_inc[None]).transpose(2, 0, 1))
    dist = distances_to(traj, [s.particle_id for s in series], swimmer_id)
    mid = 0.5 * (dist[:, 1:] + dist[:, :-1])
    idx = np.floor(mid / bin_width).astype(int).ravel()
    e = err.ravel()
    sums = np.bincount(idx, weights=e)
    counts = np.bincount(idx)
    return [DistanceBin(i * bin_width, (i + 1) * bin_width, float(sums[i] / counts[i]), int(counts[i]))
            for i in range(len(counts)) if counts[i] > 0]


def recommend_radius(curve: Sequence[DistanceBin], tolerance: float = 0.2, min_count: int = 30,
                     far_fraction: float = 1 / 3) -> Optional[float]:
    """Smallest bin edge beyond which every bin is within ``tolerance`` of the far-field plateau.

    The plateau is the count-weighted mean error of the farthest third of
    bins. Returns None when no exclusion is needed.
    """
    bins = [b for b in curve if b.count >= min_count]
    if len(bins) < 2:
        return None
    n_far = max(1, int(math.ceil(len(bins) * far_fraction)))
    far = bins[-n_far:]
    plateau = sum(b.mean_abs_error * b.count for b in far) / sum(b.count for b in far)
    limit = (1 + tolerance) * plateau
    radius = None
    for b in reversed(bins):
        if b.mean_abs_error > limit:
            radius = b.hi
            break
    return radius


def significance_inside_outside(inside, outside, n_perm: int = 10000, seed: int = 0) -> float:
    """Two-sided permutation test on the difference of group means.

    The result does not depend on which group is passed first or on the
    order of values within a group. p = (count + 1) / (n_perm + 1).
    """
    a = np.sort(np.asarray(inside, dtype=float))
    b = np.sort(np.asarray(outside, dtype=float))
    if a.size == 0 or b.size == 0:
        raise DriftError("both groups need at least one value")
    if n_perm < 100:
        raise DriftError(f"n_perm must be at least 100, got {n_perm}")
    if (a.size, tuple(a)) > (b.size, tuple(b)):
        a, b = b, a
    pooled = np.concatenate([a, b])
    na = a.size
    observed = abs(a.mean() - b.mean())
    rng = np.random.default_rng(seed)
    perms = rng.permuted(np.tile(pooled, (n_perm, 1)), axis=1)
    stats = np.abs(perms[:, :na].mean(axis=1) - perms[:, na:].mean(axis=1))
    tol = 1e-12 * max(1.0, float(np.max(np.abs(pooled))))
    count = int(np.sum(stats >= observed - tol))
    return (count + 1) / (n_perm + 1)
