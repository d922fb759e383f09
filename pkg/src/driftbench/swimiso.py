"""Isolating field-driven swimmer motion from flow and gradient drift.

A swimmer and a magnetic fiducial feel the same flow and the same gradient
force, so their difference leaves only the swimmer's own locomotion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .driftest import DisplacementSeries, median_series
from .fieldgen import FieldSchedule

BODY_LENGTH_UM = 10.3 + 6.8
MIN_WINDOW_S = 5.0
MIN_DIRECTION_SPEED = 0.05
RESPONSE_FACTOR = 5.0
RESPONSE_FLOOR_UM = 5.0


class SwimError(ValueError):
    """Invalid input to a swim-isolation step."""


def relative_translation(swim: DisplacementSeries, mag_ref) -> DisplacementSeries:
    """Swimmer translation minus magnetic-fiducial translation, per frame.

    ``mag_ref`` is one series or a list of series; a list is reduced to its
    per-frame median first.
    """
    if isinstance(mag_ref, DisplacementSeries):
        ref_times, ref = mag_ref.times, mag_ref.delta
    else:
        mag_ref = list(mag_ref)
        ref_times, ref = mag_ref[0].times, median_series(mag_ref)
    if ref.shape != swim.delta.shape or not np.allclose(ref_times, swim.times, rtol=0, atol=1e-9):
        raise SwimError("swimmer and magnetic reference are on different frame grids")
    return DisplacementSeries(f"{swim.particle_id}-rel", swim.times, swim.delta - ref)


def _window_mask(times, window, min_span=MIN_WINDOW_S):
    t_a, t_b = window
    if t_b - t_a < min_span - 1e-9:
        raise SwimError(f"window [{t_a}, {t_b}] is shorter than {min_span} s")
    mask = (times >= t_a - 1e-9) & (times <= t_b + 1e-9)
    if mask.sum() < 2:
        raise SwimError(f"window [{t_a}, {t_b}] holds fewer than two frames")
    return mask


def fit_velocity(series: DisplacementSeries, window) -> np.ndarray:
    """Least-squares (vx, vy) with free intercept over ``window``."""
    mask = _window_mask(series.times, window)
    t = series.times[mask]
    d = series.delta[mask]
    tc = t - t.mean()
    return (tc @ (d - d.mean(axis=0))) / (tc @ tc)


@dataclass
class SpeedFit:
    vx: float
    vy: float
    speed_um_s: float
    speed_bl_s: float
    direction: float
    endpoint_speed_um_s: float
    body_length: float


def swim_speed(relative: DisplacementSeries, window, body_length: float = BODY_LENGTH_UM) -> SpeedFit:
    """Fitted speed over ``window`` in um/s and body lengths per second.

    Direction is atan2(vy, vx), or 0 when the speed is exactly zero. The
    endpoint speed |d(t_b) - d(t_a)| / (t_b - t_a) is reported alongside.
    """
    if not body_length > 0:
        raise SwimError("body_length must be positive")
    vx, vy = fit_velocity(relative, window)
    speed = math.hypot(vx, vy)
    direction = math.atan2(vy, vx) if speed > 0 else 0.0
    mask = _window_mask(relative.times, window)
    idx = np.flatnonzero(mask)
    span = relative.times[idx[-1]] - relative.times[idx[0]]
    end_speed = float(np.hypot(*(relative.delta[idx[-1]] - relative.delta[idx[0]]))) / span
    return SpeedFit(float(vx), float(vy), speed, speed / body_length, direction, end_speed, body_length)


@dataclass
class DirectionChange:
    angle: Optional[float]
    direction_pre: Optional[float]
    direction_post: Optional[float]
    speed_pre: float
    speed_post: float

    @property
    def defined(self) -> bool:
        return self.angle is not None


def direction_change(series: DisplacementSeries, osc_window) -> DirectionChange:
    """Angle in [0, pi] between the fitted velocity before and during the window.

    A side whose fitted speed is under 0.05 um/s has no direction, and then
    the change is undefined (None).
    """
    t_a, t_b = osc_window
    t0 = series.times[0]
    if t_a - t0 < MIN_WINDOW_S - 1e-9 or t_b - t_a < MIN_WINDOW_S - 1e-9:
        raise SwimError("direction change needs at least 5 s of data on each side of the window start")
    v_pre = fit_velocity(series, (t0, t_a))
    v_post = fit_velocity(series, (t_a, t_b))
    s_pre, s_post = float(np.hypot(*v_pre)), float(np.hypot(*v_post))
    d_pre = math.atan2(v_pre[1], v_pre[0]) if s_pre >= MIN_DIRECTION_SPEED else None
    d_post = math.atan2(v_post[1], v_post[0]) if s_post >= MIN_DIRECTION_SPEED else None
    angle = None
    if d_pre is not None and d_post is not None:
        angle = abs(math.atan2(math.sin(d_post - d_pre), math.cos(d_post - d_pre)))
    return DirectionChange(angle, d_pre, d_post, s_pre, s_post)


def oscillation_window(schedule: FieldSchedule) -> tuple[float, float]:
    """Span of the schedule's single oscillating segment."""
    osc = schedule.oscillating_segments()
    if len(osc) != 1:
        raise SwimError(f"expected exactly one oscillating segment, found {len(osc)}")
    return osc[0].t_start, osc[0].t_end


def _nearest_frame(times, t):
    return int(np.argmin(np.abs(times - t)))


@dataclass
class OscResponse:
    pre_rmse: float
    net_osc_displacement: float
    responded: bool
    window: tuple


def detect_osc_response(relative: DisplacementSeries, schedule: Optional[FieldSchedule] = None,
                        window=None) -> OscResponse:
    """Did the relative series jump once the field began oscillating?

    pre_rmse is the RMS magnitude over frames strictly between the first
    frame and the window start; the response threshold is
    max(5 * pre_rmse, 5 um).
    """
    if window is None:
        if schedule is None:
            raise SwimError("need a schedule or an explicit window")
        window = oscillation_window(schedule)
    t_a, t_b = window
    times = relative.times
    pre = (times > times[0]) & (times < t_a - 1e-9)
    mag = np.hypot(relative.dx, relative.dy)
    pre_rmse = float(np.sqrt(np.mean(mag[pre] ** 2))) if pre.any() else 0.0
    ia, ib = _nearest_frame(times, t_a), _nearest_frame(times, t_b)
    net = float(np.hypot(*(relative.delta[ib] - relative.delta[ia])))
    responded = net > max(RESPONSE_FACTOR * pre_rmse, RESPONSE_FLOOR_UM)
    return OscResponse(pre_rmse, net, bool(responded), (float(t_a), float(t_b)))


@dataclass
class SwimReport:
    swimmer_id: str
    relative: DisplacementSeries
    pre_osc_rmse: float
    osc_window: tuple
    net_relative_displacement: float
    responded: bool
    speed: SpeedFit
    direction: DirectionChange

    @property
    def speed_um_s(self) -> float:
        return self.speed.speed_um_s

    @property
    def speed_bl_s(self) -> float:
        return self.speed.speed_bl_s

    @property
    def body_length(self) -> float:
        return self.speed.body_length

    def to_dict(self) -> dict:
        deg = lambda v: None if v is None else math.degrees(v)  # noqa: E731
        d = self.direction
        return {
            "swimmer_id": self.swimmer_id,
            "osc_window_s": list(self.osc_window),
            "pre_osc_rmse_um": self.pre_osc_rmse,
            "net_relative_displacement_um": self.net_relative_displacement,
            "responded": self.responded,
            "speed_um_s": self.speed.speed_um_s,
            "speed_bl_s": self.speed.speed_bl_s,
            "endpoint_speed_um_s": self.speed.endpoint_speed_um_s,
            "velocity_um_s": [self.speed.vx, self.speed.vy],
            "swim_direction_rad": self.speed.direction,
            "swim_direction_deg": math.degrees(self.speed.direction),
            "body_length_um": self.speed.body_length,
            "direction_pre_rad": d.direction_pre,
            "direction_post_rad": d.direction_post,
            "direction_change_rad": d.angle,
            "direction_pre_deg": deg(d.direction_pre),
            "direction_post_deg": deg(d.direction_post),
            "direction_change_deg": deg(d.angle),
            "times_s": [float(t) for t in self.relative.times],
            "relative_um": [[float(a), float(b)] for a, b in self.relative.delta],
        }


def swim_report(swim: DisplacementSeries, mag_ref: DisplacementSeries | Sequence[DisplacementSeries],
                osc_window, body_length: float = BODY_LENGTH_UM) -> SwimReport:
    """Full isolation summary for one swimmer.

    Speed comes from the relative series inside the oscillation window; the
    direction change is measured on the swimmer's own track.
    """
    rel = relative_translation(swim, mag_ref)
    resp = detect_osc_response(rel, window=osc_window)
    fit = swim_speed(rel, osc_window, body_length)
    try:
        turn = direction_change(swim, osc_window)
    except SwimError:
        turn = DirectionChange(None, None, None, float("nan"), float("nan"))
    return SwimReport(swim.particle_id, rel, resp.pre_rmse, resp.window, resp.net_osc_displacement,
                      resp.responded, fit, turn)
