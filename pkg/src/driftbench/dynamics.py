"""Overdamped dynamics of fiducials and microswimmers.

Every particle moves with the local background flow plus its force divided
by Stokes drag; magnetic dipoles rotate towards the field at a rate set by
magnetic torque over rotational drag. All particles are advanced together
with a fixed-step RK4 so that swimmer-induced rotlets can act on fiducials.
Tracker noise is added when frames are sampled, never inside the dynamics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels as K
from .fieldgen import FieldSchedule, SegmentKind
from .scene import (FlowKind, FlowModel, GradientModel, ParticleKind, ParticleSpec, Scene, SwimmerModel,
                    SwimmerModelKind, DEFAULT_VISCOSITY, PA_S_TO_UM)
from .trajectory import TrajectorySet

_SEG_CODES = {SegmentKind.CONSTANT: K.SEG_CONSTANT, SegmentKind.ROTATING: K.SEG_ROTATING,
              SegmentKind.OSCILLATING: K.SEG_OSCILLATING}
_FLOW_CODES = {FlowKind.UNIFORM: K.FLOW_UNIFORM, FlowKind.LINEAR_SHEAR: K.FLOW_SHEAR,
               FlowKind.VORTEX: K.FLOW_VORTEX}
_KIND_NAMES = {ParticleKind.NONMAG: "nonmag", ParticleKind.MAG: "mag", ParticleKind.SWIMMER: "swimmer"}


class IntegrationError(RuntimeError):
    """Integration left the model's valid domain."""

    def __init__(self, message, particle_id=None, time=None):
        super().__init__(message)
        self.particle_id = particle_id
        self.time = time


@dataclass
class ParticleState:
    """Instantaneous state; ``bead2`` is set only for bead-spring swimmers."""

    position: np.ndarray
    dipole_angle: float = 0.0
    bead2: Optional[np.ndarray] = None

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        if self.bead2 is not None:
            self.bead2 = np.asarray(self.bead2, dtype=float)

    @property
    def separation(self) -> float:
        if self.bead2 is None:
            return float("nan")
        return float(np.hypot(*(self.bead2 - self.position)))

    @property
    def body_axis_angle(self) -> float:
        if self.bead2 is None:
            return float("nan")
        d = self.bead2 - self.position
        return math.atan2(d[1], d[0])

    def extension(self, rest_length: float) -> float:
        return self.separation - rest_length

    def _row(self) -> np.ndarray:
        row = np.zeros(5)
        row[:2] = self.position
        row[2] = self.dipole_angle
        if self.bead2 is not None:
            row[3:] = self.bead2
        return row

    def _with_row(self, row) -> "ParticleState":
        return ParticleState(row[:2].copy(), float(row[2]),
                             None if self.bead2 is None else row[3:].copy())


@dataclass(frozen=True)
class Rotlet:
    """External point torque (N um) at a fixed position, used by single-particle steps."""

    torque_z: float
    position: tuple
    viscosity: float = DEFAULT_VISCOSITY


def pack_schedule(schedule: FieldSchedule) -> np.ndarray:
    seg = np.zeros((len(schedule.segments), K.N_SEGCOLS))
    for i, s in enumerate(schedule.segments):
        seg[i] = (_SEG_CODES[s.kind], s.t_start, s.t_end, s.amplitude, s.base_angle, s.frequency,
                  s.angular_amplitude, s.rotation_sign, s.phase)
    return seg


def pack_flow(flow: FlowModel):
    fp = np.zeros(9)
    fp[0:2] = flow.velocity
    fp[2:6] = np.ravel(flow.gradient)
    if flow.kind is FlowKind.VORTEX:
        fp[6:8] = flow.center
        fp[8] = flow.strength
    else:
        fp[6:8] = flow.reference
    return _FLOW_CODES[flow.kind], fp


def _kind_code(spec: ParticleSpec) -> int:
    if spec.kind is ParticleKind.NONMAG:
        return K.NONMAG
    if spec.kind is ParticleKind.MAG:
        return K.MAG
    return K.KINEMATIC if spec.model.kind is SwimmerModelKind.KINEMATIC else K.BEADSPRING


def _param_row(spec: ParticleSpec) -> np.ndarray:
    p = np.zeros(K.N_PARAMS)
    p[K.P_A1] = spec.radius
    p[K.P_A2] = spec.radius_nonmag
    p[K.P_M] = spec.dipole_moment or 0.0
    p[K.P_OFF] = spec.dipole_offset_angle
    if spec.kind is ParticleKind.SWIMMER:
        lk, model = spec.linkage, spec.model
        p[K.P_K] = lk.stiffness_k
        p[K.P_L0] = lk.rest_length
        p[K.P_KAPPA] = lk.angular_stiffness_kappa
        p[K.P_SPEED] = model.swim_speed
        p[K.P_MODE] = 1.0 if model.swim_direction_mode == "fixed_angle" else 0.0
        p[K.P_FIXED] = model.fixed_angle
        p[K.P_COUPLE] = 1.0 if model.hydrodynamic_coupling_on else 0.0
    return p


def initial_state(spec: ParticleSpec) -> ParticleState:
    """Start state; a bead-spring swimmer starts at rest length along its preferred axis."""
    pos = np.array(spec.position0, dtype=float)
    bead2 = None
    if spec.kind is ParticleKind.SWIMMER and spec.model.kind is SwimmerModelKind.BEAD_SPRING:
        axis = spec.dipole_angle0 - spec.dipole_offset_angle
        bead2 = pos + spec.linkage.rest_length * np.array([math.cos(axis), math.sin(axis)])
    return ParticleState(pos, spec.dipole_angle0, bead2)


def _raise_status(status, pid, t):
    if status == K.STATUS_DOMAIN:
        raise IntegrationError(f"particle {pid!r} entered a flow singularity core at t={t:.6g} s", pid, t)
    if status == K.STATUS_SEPARATION:
        raise IntegrationError(
            f"swimmer {pid!r} bead separation fell below half the rest length at t={t:.6g} s", pid, t)


def _single_step(state, spec, kind_code, flow, schedule, gradient, viscosity, t, dt, rotlets=()):
    y = state._row()[None, :].copy()
    kinds = np.array([kind_code], dtype=np.int64)
    prm = _param_row(spec)[None, :]
    seg = pack_schedule(schedule) if schedule is not None else np.array(
        [[K.SEG_CONSTANT, -np.inf, np.inf, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]])
    fcode, fp = pack_flow(flow)
    grad = (gradient or GradientModel()).matrix
    ext = np.array([[r.position[0], r.position[1], r.torque_z] for r in rotlets], dtype=float).reshape(-1, 3)
    bufs = [np.zeros_like(y) for _ in range(5)]
    st, _ = K.rk4_step(float(t), y, float(dt), kinds, prm, seg, fcode, fp, grad, viscosity * PA_S_TO_UM,
                       False, ext, *bufs, np.zeros(1))
    _raise_status(st, spec.id, t)
    return state._with_row(y[0])


def step_nonmag(state: ParticleState, flow: FlowModel, t: float, dt: float,
                disturbance: Sequence[Rotlet] = ()) -> ParticleState:
    """Advect a passive fiducial by one RK4 step (plus optional fixed rotlets)."""
    spec = ParticleSpec("_", ParticleKind.NONMAG, tuple(state.position))
    visc = disturbance[0].viscosity if disturbance else DEFAULT_VISCOSITY
    if any(r.viscosity != visc for r in disturbance):
        raise ValueError("all rotlets must share one viscosity")
    return _single_step(state, spec, K.NONMAG, flow, None, None, visc, t, dt, disturbance)


def step_mag(state: ParticleState, flow: FlowModel, schedule: FieldSchedule, gradient: GradientModel,
             viscosity: float, radius: float, moment: float, t: float, dt: float,
             disturbance: Sequence[Rotlet] = ()) -> ParticleState:
    """One RK4 step of a magnetic fiducial: flow, gradient drift and dipole alignment."""
    spec = ParticleSpec("_", ParticleKind.MAG, tuple(state.position), radius=radius, dipole_moment=moment)
    return _single_step(state, spec, K.MAG, flow, schedule, gradient, viscosity, t, dt, disturbance)


def step_swimmer_kinematic(state: ParticleState, flow: FlowModel, schedule: FieldSchedule,
                           gradient: GradientModel, spec: ParticleSpec, viscosity: float,
                           t: float, dt: float) -> ParticleState:
    """Magnetic-fiducial transport plus thrust while an oscillating segment is active."""
    _require_model(spec, SwimmerModelKind.KINEMATIC)
    return _single_step(state, spec, K.KINEMATIC, flow, schedule, gradient, viscosity, t, dt)


def step_swimmer_beadspring(state: ParticleState, flow: FlowModel, schedule: FieldSchedule,
                            viscosity: float, spec: ParticleSpec, t: float, dt: float,
                            gradient: Optional[GradientModel] = None) -> ParticleState:
    """One RK4 step of the two-bead swimmer with spring, angular spring and optional coupling."""
    _require_model(spec, SwimmerModelKind.BEAD_SPRING)
    if state.bead2 is None:
        raise ValueError("bead-spring state needs bead2")
    if state.separation < 0.5 * spec.linkage.rest_length:
        raise IntegrationError(f"swimmer {spec.id!r} starts below the separation bound", spec.id, t)
    return _single_step(state, spec, K.BEADSPRING, flow, schedule, gradient, viscosity, t, dt)


def _require_model(spec, kind):
    if spec.kind is not ParticleKind.SWIMMER or spec.model.kind is not kind:
        raise ValueError(f"particle {spec.id!r} is not a {kind.value} swimmer")


def integrate_states(scene: Scene, specs: Sequence[ParticleSpec] = None, duration: float = None,
                     sim_dt: float = None, record_every: int = None):
    """Noise-free integration; returns (times, states) with states of shape (n_records, n, 5).

    ``record_every`` defaults to the scene's steps per frame.
    """
    specs = list(scene.particles if specs is None else specs)
    dt = scene.sim_dt if sim_dt is None else sim_dt
    duration = scene.duration if duration is None else duration
    every = record_every or int(round((1.0 / scene.frame_rate) / dt))
    n_steps = int(round(duration / dt))
    if n_steps % every:
        raise ValueError("duration must be a whole number of recording intervals")
    n_rec = n_steps // every + 1
    y0 = np.array([initial_state(s)._row() for s in specs])
    kinds = np.array([_kind_code(s) for s in specs], dtype=np.int64)
    prm = np.array([_param_row(s) for s in specs])
    fcode, fp = pack_flow(scene.flow)
    out, st, bad, t_fail = K.integrate(
        y0, n_rec, every, float(dt), kinds, prm, pack_schedule(scene.schedule), fcode, fp,
        scene.gradient.matrix, scene.viscosity * PA_S_TO_UM, bool(scene.swimmer_disturbance_on),
        np.zeros((0, 3)))
    if st != K.STATUS_OK:
        _raise_status(st, specs[bad].id, t_fail)
    times = np.arange(n_rec) * (every * dt)
    return times, out


def _tracked_angle(spec: ParticleSpec, states: np.ndarray) -> np.ndarray:
    """Body-axis angle series as a tracker would report it."""
    if spec.kind is not ParticleKind.SWIMMER:
        return np.full(states.shape[0], np.nan)
    if spec.model.kind is SwimmerModelKind.KINEMATIC:
        return states[:, 2] - spec.dipole_offset_angle
    d = states[:, 3:5] - states[:, 0:2]
    return np.unwrap(np.arctan2(d[:, 1], d[:, 0]))


def simulate(scene: Scene, seed: Optional[int] = None) -> TrajectorySet:
    """Integrate the scene and sample tracker-style frames.

    Particles are ordered by id. Gaussian noise of ``position_noise_sigma``
    is added to sampled positions only, drawn from ``seed`` (defaults to the
    scene's ``rng_seed``).
    """
    specs = sorted(scene.particles, key=lambda p: p.id)
    _, states = integrate_states(scene, specs)
    n_frames = states.shape[0]
    times = np.arange(n_frames) / scene.frame_rate
    xy = np.ascontiguousarray(states[:, :, 0:2].transpose(1, 0, 2))
    rng = np.random.default_rng(scene.rng_seed if seed is None else seed)
    if scene.position_noise_sigma > 0:
        xy = xy + rng.normal(0.0, scene.position_noise_sigma, size=xy.shape)
    theta = np.array([_tracked_angle(s, states[:, i]) for i, s in enumerate(specs)]).reshape(len(specs), n_frames)
    return TrajectorySet(times, [s.id for s in specs], [_KIND_NAMES[s.kind] for s in specs], xy, theta)


def latent_states(scene: Scene) -> dict:
    """Noise-free per-frame states keyed by particle id (shape (n_frames, 5))."""
    specs = sorted(scene.particles, key=lambda p: p.id)
    _, states = integrate_states(scene, specs)
    return {s.id: states[:, i].copy() for i, s in enumerate(specs)}
