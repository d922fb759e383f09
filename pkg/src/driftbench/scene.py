"""Scene description: particles, background flow, field gradient, schedule.

Units throughout: lengths in um, times in s, field in mT, viscosity in Pa s,
dipole moments in A um^2, forces in N, torques in N um.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .fieldgen import FieldSchedule

RADIUS_MAG_UM = 10.3 / 2
RADIUS_NONMAG_UM = 6.8 / 2
DEFAULT_VISCOSITY = 1.5e-3
DEFAULT_MOMENT = 0.02
DEFAULT_FRAME_RATE = 20.0
DEFAULT_SIM_DT = 1e-3
DEFAULT_NOISE_SIGMA = 0.5
# Closest approach allowed to a vortex centre or rotlet source.
REGULARIZATION_UM = 1.0

# Pa s -> N s / um^2
PA_S_TO_UM = 1e-12
# A um^2 * mT -> N um (torque) and A um^2 * mT/um -> N (gradient force)
MOMENT_FIELD_TO_N_UM = 1e-9
MOMENT_GRAD_TO_N = 1e-9
# N/m * um -> N
SPRING_N_PER_M_UM = 1e-6


class SceneError(ValueError):
    """Invalid scene definition."""


class DomainError(ValueError):
    """Flow or disturbance evaluated inside a regularization radius."""


class ParticleKind(str, enum.Enum):
    NONMAG = "nonmag"
    MAG = "mag"
    SWIMMER = "swimmer"


class FlowKind(str, enum.Enum):
    UNIFORM = "uniform"
    LINEAR_SHEAR = "linear_shear"
    VORTEX = "vortex"


class SwimmerModelKind(str, enum.Enum):
    KINEMATIC = "kinematic"
    BEAD_SPRING = "bead_spring"


@dataclass(frozen=True)
class Linkage:
    stiffness_k: float = 1e-6
    rest_length: Optional[float] = None
    angular_stiffness_kappa: float = 1e-10

    def __post_init__(self):
        if not self.stiffness_k > 0:
            raise SceneError("linkage stiffness must be positive")
        if not self.angular_stiffness_kappa >= 0:
            raise SceneError("angular stiffness must be non-negative")
        if self.rest_length is not None and not self.rest_length > 0:
            raise SceneError("rest length must be positive")


@dataclass(frozen=True)
class SwimmerModel:
    """Kinematic thrust model or mechanistic bead-spring dumbbell."""

    kind: SwimmerModelKind = SwimmerModelKind.KINEMATIC
    swim_speed: float = 0.9
    swim_direction_mode: str = "dipole_offset"
    fixed_angle: float = 0.0
    hydrodynamic_coupling_on: bool = True

    def __post_init__(self):
        object.__setattr__(self, "kind", SwimmerModelKind(self.kind))
        if not self.swim_speed >= 0:
            raise SceneError("swim_speed must be non-negative")
        if self.swim_direction_mode not in ("dipole_offset", "fixed_angle"):
            raise SceneError(f"unknown swim_direction_mode {self.swim_direction_mode!r}")


@dataclass(frozen=True)
class ParticleSpec:
    id: str
    kind: ParticleKind
    position0: tuple[float, float]
    radius: float = RADIUS_NONMAG_UM
    radius_nonmag: float = RADIUS_NONMAG_UM
    dipole_moment: Optional[float] = None
    dipole_angle0: float = 0.0
    dipole_offset_angle: float = 0.0
    linkage: Optional[Linkage] = None
    model: Optional[SwimmerModel] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ParticleKind(self.kind))
        object.__setattr__(self, "position0", (float(self.position0[0]), float(self.position0[1])))
        if not self.radius > 0 or not self.radius_nonmag > 0:
            raise SceneError(f"particle {self.id}: radii must be positive")
        if self.kind is ParticleKind.NONMAG:
            if self.dipole_moment is not None:
                raise SceneError(f"particle {self.id}: non-magnetic particle cannot carry a dipole")
        elif self.dipole_moment is None or not self.dipole_moment > 0:
            raise SceneError(f"particle {self.id}: magnetic particle needs a positive dipole_moment")
        if self.kind is ParticleKind.SWIMMER:
            if self.model is None:
                object.__setattr__(self, "model", SwimmerModel())
            if self.linkage is None:
                object.__setattr__(self, "linkage", Linkage())
            if self.linkage.rest_length is None:
                lk = self.linkage
                object.__setattr__(self, "linkage", Linkage(
                    lk.stiffness_k, self.radius + self.radius_nonmag + 0.2, lk.angular_stiffness_kappa))

    @property
    def is_magnetic(self) -> bool:
        return self.kind is not ParticleKind.NONMAG

    @property
    def body_length(self) -> float:
        """Sum of the two sphere diameters (swimmers only)."""
        return 2 * (self.radius + self.radius_nonmag)


def nonmag_fiducial(pid, position, radius=RADIUS_NONMAG_UM) -> ParticleSpec:
    return ParticleSpec(pid, ParticleKind.NONMAG, position, radius=radius)


def mag_fiducial(pid, position, moment=DEFAULT_MOMENT, angle0=0.0, radius=RADIUS_MAG_UM) -> ParticleSpec:
    return ParticleSpec(pid, ParticleKind.MAG, position, radius=radius, dipole_moment=moment,
                        dipole_angle0=angle0)


def swimmer(pid, position, model=None, moment=DEFAULT_MOMENT, angle0=0.0, offset=0.0,
            linkage=None, radius_mag=RADIUS_MAG_UM, radius_nonmag=RADIUS_NONMAG_UM) -> ParticleSpec:
    return ParticleSpec(pid, ParticleKind.SWIMMER, position, radius=radius_mag, radius_nonmag=radius_nonmag,
                        dipole_moment=moment, dipole_angle0=angle0, dipole_offset_angle=offset,
                        linkage=linkage, model=model or SwimmerModel())


@dataclass(frozen=True)
class FlowModel:
    kind: FlowKind = FlowKind.UNIFORM
    velocity: tuple[float, float] = (0.0, 0.0)
    gradient: tuple[tuple[float, float], tuple[float, float]] = ((0.0, 0.0), (0.0, 0.0))
    reference: tuple[float, float] = (0.0, 0.0)
    center: tuple[float, float] = (0.0, 0.0)
    strength: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", FlowKind(self.kind))
        vals = [*self.velocity, *self.gradient[0], *self.gradient[1], *self.reference, *self.center, self.strength]
        if not all(math.isfinite(v) for v in vals):
            raise SceneError("flow parameters must be finite")

    @classmethod
    def uniform(cls, vx, vy):
        return cls(FlowKind.UNIFORM, velocity=(vx, vy))

    @classmethod
    def linear_shear(cls, velocity, gradient, reference=(0.0, 0.0)):
        g = tuple(tuple(float(v) for v in row) for row in gradient)
        return cls(FlowKind.LINEAR_SHEAR, velocity=tuple(velocity), gradient=g, reference=tuple(reference))

    @classmethod
    def vortex(cls, center, strength):
        return cls(FlowKind.VORTEX, center=tuple(center), strength=strength)


@dataclass(frozen=True)
class GradientModel:
    """Uniform field-gradient tensor dB_i/dx_j in mT/um."""

    grad_B: tuple[tuple[float, float], tuple[float, float]] = ((0.0, 0.0), (0.0, 0.0))

    def __post_init__(self):
        g = tuple(tuple(float(v) for v in row) for row in self.grad_B)
        if len(g) != 2 or any(len(row) != 2 for row in g):
            raise SceneError("grad_B must be 2x2")
        if not all(math.isfinite(v) for row in g for v in row):
            raise SceneError("grad_B entries must be finite")
        object.__setattr__(self, "grad_B", g)

    @property
    def matrix(self) -> np.ndarray:
        return np.array(self.grad_B, dtype=float)


@dataclass(frozen=True)
class Scene:
    particles: tuple[ParticleSpec, ...]
    schedule: FieldSchedule
    flow: FlowModel = field(default_factory=FlowModel)
    gradient: GradientModel = field(default_factory=GradientModel)
    viscosity: float = DEFAULT_VISCOSITY
    duration: float = 80.0
    frame_rate: float = DEFAULT_FRAME_RATE
    sim_dt: float = DEFAULT_SIM_DT
    position_noise_sigma: float = DEFAULT_NOISE_SIGMA
    rng_seed: int = 0
    swimmer_disturbance_on: bool = False

    def __post_init__(self):
        object.__setattr__(self, "particles", tuple(self.particles))
        if not self.duration > 0:
            raise SceneError("duration must be positive")
        if not self.viscosity > 0:
            raise SceneError("viscosity must be positive")
        if not self.frame_rate > 0 or not self.sim_dt > 0:
            raise SceneError("frame_rate and sim_dt must be positive")
        if not self.position_noise_sigma >= 0:
            raise SceneError("position_noise_sigma must be non-negative")
        ratio = (1.0 / self.frame_rate) / self.sim_dt
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio) or round(ratio) < 1:
            raise SceneError(f"sim_dt={self.sim_dt} does not divide the frame interval {1 / self.frame_rate}")
        frames = self.duration * self.frame_rate
        if abs(frames - round(frames)) > 1e-9 * max(1.0, frames):
            raise SceneError("duration must be a whole number of frame intervals")
        if self.schedule.t_start > 1e-9 or self.schedule.t_end < self.duration - 1e-9:
            raise SceneError(
                f"schedule span [{self.schedule.t_start}, {self.schedule.t_end}] does not cover [0, {self.duration}]")
        ids = [p.id for p in self.particles]
        if len(set(ids)) != len(ids):
            raise SceneError("particle ids must be unique")
        if not self.particles:
            raise SceneError("scene needs at least one particle")

    @property
    def steps_per_frame(self) -> int:
        return int(round((1.0 / self.frame_rate) / self.sim_dt))

    @property
    def n_frames(self) -> int:
        return int(round(self.duration * self.frame_rate)) + 1

    def particle(self, pid: str) -> ParticleSpec:
        for p in self.particles:
            if p.id == pid:
                return p
        raise KeyError(pid)


def flow_at(flow: FlowModel, x, t: float = 0.0) -> np.ndarray:
    """Background flow velocity (um/s) at position ``x`` and time ``t``."""
    x = np.asarray(x, dtype=float)
    if flow.kind is FlowKind.UNIFORM:
        return np.array(flow.velocity, dtype=float)
    if flow.kind is FlowKind.LINEAR_SHEAR:
        g = np.array(flow.gradient, dtype=float)
        return np.array(flow.velocity) + g @ (x - np.array(flow.reference))
    d = x - np.array(flow.center)
    r2 = float(d @ d)
    if r2 < REGULARIZATION_UM ** 2:
        raise DomainError(f"vortex evaluated {math.sqrt(r2):.3g} um from its centre (< {REGULARIZATION_UM} um)")
    return flow.strength / (2 * math.pi * r2) * np.array([-d[1], d[0]])


def swimmer_disturbance(torque_z: float, swimmer_pos, x, viscosity: float) -> np.ndarray:
    """Planar rotlet velocity (um/s) at ``x`` from a point torque (N um)."""
    d = np.asarray(x, dtype=float) - np.asarray(swimmer_pos, dtype=float)
    r = math.hypot(d[0], d[1])
    if r < REGULARIZATION_UM:
        raise DomainError(f"rotlet evaluated {r:.3g} um from its source (< {REGULARIZATION_UM} um)")
    eta = viscosity * PA_S_TO_UM
    return torque_z / (8 * math.pi * eta * r ** 3) * np.array([-d[1], d[0]])


def gradient_force(gradient: GradientModel, moment: float, dipole_angle: float) -> np.ndarray:
    """Force (N) on a dipole of ``moment`` A um^2 pointing along ``dipole_angle``."""
    m = moment * np.array([math.cos(dipole_angle), math.sin(dipole_angle)])
    return MOMENT_GRAD_TO_N * (gradient.matrix @ m)


def translational_drag(viscosity: float, radius: float) -> float:
    """Stokes drag coefficient 6 pi eta a in N s/um."""
    return 6 * math.pi * viscosity * PA_S_TO_UM * radius


def rotational_drag(viscosity: float, radius: float) -> float:
    """Rotational drag 8 pi eta a^3 in N um s."""
    return 8 * math.pi * viscosity * PA_S_TO_UM * radius ** 3


def alignment_rate(moment: float, amplitude: float, viscosity: float, radius: float) -> float:
    """Linearized dipole relaxation rate mB / (8 pi eta a^3) in 1/s."""
    return moment * amplitude * MOMENT_FIELD_TO_N_UM / rotational_drag(viscosity, radius)


def gradient_for_drift(velocity, moment: float, radius: float, viscosity: float,
                       dipole_angle: float = 0.0) -> GradientModel:
    """Rank-one gradient tensor giving a dipole at ``dipole_angle`` the extra drift ``velocity``."""
    force = np.asarray(velocity, dtype=float) * translational_drag(viscosity, radius)
    u = np.array([math.cos(dipole_angle), math.sin(dipole_angle)])
    g = np.outer(force / (MOMENT_GRAD_TO_N * moment), u)
    return GradientModel(tuple(map(tuple, g)))
