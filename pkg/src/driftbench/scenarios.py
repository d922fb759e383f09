"""Reference scenes at the scale of the fiducial-tracking experiments.

Field of view is roughly 500 x 530 um; flows move fiducials a few tens of um
over an 80 s recording at 20 frames per second.
"""

from __future__ import annotations

import math

from . import fieldgen as fg
from . import scene as sc

FOV_CENTER = (250.0, 265.0)
DRIFT_VELOCITY = (0.6, -0.3)
# weak spatial variation across the field of view, in 1/s
WEAK_GRADIENT = ((1.5e-4, 2.0e-4), (-1.5e-4, -0.8e-4))
GRADIENT_DRIFT_SPEED = 0.2
GRADIENT_DRIFT_ANGLE = math.radians(30)

_PS_POSITIONS = ((140.0, 150.0), (370.0, 130.0), (160.0, 390.0), (350.0, 380.0))
_MAG_POSITIONS = ((90.0, 260.0), (420.0, 250.0), (250.0, 470.0))


def constant_schedule(duration=80.0, angle=0.0):
    return fg.FieldSchedule((fg.constant(0.0, duration, angle=angle),))


def flow_scene(seed=0, uniform=False, noise=sc.DEFAULT_NOISE_SIGMA) -> sc.Scene:
    """Four non-magnetic fiducials in a near-uniform drift."""
    flow = (sc.FlowModel.uniform(*DRIFT_VELOCITY) if uniform
            else sc.FlowModel.linear_shear(DRIFT_VELOCITY, WEAK_GRADIENT, FOV_CENTER))
    particles = [sc.nonmag_fiducial(f"ps{i + 1}", p) for i, p in enumerate(_PS_POSITIONS)]
    return sc.Scene(particles, constant_schedule(), flow=flow, position_noise_sigma=noise, rng_seed=seed)


def gradient_scene(seed=0, speed=GRADIENT_DRIFT_SPEED, angle=GRADIENT_DRIFT_ANGLE,
                   noise=sc.DEFAULT_NOISE_SIGMA) -> sc.Scene:
    """Uniform flow; magnetic fiducials carry an extra gradient drift of ``speed`` at ``angle``."""
    grad = sc.gradient_for_drift((speed * math.cos(angle), speed * math.sin(angle)), sc.DEFAULT_MOMENT,
                                 sc.RADIUS_MAG_UM, sc.DEFAULT_VISCOSITY, dipole_angle=0.0)
    particles = [sc.nonmag_fiducial(f"ps{i + 1}", p) for i, p in enumerate(_PS_POSITIONS)]
    particles += [sc.mag_fiducial(f"mag{i + 1}", p, angle0=0.3 * (i - 1)) for i, p in enumerate(_MAG_POSITIONS)]
    return sc.Scene(particles, constant_schedule(), flow=sc.FlowModel.uniform(*DRIFT_VELOCITY), gradient=grad,
                    position_noise_sigma=noise, rng_seed=seed)


def swim_scene(seed=0, swim_speed=0.9, offset=-math.pi / 2, noise=sc.DEFAULT_NOISE_SIGMA,
               flow=None, direction_mode="dipole_offset", fixed_angle=0.0) -> sc.Scene:
    """Full 80 s test: constant, rotating (0.25 Hz), oscillating (1.02 Hz, 40 s) fields.

    Flow, gradient drift, four non-magnetic and three magnetic fiducials and
    one kinematic swimmer whose thrust switches on with the oscillation.
    """
    base = gradient_scene(seed, noise=noise)
    model = sc.SwimmerModel(sc.SwimmerModelKind.KINEMATIC, swim_speed=swim_speed,
                            swim_direction_mode=direction_mode, fixed_angle=fixed_angle)
    sw = sc.swimmer("swim1", FOV_CENTER, model=model, offset=offset, angle0=0.2)
    return sc.Scene(base.particles + (sw,), fg.reference_schedule(), flow=flow or base.flow, gradient=base.gradient,
                    position_noise_sigma=noise, rng_seed=seed)


# fiducials around the swimmer at (radius um, angle rad)
_NEAR = ((13.0, 0.3), (16.0, 2.2), (19.0, 4.0), (23.0, 1.1), (27.0, 5.2), (32.0, 3.1), (36.0, 0.7), (42.0, 4.6))
_FAR = ((90.0, 0.5), (110.0, 1.9), (130.0, 3.0), (150.0, 4.4), (170.0, 5.6),
        (190.0, 0.9), (200.0, 2.6), (210.0, 3.6), (215.0, 4.9), (220.0, 6.0))


def exclusion_scene(seed=0, disturbance=True, noise=0.05, rot_frequency=1.0) -> sc.Scene:
    """Swimmer spinning in a rotating field with fiducials near and far.

    The rotating field drives a steady rotlet that swirls nearby fiducials
    around the swimmer while distant ones follow the background drift.
    """
    cx, cy = FOV_CENTER
    particles = []
    for i, (r, a) in enumerate(_NEAR + _FAR):
        particles.append(sc.nonmag_fiducial(f"ps{i + 1:02d}", (cx + r * math.cos(a), cy + r * math.sin(a))))
    particles.append(sc.swimmer("swim1", FOV_CENTER, model=sc.SwimmerModel(swim_speed=0.0)))
    schedule = fg.FieldSchedule((fg.constant(0.0, 5.0), fg.rotating(5.0, 80.0, rot_frequency)))
    return sc.Scene(particles, schedule, flow=sc.FlowModel.uniform(*DRIFT_VELOCITY),
                    position_noise_sigma=noise, rng_seed=seed, swimmer_disturbance_on=disturbance)


def beadspring_swimmer(rigid=False, coupling=True, offset=math.pi / 2, pid="bs1", position=(0.0, 0.0)):
    """Bead-spring dumbbell; ``rigid`` uses stiff linear and angular springs."""
    linkage = sc.Linkage(1e-4, None, 1e-8) if rigid else sc.Linkage()
    model = sc.SwimmerModel(sc.SwimmerModelKind.BEAD_SPRING, hydrodynamic_coupling_on=coupling)
    return sc.swimmer(pid, position, model=model, offset=offset, linkage=linkage)


def scallop_scene(rigid=False, coupling=True, n_periods=12, frequency=1.02, steps_per_period=10000) -> sc.Scene:
    """One dumbbell under an oscillating field, sampled once per field period."""
    period = 1.0 / frequency
    sched = fg.FieldSchedule((fg.oscillating(0.0, n_periods * period, frequency),))
    return sc.Scene([beadspring_swimmer(rigid, coupling)], sched, duration=n_periods * period, frame_rate=frequency,
                    sim_dt=period / steps_per_period, position_noise_sigma=0.0)
