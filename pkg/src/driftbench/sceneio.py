"""Scene JSON documents.

Keys mirror the Scene fields with units in the name. Unknown keys are
rejected; every error message carries the JSON path of the offending value.

Example::

    {
      "duration_s": 80, "frame_rate_hz": 20, "sim_dt_s": 0.001,
      "viscosity_pa_s": 0.0015, "position_noise_sigma_um": 0.5,
      "rng_seed": 7, "swimmer_disturbance_on": false,
      "flow": {"kind": "uniform", "velocity_um_s": [0.6, -0.3]},
      "gradient": {"grad_B_mT_per_um": [[0, 0], [0, 0]]},
      "schedule": {"segments": [{"kind": "constant", "t_start_s": 0, "t_end_s": 80,
                                  "amplitude_mT": 5, "base_angle_rad": 0}]},
      "particles": [{"id": "ps1", "kind": "nonmag", "position0_um": [0, 0]}]
    }
"""

from __future__ import annotations

import json
import math
import os
from pathlib import Path

from . import scene as sc
from .fieldgen import FieldError, FieldSchedule, FieldSegment, SegmentKind

SEED_ENV = "DRIFTBENCH_SEED"


class SceneFormatError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class _Obj:
    """Checked view of a JSON object that tracks consumed keys."""

    def __init__(self, data, path):
        if not isinstance(data, dict):
            raise SceneFormatError(path, "expected an object")
        self.data = data
        self.path = path
        self.used = set()

    def _p(self, key):
        return f"{self.path}.{key}" if self.path else key

    def get(self, key, kind, default=..., check=None):
        self.used.add(key)
        if key not in self.data:
            if default is ...:
                raise SceneFormatError(self._p(key), "required key missing")
            return default
        v = self.data[key]
        p = self._p(key)
        if kind == "number":
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise SceneFormatError(p, f"expected a finite number, got {v!r}")
            v = float(v)
        elif kind == "int":
            if isinstance(v, bool) or not isinstance(v, int):
                raise SceneFormatError(p, f"expected an integer, got {v!r}")
        elif kind == "bool":
            if not isinstance(v, bool):
                raise SceneFormatError(p, f"expected true/false, got {v!r}")
        elif kind == "str":
            if not isinstance(v, str):
                raise SceneFormatError(p, f"expected a string, got {v!r}")
        elif kind == "vec2":
            v = _vec(v, p)
        elif kind == "mat2":
            if not isinstance(v, list) or len(v) != 2:
                raise SceneFormatError(p, "expected a 2x2 array")
            v = (_vec(v[0], f"{p}[0]"), _vec(v[1], f"{p}[1]"))
        if check is not None and not check(v):
            raise SceneFormatError(p, f"value {v!r} out of range")
        return v

    def obj(self, key, default=...):
        self.used.add(key)
        if key not in self.data:
            if default is ...:
                raise SceneFormatError(self._p(key), "required key missing")
            return None
        return _Obj(self.data[key], self._p(key))

    def array(self, key):
        self.used.add(key)
        v = self.data.get(key)
        if not isinstance(v, list):
            raise SceneFormatError(self._p(key), "expected an array")
        return [(item, f"{self._p(key)}[{i}]") for i, item in enumerate(v)]

    def done(self):
        extra = sorted(set(self.data) - self.used)
        if extra:
            raise SceneFormatError(self._p(extra[0]), "unknown key")


def _vec(v, path):
    if (not isinstance(v, list) or len(v) != 2
            or any(isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x) for x in v)):
        raise SceneFormatError(path, f"expected [x, y] finite numbers, got {v!r}")
    return float(v[0]), float(v[1])


_positive = lambda v: v > 0  # noqa: E731
_nonneg = lambda v: v >= 0  # noqa: E731


def _segment(o: _Obj) -> FieldSegment:
    kind = o.get("kind", "str", check=lambda v: v in {k.value for k in SegmentKind})
    seg = FieldSegment(
        kind=SegmentKind(kind),
        t_start=o.get("t_start_s", "number"),
        t_end=o.get("t_end_s", "number"),
        amplitude=o.get("amplitude_mT", "number", 5.0, _positive),
        base_angle=o.get("base_angle_rad", "number", 0.0),
        frequency=o.get("frequency_hz", "number", 0.0, _nonneg),
        angular_amplitude=o.get("angular_amplitude_rad", "number", math.pi / 4),
        rotation_sign=o.get("rotation_sign", "int", 1, lambda v: v in (1, -1)),
        phase=o.get("phase_rad", "number", 0.0),
    )
    o.done()
    return seg


def _flow(o: _Obj) -> sc.FlowModel:
    kind = o.get("kind", "str", check=lambda v: v in {k.value for k in sc.FlowKind})
    if kind == "uniform":
        f = sc.FlowModel.uniform(*o.get("velocity_um_s", "vec2"))
    elif kind == "linear_shear":
        f = sc.FlowModel.linear_shear(o.get("velocity_um_s", "vec2"), o.get("gradient_per_s", "mat2"),
                                      o.get("reference_um", "vec2", (0.0, 0.0)))
    else:
        f = sc.FlowModel.vortex(o.get("center_um", "vec2"), o.get("strength_um2_s", "number"))
    o.done()
    return f


def _particle(o: _Obj) -> sc.ParticleSpec:
    kind = o.get("kind", "str", check=lambda v: v in {k.value for k in sc.ParticleKind})
    pid = o.get("id", "str", check=lambda v: len(v) > 0 and "," not in v)
    pos = o.get("position0_um", "vec2")
    if kind == "nonmag":
        spec = sc.ParticleSpec(pid, kind, pos, radius=o.get("radius_um", "number", sc.RADIUS_NONMAG_UM, _positive))
    elif kind == "mag":
        spec = sc.ParticleSpec(pid, kind, pos, radius=o.get("radius_um", "number", sc.RADIUS_MAG_UM, _positive),
                               dipole_moment=o.get("dipole_moment_A_um2", "number", sc.DEFAULT_MOMENT, _positive),
                               dipole_angle0=o.get("dipole_angle0_rad", "number", 0.0))
    else:
        lo = o.obj("linkage", None)
        linkage = sc.Linkage()
        if lo is not None:
            linkage = sc.Linkage(lo.get("stiffness_N_per_m", "number", 1e-6, _positive),
                                 lo.get("rest_length_um", "number", None, _positive),
                                 lo.get("angular_stiffness_N_um_per_rad", "number", 1e-10, _nonneg))
            lo.done()
        mo = o.obj("model", None)
        model = sc.SwimmerModel()
        if mo is not None:
            mkind = mo.get("kind", "str", check=lambda v: v in {k.value for k in sc.SwimmerModelKind})
            if mkind == "kinematic":
                model = sc.SwimmerModel(
                    mkind, swim_speed=mo.get("swim_speed_um_s", "number", 0.9, _nonneg),
                    swim_direction_mode=mo.get("swim_direction_mode", "str", "dipole_offset",
                                               lambda v: v in ("dipole_offset", "fixed_angle")),
                    fixed_angle=mo.get("fixed_angle_rad", "number", 0.0))
            else:
                model = sc.SwimmerModel(mkind, hydrodynamic_coupling_on=mo.get("hydrodynamic_coupling_on", "bool", True))
            mo.done()
        spec = sc.ParticleSpec(
            pid, kind, pos,
            radius=o.get("radius_mag_um", "number", sc.RADIUS_MAG_UM, _positive),
            radius_nonmag=o.get("radius_nonmag_um", "number", sc.RADIUS_NONMAG_UM, _positive),
            dipole_moment=o.get("dipole_moment_A_um2", "number", sc.DEFAULT_MOMENT, _positive),
            dipole_angle0=o.get("dipole_angle0_rad", "number", 0.0),
            dipole_offset_angle=o.get("dipole_offset_angle_rad", "number", 0.0),
            linkage=linkage, model=model)
    o.done()
    return spec


def scene_from_dict(data) -> sc.Scene:
    """Validate and build a Scene; raises SceneFormatError with a JSON path."""
    root = _Obj(data, "")
    try:
        segs = []
        so = root.obj("schedule")
        for item, path in so.array("segments"):
            try:
                segs.append(_segment(_Obj(item, path)))
            except FieldError as exc:
                raise SceneFormatError(path, str(exc)) from None
        so.done()
        try:
            schedule = FieldSchedule(tuple(segs))
        except FieldError as exc:
            raise SceneFormatError("schedule.segments", str(exc)) from None
        particles = []
        for item, path in root.array("particles"):
            try:
                particles.append(_particle(_Obj(item, path)))
            except sc.SceneError as exc:
                raise SceneFormatError(path, str(exc)) from None
        fo = root.obj("flow", None)
        flow = _flow(fo) if fo is not None else sc.FlowModel()
        go = root.obj("gradient", None)
        gradient = sc.GradientModel()
        if go is not None:
            gradient = sc.GradientModel(go.get("grad_B_mT_per_um", "mat2"))
            go.done()
        seed = root.get("rng_seed", "int", None, lambda v: 0 <= v < 2 ** 64)
        if seed is None:
            raw = os.environ.get(SEED_ENV, "") or "0"
            try:
                seed = int(raw)
            except ValueError:
                raise SceneFormatError("rng_seed", f"{SEED_ENV}={raw!r} is not an integer") from None
        kwargs = dict(
            particles=tuple(particles), schedule=schedule, flow=flow, gradient=gradient,
            viscosity=root.get("viscosity_pa_s", "number", sc.DEFAULT_VISCOSITY, _positive),
            duration=root.get("duration_s", "number", check=_positive),
            frame_rate=root.get("frame_rate_hz", "number", sc.DEFAULT_FRAME_RATE, _positive),
            sim_dt=root.get("sim_dt_s", "number", sc.DEFAULT_SIM_DT, _positive),
            position_noise_sigma=root.get("position_noise_sigma_um", "number", sc.DEFAULT_NOISE_SIGMA, _nonneg),
            rng_seed=seed,
            swimmer_disturbance_on=root.get("swimmer_disturbance_on", "bool", False),
        )
        root.done()
        return sc.Scene(**kwargs)
    except sc.SceneError as exc:
        raise SceneFormatError("", str(exc)) from None


def load_scene(path) -> sc.Scene:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SceneFormatError("", f"cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneFormatError("", f"{path} is not valid JSON: {exc}") from None
    return scene_from_dict(data)


def _segment_dict(s: FieldSegment) -> dict:
    d = {"kind": s.kind.value, "t_start_s": s.t_start, "t_end_s": s.t_end, "amplitude_mT": s.amplitude,
         "base_angle_rad": s.base_angle, "phase_rad": s.phase}
    if s.kind is SegmentKind.ROTATING:
        d.update(frequency_hz=s.frequency, rotation_sign=s.rotation_sign)
    elif s.kind is SegmentKind.OSCILLATING:
        d.update(frequency_hz=s.frequency, angular_amplitude_rad=s.angular_amplitude)
    return d


def _particle_dict(p: sc.ParticleSpec) -> dict:
    d = {"id": p.id, "kind": p.kind.value, "position0_um": list(p.position0)}
    if p.kind is sc.ParticleKind.NONMAG:
        d["radius_um"] = p.radius
    elif p.kind is sc.ParticleKind.MAG:
        d.update(radius_um=p.radius, dipole_moment_A_um2=p.dipole_moment, dipole_angle0_rad=p.dipole_angle0)
    else:
        m = p.model
        model = {"kind": m.kind.value}
        if m.kind is sc.SwimmerModelKind.KINEMATIC:
            model.update(swim_speed_um_s=m.swim_speed, swim_direction_mode=m.swim_direction_mode,
                         fixed_angle_rad=m.fixed_angle)
        else:
            model["hydrodynamic_coupling_on"] = m.hydrodynamic_coupling_on
        d.update(radius_mag_um=p.radius, radius_nonmag_um=p.radius_nonmag, dipole_moment_A_um2=p.dipole_moment,
                 dipole_angle0_rad=p.dipole_angle0, dipole_offset_angle_rad=p.dipole_offset_angle,
                 linkage={"stiffness_N_per_m": p.linkage.stiffness_k, "rest_length_um": p.linkage.rest_length,
                          "angular_stiffness_N_um_per_rad": p.linkage.angular_stiffness_kappa},
                 model=model)
    return d


def scene_to_dict(scene: sc.Scene) -> dict:
    f = scene.flow
    if f.kind is sc.FlowKind.UNIFORM:
        flow = {"kind": "uniform", "velocity_um_s": list(f.velocity)}
    elif f.kind is sc.FlowKind.LINEAR_SHEAR:
        flow = {"kind": "linear_shear", "velocity_um_s": list(f.velocity),
                "gradient_per_s": [list(r) for r in f.gradient], "reference_um": list(f.reference)}
    else:
        flow = {"kind": "vortex", "center_um": list(f.center), "strength_um2_s": f.strength}
    return {
        "duration_s": scene.duration,
        "frame_rate_hz": scene.frame_rate,
        "sim_dt_s": scene.sim_dt,
        "viscosity_pa_s": scene.viscosity,
        "position_noise_sigma_um": scene.position_noise_sigma,
        "rng_seed": scene.rng_seed,
        "swimmer_disturbance_on": scene.swimmer_disturbance_on,
        "flow": flow,
        "gradient": {"grad_B_mT_per_um": [list(r) for r in scene.gradient.grad_B]},
        "schedule": {"segments": [_segment_dict(s) for s in scene.schedule.segments]},
        "particles": [_particle_dict(p) for p in scene.particles],
    }


def dump_scene(scene: sc.Scene, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(scene_to_dict(scene), indent=2) + "\n")
    return path
