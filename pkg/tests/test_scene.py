import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from driftbench import fieldgen as fg
from driftbench import scenarios
from driftbench import scene as sc
from driftbench import sceneio
from driftbench.scene import DomainError, FlowModel, GradientModel, SceneError

finite = st.floats(-1e3, 1e3)
point = st.tuples(finite, finite)


def test_uniform_flow_everywhere():
    f = FlowModel.uniform(0.6, -0.3)
    for x, t in [((0, 0), 0.0), ((1e4, -3), 55.0)]:
        assert sc.flow_at(f, x, t).tolist() == [0.6, -0.3]


def test_zero_shear_is_uniform():
    f = FlowModel.linear_shear((0.6, -0.3), ((0, 0), (0, 0)), (10, 10))
    assert sc.flow_at(f, (123.0, -45.0)).tolist() == [0.6, -0.3]


def test_vortex_on_positive_x_axis():
    s, r = 250.0, 7.0
    u = sc.flow_at(FlowModel.vortex((3.0, 4.0), s), (3.0 + r, 4.0))
    assert u[0] == pytest.approx(0.0, abs=1e-15)
    assert u[1] == pytest.approx(s / (2 * math.pi * r), rel=1e-14)


def test_vortex_core_is_excluded():
    with pytest.raises(DomainError):
        sc.flow_at(FlowModel.vortex((0, 0), 1.0), (0.5, 0.5))


@given(st.floats(2.0, 300.0), st.floats(0, 2 * math.pi))
def test_vortex_is_divergence_and_curl_free(r, a):
    f = FlowModel.vortex((0.0, 0.0), 40.0)
    x = np.array([r * math.cos(a), r * math.sin(a)])
    h = 1e-4 * r
    dux = (sc.flow_at(f, x + (h, 0)) - sc.flow_at(f, x - (h, 0))) / (2 * h)
    duy = (sc.flow_at(f, x + (0, h)) - sc.flow_at(f, x - (0, h))) / (2 * h)
    scale = 40.0 / (2 * math.pi * r * r)
    assert abs(dux[0] + duy[1]) < 1e-6 * scale
    assert abs(dux[1] - duy[0]) < 1e-6 * scale


@given(point, point, point, st.tuples(*[st.floats(-1, 1)] * 4))
def test_shear_flow_superposes(x1, x2, ref, g):
    G = ((g[0], g[1]), (g[2], g[3]))
    v0 = np.array([0.6, -0.3])
    f = FlowModel.linear_shear(v0, G, ref)
    lhs = sc.flow_at(f, x1) + sc.flow_at(f, x2) - 2 * v0
    rhs = np.array(G) @ (np.array(x1) - ref) + np.array(G) @ (np.array(x2) - ref)
    assert np.allclose(lhs, rhs, rtol=0, atol=1e-9)


def test_rotlet_zero_torque():
    assert sc.swimmer_disturbance(0.0, (0, 0), (5, 3), 1e-3).tolist() == [0.0, 0.0]


def test_rotlet_magnitude_against_si_evaluation():
    torque_n_um, r_um, eta = 2e-13, 10.0, 1e-3
    # same formula in SI units: torque N m, distance m, speed m/s
    speed_si = (torque_n_um * 1e-6) / (8 * math.pi * eta * (r_um * 1e-6) ** 2)
    u = sc.swimmer_disturbance(torque_n_um, (1.0, 2.0), (1.0 + r_um, 2.0), eta)
    assert u[0] == pytest.approx(0.0, abs=1e-20)
    assert u[1] == pytest.approx(speed_si * 1e6, rel=1e-12)
    assert u[1] == pytest.approx(0.07957747154594767, rel=1e-12)


def test_rotlet_distance_scaling():
    a = sc.swimmer_disturbance(1e-12, (0, 0), (4, 3), 1.5e-3)
    b = sc.swimmer_disturbance(1e-12, (0, 0), (8, 6), 1.5e-3)
    # prefactor T/(8 pi eta r^3) falls 8x; speed T/(8 pi eta r^2) falls 4x
    assert np.hypot(*a) / np.hypot(*b) == pytest.approx(4.0, rel=1e-12)
    assert (np.hypot(*a) / 5) / (np.hypot(*b) / 10) == pytest.approx(8.0, rel=1e-12)


def test_rotlet_core_is_excluded():
    with pytest.raises(DomainError):
        sc.swimmer_disturbance(1e-12, (0, 0), (0.3, 0.0), 1e-3)


@given(st.floats(-1e-11, 1e-11), point, point)
def test_rotlet_is_tangential(torque, src, x):
    d = np.array(x) - np.array(src)
    if np.hypot(*d) < 1.0:
        return
    u = sc.swimmer_disturbance(torque, src, x, 1.5e-3)
    assert abs(u @ d) <= 1e-12 * max(1.0, np.hypot(*u) * np.hypot(*d))


def test_gradient_drift_against_si_evaluation():
    m, dbdx, a, eta = 0.02, 1e-3, 5.15, 1.5e-3
    # A um^2 -> A m^2, mT/um -> T/m
    force_si = (m * 1e-12) * (dbdx * 1e3)
    v_si = force_si / (6 * math.pi * eta * a * 1e-6)
    g = GradientModel(((dbdx, 0.0), (0.0, 0.0)))
    f = sc.gradient_force(g, m, 0.0)
    v = f / sc.translational_drag(eta, a)
    assert v[0] == pytest.approx(v_si * 1e6, rel=1e-12)
    assert v[0] == pytest.approx(0.13735054420012544, rel=1e-12)
    assert v[1] == 0.0


def test_alignment_rate_against_si_evaluation():
    m, b, a, eta = 0.02, 5.0, 5.15, 1.5e-3
    rate_si = (m * 1e-12 * b * 1e-3) / (8 * math.pi * eta * (a * 1e-6) ** 3)
    assert sc.alignment_rate(m, b, eta, a) == pytest.approx(rate_si, rel=1e-12)


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-math.pi, math.pi))
def test_gradient_for_drift_inverts(vx, vy, ang):
    g = sc.gradient_for_drift((vx, vy), 0.02, 5.15, 1.5e-3, ang)
    v = sc.gradient_force(g, 0.02, ang) / sc.translational_drag(1.5e-3, 5.15)
    assert np.allclose(v, (vx, vy), rtol=1e-12, atol=1e-15)


def test_default_radii_and_body_length():
    s = sc.swimmer("s", (0, 0))
    assert (s.radius, s.radius_nonmag) == (5.15, 3.4)
    assert s.body_length == pytest.approx(17.1)
    assert s.linkage.rest_length == pytest.approx(5.15 + 3.4 + 0.2)
    assert sc.nonmag_fiducial("p", (0, 0)).radius == 3.4
    assert sc.mag_fiducial("m", (0, 0)).radius == 5.15


@pytest.mark.parametrize("make", [
    lambda: sc.ParticleSpec("p", "nonmag", (0, 0), dipole_moment=0.1),
    lambda: sc.ParticleSpec("m", "mag", (0, 0)),
    lambda: sc.ParticleSpec("m", "mag", (0, 0), dipole_moment=-1.0),
    lambda: sc.ParticleSpec("p", "nonmag", (0, 0), radius=0.0),
    lambda: sc.SwimmerModel(swim_speed=-0.1),
    lambda: sc.Linkage(stiffness_k=0.0),
    lambda: GradientModel(((math.nan, 0), (0, 0))),
])
def test_invalid_specs(make):
    with pytest.raises(SceneError):
        make()


def _scene(**kw):
    base = dict(particles=[sc.nonmag_fiducial("a", (0, 0))], schedule=fg.reference_schedule())
    base.update(kw)
    return sc.Scene(**base)


def test_scene_frame_count():
    assert _scene().n_frames == 1601
    assert _scene().steps_per_frame == 50


@pytest.mark.parametrize("kw", [
    dict(sim_dt=0.003),
    dict(duration=79.99),
    dict(duration=90.0),
    dict(viscosity=0.0),
    dict(particles=[sc.nonmag_fiducial("a", (0, 0)), sc.nonmag_fiducial("a", (1, 1))]),
    dict(particles=[]),
    dict(position_noise_sigma=-1.0),
])
def test_invalid_scenes(kw):
    with pytest.raises(SceneError):
        _scene(**kw)


def test_scene_json_round_trip(tmp_path):
    for scene in (scenarios.swim_scene(seed=3), scenarios.exclusion_scene(), scenarios.flow_scene(),
                  scenarios.scallop_scene(n_periods=2)):
        path = sceneio.dump_scene(scene, tmp_path / "s.json")
        assert sceneio.load_scene(path) == scene


def test_scene_json_rejects_unknown_keys_with_path():
    d = sceneio.scene_to_dict(scenarios.swim_scene())
    d["particles"][2]["colour"] = "red"
    with pytest.raises(sceneio.SceneFormatError) as err:
        sceneio.scene_from_dict(d)
    assert err.value.path == "particles[2].colour"


def test_scene_json_type_errors_name_the_field():
    d = sceneio.scene_to_dict(scenarios.swim_scene())
    d["flow"]["velocity_um_s"] = [1]
    with pytest.raises(sceneio.SceneFormatError, match=r"flow\.velocity_um_s"):
        sceneio.scene_from_dict(d)


def test_scene_json_semantic_errors_are_format_errors():
    d = sceneio.scene_to_dict(scenarios.swim_scene())
    d["sim_dt_s"] = 0.003
    with pytest.raises(sceneio.SceneFormatError):
        sceneio.scene_from_dict(d)


def test_malformed_json_file(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(sceneio.SceneFormatError):
        sceneio.load_scene(p)


def test_seed_falls_back_to_environment(monkeypatch):
    d = sceneio.scene_to_dict(scenarios.flow_scene())
    del d["rng_seed"]
    monkeypatch.setenv(sceneio.SEED_ENV, "1234")
    assert sceneio.scene_from_dict(d).rng_seed == 1234
    monkeypatch.delenv(sceneio.SEED_ENV)
    assert sceneio.scene_from_dict(d).rng_seed == 0
    d["rng_seed"] = 7
    monkeypatch.setenv(sceneio.SEED_ENV, "1234")
    assert sceneio.scene_from_dict(d).rng_seed == 7


def test_shipped_scene_files_load():
    import pathlib
    root = pathlib.Path(__file__).resolve().parent.parent / "scenes"
    for p in sorted(root.glob("*.json")):
        json.loads(p.read_text())
        sceneio.load_scene(p)
