import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from driftbench import driftest as de
from driftbench import dynamics as dyn
from driftbench import scenarios
from driftbench.driftest import DisplacementSeries, DriftError, ExclusionConfig
from driftbench.trajectory import TrajectorySet


def series(pid, delta, dt=0.05):
    delta = np.asarray(delta, dtype=float)
    return DisplacementSeries(pid, np.arange(len(delta)) * dt, delta)


def make_traj(xy, kinds=None, dt=0.05):
    xy = np.asarray(xy, dtype=float)
    n, f = xy.shape[:2]
    ids = [f"p{i:02d}" for i in range(n)]
    kinds = kinds or ["nonmag"] * n
    return TrajectorySet(np.arange(f) * dt, ids, kinds, xy, np.full((n, f), np.nan))


def brute_rmse(deltas, median):
    # direct transcription of the double sum over particles and post-initial frames
    n, f = len(deltas), len(median)
    total = 0.0
    for i in range(n):
        for j in range(1, f):
            ex = deltas[i][j][0] - median[j][0]
            ey = deltas[i][j][1] - median[j][1]
            total += ex * ex + ey * ey
    return math.sqrt(total / (n * (f - 1)))


def test_stationary_particle_has_zero_displacement():
    traj = make_traj(np.tile([[3.0, 4.0]], (1, 10, 1)))
    (s,) = de.displacements(traj)
    assert not s.delta.any()


def test_uniform_motion_displacements():
    t = np.arange(21) * 0.05
    traj = make_traj(np.stack([np.c_[2 + t, np.full_like(t, 5.0)]]))
    (s,) = de.displacements(traj)
    assert np.allclose(s.dx, 0.05 * np.arange(21), atol=1e-14)
    assert s.delta[0].tolist() == [0.0, 0.0]


def test_missing_frame_names_particle():
    xy = np.zeros((2, 5, 2))
    xy[1, 3] = np.nan
    with pytest.raises(DriftError, match="p01"):
        de.displacements(make_traj(xy))


def test_kind_filter():
    traj = make_traj(np.zeros((3, 4, 2)), kinds=["nonmag", "mag", "nonmag"])
    assert [s.particle_id for s in de.displacements(traj, "nonmag")] == ["p00", "p02"]


def test_first_frame_must_be_zero():
    with pytest.raises(DriftError):
        series("x", [[1.0, 0.0], [2.0, 0.0]])


def test_median_of_one_is_itself():
    s = series("a", np.c_[np.arange(5.0), -np.arange(5.0)])
    assert np.array_equal(de.median_series([s]), s.delta)


def test_median_order_statistic():
    ss = [series(f"s{k}", [[0, 0], [v, 0]]) for k, v in enumerate((1.0, 2.0, 10.0))]
    assert de.median_series(ss)[1, 0] == 2.0


def test_median_even_count_averages_central_pair():
    ss = [series(f"s{k}", [[0, 0], [v, -v]]) for k, v in enumerate((1.0, 2.0, 4.0, 10.0))]
    assert de.median_series(ss)[1].tolist() == [3.0, -3.0]


def test_median_ignores_single_outlier():
    common = np.c_[np.linspace(0, 5, 11), np.linspace(0, -2, 11)]
    ss = [series(f"s{k}", common) for k in range(3)] + [series("out", common * 40)]
    assert np.array_equal(de.median_series(ss), common)


def test_median_errors():
    with pytest.raises(DriftError):
        de.median_series([])
    with pytest.raises(DriftError):
        de.median_series([series("a", np.zeros((3, 2))), series("b", np.zeros((3, 2)), dt=0.1)])


def test_rmse_of_identical_series_is_zero():
    s = np.c_[np.arange(6.0), np.arange(6.0)]
    ss = [series(f"s{k}", s) for k in range(3)]
    assert de.median_drift(ss).rmse == 0.0


def test_rmse_constant_offset_hand_value():
    e = 3.0
    base = np.zeros((11, 2))
    off = np.zeros((11, 2))
    off[1:, 0] = e
    ss = [series("a", base), series("b", base), series("c", off)]
    est = de.median_drift(ss)
    assert not est.median.any()
    assert est.rmse == pytest.approx(e / math.sqrt(3), rel=1e-15)
    assert (est.n_particles, est.n_frames_used) == (3, 10)


def test_rmse_errors():
    with pytest.raises(DriftError):
        de.rmse([series("a", np.zeros((1, 2)))], np.zeros((1, 2)))


def test_rmse_matches_brute_force_on_random_instances():
    rng = np.random.default_rng(11)
    for _ in range(30):
        n, f = rng.integers(2, 13), rng.integers(11, 400)
        d = rng.normal(0, 3, (n, f, 2)).cumsum(axis=1)
        d -= d[:, :1]
        ss = [series(f"s{i}", d[i]) for i in range(n)]
        med = de.median_series(ss)
        want = brute_rmse(d.tolist(), med.tolist())
        assert de.rmse(ss, med) == pytest.approx(want, rel=1e-9)


def test_linear_fit_exact_line():
    t = np.arange(50) * 0.05
    med = np.c_[0.6 * t, -0.3 * t]
    for origin in (False, True):
        fit = de.linear_fit_r2(med, t, through_origin=origin)
        assert fit.vx == pytest.approx(0.6, rel=1e-12) and fit.vy == pytest.approx(-0.3, rel=1e-12)
        assert fit.r2 == pytest.approx(1.0, abs=1e-12)


def test_linear_fit_zero_drift_convention():
    fit = de.linear_fit_r2(np.zeros((10, 2)), np.arange(10.0))
    assert (fit.vx, fit.vy, fit.r2) == (0.0, 0.0, 1.0)


def test_linear_fit_needs_three_frames():
    with pytest.raises(DriftError):
        de.linear_fit_r2(np.zeros((2, 2)), [0.0, 1.0])


@given(st.integers(0, 2 ** 31 - 1), st.booleans())
def test_r2_never_exceeds_one(seed, origin):
    rng = np.random.default_rng(seed)
    med = rng.normal(size=(20, 2)).cumsum(axis=0)
    med[0] = 0
    assert de.linear_fit_r2(med, np.arange(20.0), origin).r2 <= 1.0 + 1e-12


def _orbit_traj(inside_spans, n_frames=31, u=(1.0, 0.0), radius=10.0):
    """Fiducial in uniform flow, swimmer placed on top of it during ``inside_spans`` (seconds)."""
    t = np.arange(n_frames) * 1.0
    fid = np.c_[u[0] * t, u[1] * t]
    sw = fid + [3 * radius, 0.0]
    for a, b in inside_spans:
        m = (t >= a) & (t <= b)
        sw[m] = fid[m] + [0.5 * radius, 0.0]
    return TrajectorySet(t, ["f", "s"], ["nonmag", "swimmer"], np.stack([fid, sw]), np.full((2, n_frames), np.nan))


def test_exclusion_always_outside_is_identity():
    traj = _orbit_traj([])
    ss = de.displacements(traj, "nonmag")
    out = de.apply_exclusion(traj, ss, ExclusionConfig("s", 10.0))
    assert np.array_equal(out[0].delta, ss[0].delta)


def test_exclusion_always_inside_zeroes():
    traj = _orbit_traj([(0, 30)])
    ss = de.displacements(traj, "nonmag")
    res = de.exclude(traj, ss, ExclusionConfig("s", 10.0))
    assert not res.series[0].delta.any()
    assert res.never_valid == ["f"] and res.usable() == []


def test_exclusion_resets_from_exit_point():
    # outside up to 10 s, inside strictly between 10 and 20 s, outside from 20 s: 20 s of valid increments
    traj = _orbit_traj([(10.5, 19.5)])
    ss = de.displacements(traj, "nonmag")
    out = de.apply_exclusion(traj, ss, ExclusionConfig("s", 10.0))
    assert out[0].delta[-1].tolist() == pytest.approx([20.0, 0.0], abs=1e-12)


def test_exclusion_mode_off_and_bad_radius():
    traj = _orbit_traj([(0, 30)])
    ss = de.displacements(traj, "nonmag")
    assert de.apply_exclusion(traj, ss, ExclusionConfig("s", 10.0, mode="off"))[0] is ss[0]
    with pytest.raises(DriftError):
        ExclusionConfig("s", 0.0)
    with pytest.raises(DriftError):
        ExclusionConfig("s", 1.0, mode="sometimes")
    with pytest.raises(DriftError):
        de.apply_exclusion(traj, ss, ExclusionConfig("nobody", 1.0))


def _random_scene_traj(seed, n=6, f=40):
    rng = np.random.default_rng(seed)
    xy = rng.uniform(-200, 200, (n, 1, 2)) + rng.normal(0, 1, (n, f, 2)).cumsum(axis=1)
    kinds = ["nonmag"] * (n - 1) + ["swimmer"]
    return make_traj(xy, kinds)


@given(st.integers(0, 10 ** 6))
def test_exclusion_radius_limits(seed):
    traj = _random_scene_traj(seed)
    ss = de.displacements(traj, "nonmag")
    tiny = de.apply_exclusion(traj, ss, ExclusionConfig("p05", 1e-9))
    huge = de.apply_exclusion(traj, ss, ExclusionConfig("p05", 1e9))
    for a, b in zip(tiny, ss):
        assert np.array_equal(a.delta, b.delta)
    assert all(not s.delta.any() for s in huge)


def _transform(traj, rot=0.0, shift=(0.0, 0.0)):
    c, s = math.cos(rot), math.sin(rot)
    R = np.array([[c, -s], [s, c]])
    return TrajectorySet(traj.times, traj.ids, traj.kinds, traj.xy @ R.T + shift, traj.theta), R


@given(st.integers(0, 10 ** 6), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_translation_invariance(seed, sx, sy):
    traj = _random_scene_traj(seed)
    moved, _ = _transform(traj, shift=(sx, sy))
    a = de.median_drift(de.displacements(traj, "nonmag"))
    b = de.median_drift(de.displacements(moved, "nonmag"))
    assert np.allclose(a.median, b.median, atol=1e-9)
    assert a.rmse == pytest.approx(b.rmse, abs=1e-9)


@given(st.integers(0, 10 ** 6), st.integers(3, 8), st.floats(-math.pi, math.pi))
def test_rotation_equivariance(seed, n, rot):
    traj = _random_scene_traj(seed, n=n + 1)
    turned, R = _transform(traj, rot=rot)
    a = de.median_drift(de.displacements(traj, "nonmag"))
    b = de.median_drift(de.displacements(turned, "nonmag"))
    assert np.allclose(b.median, a.median @ R.T, rtol=0, atol=1e-9)
    assert b.rmse == pytest.approx(a.rmse, abs=1e-9)


def test_lab_axes_are_not_rotation_equivariant():
    d = np.array([[[0, 0], [3.0, 1.0]], [[0, 0], [2.0, 2.0]], [[0, 0], [1.0, 0.0]]])
    a = math.pi / 4
    R = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
    lab = de.marginal_median(d, "lab")
    turned = de.marginal_median(d @ R.T, "lab")
    assert not np.allclose(turned, lab @ R.T)
    assert np.allclose(de.marginal_median(d @ R.T), de.marginal_median(d) @ R.T, atol=1e-12)


def test_drift_axes_match_lab_axes_for_axis_aligned_drift():
    rng = np.random.default_rng(4)
    d = rng.normal(0, 1, (5, 30, 2))
    d[..., 1] = rng.integers(-3, 4, (5, 30))
    d[:, 0] = 0
    d[0, 1, 1] -= d[..., 1].sum()
    d[..., 0] += np.arange(30) * 0.1
    assert d.reshape(-1, 2).sum(axis=0)[1] == 0.0
    assert np.array_equal(de.drift_axes(d), np.eye(2))
    assert np.array_equal(de.marginal_median(d), de.marginal_median(d, "lab"))
    with pytest.raises(DriftError):
        de.marginal_median(d, "geo")


@settings(max_examples=30)
@given(st.integers(0, 10 ** 6), st.sampled_from([3, 5, 7]))
def test_median_minimizes_l1_over_shifts(seed, n):
    rng = np.random.default_rng(seed)
    d = rng.normal(0, 2, (n, 15, 2)).cumsum(axis=1)
    d -= d[:, :1]
    ss = [series(f"s{i}", d[i]) for i in range(n)]
    med = de.median_series(ss)
    # optimality holds per component of the axes the median is taken in
    R = de.drift_axes(d)
    local = d @ R
    l1 = lambda ref: np.abs(local - (ref @ R)[None]).sum()  # noqa: E731
    best = l1(med)
    for sx in np.linspace(-1, 1, 9):
        for sy in np.linspace(-1, 1, 9):
            ref = med + np.array([sx, sy]) @ R.T
            ref[0] = 0
            assert l1(ref) >= best - 1e-9


def test_error_vs_distance_bins_are_nonempty_and_sorted():
    traj = dyn.simulate(scenarios.exclusion_scene(seed=2))
    curve = de.error_vs_distance(traj, de.displacements(traj, "nonmag"), "swim1")
    assert all(b.count > 0 for b in curve)
    assert [b.lo for b in curve] == sorted(b.lo for b in curve)
    assert all(b.hi - b.lo == 10.0 for b in curve)
    # nothing sits 50-80 um from the swimmer in this layout
    assert not any(50 <= b.lo < 80 for b in curve)


def test_error_vs_distance_flat_without_disturbance():
    traj = dyn.simulate(scenarios.exclusion_scene(seed=2, disturbance=False))
    curve = [b for b in de.error_vs_distance(traj, de.displacements(traj, "nonmag"), "swim1") if b.count >= 30]
    errs = np.array([b.mean_abs_error for b in curve])
    assert np.max(np.abs(errs / errs.mean() - 1)) < 0.2
    assert de.recommend_radius(curve) is None


def test_recommend_radius_on_synthetic_curve():
    mk = lambda lo, e: de.DistanceBin(lo, lo + 10, e, 100)  # noqa: E731
    curve = [mk(0, 5.0), mk(10, 2.0), mk(20, 1.3), mk(30, 1.1), mk(40, 1.0), mk(50, 1.0), mk(60, 1.0)]
    assert de.recommend_radius(curve) == 30.0
    assert de.recommend_radius([mk(0, 1.0), mk(10, 1.0)]) is None
    assert de.recommend_radius([]) is None


def test_permutation_identical_groups():
    v = [3.0, 3.0, 3.0, 3.0]
    assert de.significance_inside_outside(v, v, n_perm=500) > 0.5


def test_permutation_separated_groups():
    inside = [22.9, 24.1, 21.0, 25.5, 23.3]
    outside = [7.0, 6.1, 7.9, 6.6, 7.4, 8.0, 6.9]
    p = de.significance_inside_outside(inside, outside, n_perm=10000, seed=1)
    assert p < 0.01
    # exact answer for this split is 2 / C(12,5); Monte Carlo sits close to it
    assert p < 5 * 2 / math.comb(12, 5) + 5e-4


@given(st.lists(st.floats(0, 50), min_size=1, max_size=6), st.lists(st.floats(0, 50), min_size=1, max_size=6),
       st.integers(0, 1000))
def test_permutation_symmetries(a, b, seed):
    p = de.significance_inside_outside(a, b, n_perm=200, seed=seed)
    assert 0 < p <= 1
    assert de.significance_inside_outside(b, a, n_perm=200, seed=seed) == p
    assert de.significance_inside_outside(a[::-1], b[::-1], n_perm=200, seed=seed) == p


def test_permutation_errors():
    with pytest.raises(DriftError):
        de.significance_inside_outside([1.0], [2.0], n_perm=99)
    with pytest.raises(DriftError):
        de.significance_inside_outside([], [2.0])


def test_pure_uniform_flow_rmse_is_noise_floor():
    # with no spatial variation only tracking noise remains: about 0.9 um at sigma 0.5
    vals = [de.median_drift(de.displacements(dyn.simulate(scenarios.flow_scene(seed=s, uniform=True)))).rmse
            for s in range(10)]
    assert 0.75 < np.mean(vals) < 1.0
    shear = de.median_drift(de.displacements(dyn.simulate(scenarios.flow_scene(seed=0)))).rmse
    assert shear > 1.0
