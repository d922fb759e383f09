"""End-to-end analysis of a trajectory file: drift, exclusion, swim isolation, figures."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from . import driftest as de
from . import fieldgen as fg
from . import swimiso as si
from .svgplot import Figure, decimate
from .trajectory import TrajectorySet

FIGURE_NAMES = ("relative_translation.svg", "paths.svg", "field.svg")


class ConsistencyError(ValueError):
    """Trajectories and the supplied schedule or options do not agree."""


@dataclass
class AnalysisOptions:
    exclusion_radius_um: float = de.DEFAULT_EXCLUSION_RADIUS_UM
    osc_window: Optional[tuple] = None
    n_perm: int = 10000
    seed: int = 0
    swimmer_id: Optional[str] = None
    body_length_um: float = si.BODY_LENGTH_UM


@dataclass
class FieldSource:
    """Either a schedule or a logged field, evaluated at the frame times."""
    schedule: Optional[fg.FieldSchedule] = None
    log_times: Optional[np.ndarray] = None
    log_xy: Optional[np.ndarray] = None

    def at(self, times) -> np.ndarray:
        if self.schedule is not None:
            return fg.sample_field(self.schedule, times)
        return fg.nearest_samples(self.log_times, self.log_xy, np.asarray(times))

    def span(self) -> tuple:
        if self.schedule is not None:
            return self.schedule.t_start, self.schedule.t_end
        return float(self.log_times[0]), float(self.log_times[-1])

    def oscillation_window(self):
        if self.schedule is not None:
            osc = self.schedule.oscillating_segments()
            return (osc[0].t_start, osc[0].t_end) if len(osc) == 1 else None
        return fg.infer_oscillation_window(self.log_times, self.log_xy)


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _velocity(est: de.DriftEstimate) -> Optional[np.ndarray]:
    if est.linear_fit is None:
        return None
    return np.array([est.linear_fit.vx, est.linear_fit.vy])


def analyze(traj: TrajectorySet, field: FieldSource, opts: AnalysisOptions = AnalysisOptions()):
    """Run every stage the data supports; returns (report dict, {name: Figure})."""
    t0, t1 = field.span()
    if traj.times[0] < t0 - 1e-6 or traj.times[-1] > t1 + 1e-6:
        raise ConsistencyError(f"trajectories span [{traj.times[0]:g}, {traj.times[-1]:g}] s but the field "
                               f"covers only [{t0:g}, {t1:g}] s")
    warnings = []
    nonmag_ids, mag_ids, swim_ids = traj.ids_of("nonmag"), traj.ids_of("mag"), traj.ids_of("swimmer")
    if opts.swimmer_id is not None and opts.swimmer_id not in swim_ids:
        raise ConsistencyError(f"swimmer {opts.swimmer_id!r} not found in trajectories")
    swimmer_id = opts.swimmer_id or (swim_ids[0] if swim_ids else None)
    if not nonmag_ids:
        warnings.append("no non-magnetic fiducials: flow estimate skipped")
    if not mag_ids:
        warnings.append("no magnetic fiducials: gradient drift and swim isolation skipped")
    if swimmer_id is None:
        warnings.append("no swimmer: exclusion and swim isolation skipped")
    if len(swim_ids) > 1:
        warnings.append(f"several swimmers present; analysing {swimmer_id!r}")
    try:
        nonmag = de.displacements(traj, ids=nonmag_ids)
        mag = de.displacements(traj, ids=mag_ids)
        swim = de.displacements(traj, ids=[swimmer_id])[0] if swimmer_id else None
    except de.DriftError as exc:
        raise ConsistencyError(str(exc)) from None

    report = {"tool_version": __version__, "rmse_um": None, "n": 0, "s": 0, "linear_fit": None,
              "exclusion": {"radius_um": opts.exclusion_radius_um, "center_id": swimmer_id,
                            "excluded_ids": [], "masked_fraction": 0.0},
              "significance": {"p": None, "n_perm": opts.n_perm, "seed": opts.seed}}

    nonmag_est = mag_est = None
    if nonmag:
        if swimmer_id:
            ex = de.exclude(traj, nonmag, de.ExclusionConfig(swimmer_id, opts.exclusion_radius_um))
            report["exclusion"].update(excluded_ids=ex.ever_inside, masked_fraction=ex.masked_fraction,
                                       never_valid_ids=ex.never_valid)
            used = ex.usable()
            if not used:
                warnings.append("every non-magnetic fiducial stays inside the exclusion zone; using unmasked series")
                used = nonmag
        else:
            ex, used = None, nonmag
        nonmag_est = de.median_drift(used)
        report.update(nonmag_est.summary())
        if ex is not None:
            inside_ids = set(ex.ever_inside)
            raw = de.median_drift(nonmag)
            per = de.per_particle_rmse(np.stack([s.delta for s in nonmag]) - nonmag_est.median[None])
            ins = [r for s, r in zip(nonmag, per) if s.particle_id in inside_ids]
            out = [r for s, r in zip(nonmag, per) if s.particle_id not in inside_ids]
            sig = report["significance"]
            sig.update(inside_rmse_um=float(np.mean(ins)) if ins else None,
                       outside_rmse_um=float(np.mean(out)) if out else None,
                       n_inside=len(ins), n_outside=len(out), unmasked_rmse_um=raw.rmse)
            if ins and out:
                sig["p"] = de.significance_inside_outside(ins, out, opts.n_perm, opts.seed)
            else:
                warnings.append("inside/outside significance needs fiducials on both sides of the exclusion radius")
            curve = de.error_vs_distance(traj, nonmag, swimmer_id)
            report["error_vs_distance"] = [
                {"lo_um": b.lo, "hi_um": b.hi, "mean_abs_error_um": b.mean_abs_error, "count": b.count}
                for b in curve]
            report["recommended_radius_um"] = de.recommend_radius(curve)
    if mag:
        mag_est = de.median_drift(mag)
        report["mag"] = mag_est.summary()
    if nonmag_est is not None:
        report["nonmag"] = nonmag_est.summary()
    if nonmag_est is not None and mag_est is not None:
        vn, vm = _velocity(nonmag_est), _velocity(mag_est)
        gd = {"final_displacement_um": mag_est.final - nonmag_est.final}
        if vn is not None and vm is not None:
            dv = vm - vn
            gd.update(velocity_um_s=dv, speed_um_s=float(np.hypot(*dv)), angle_rad=math.atan2(dv[1], dv[0]))
        report["gradient_drift"] = gd

    window = opts.osc_window if opts.osc_window is not None else field.oscillation_window()
    swim_rep = None
    if swim is not None and mag:
        if window is None:
            warnings.append("no oscillation window (none in the schedule and no override): swim isolation skipped")
        else:
            try:
                swim_rep = si.swim_report(swim, mag, window, opts.body_length_um)
            except si.SwimError as exc:
                warnings.append(f"swim isolation skipped: {exc}")
    report["swim"] = None if swim_rep is None else swim_rep.to_dict()
    report["osc_window_s"] = None if window is None else [float(window[0]), float(window[1])]
    report["warnings"] = warnings

    figures = _figures(traj, field, nonmag_est, mag_est, swim, swim_rep, window)
    return _clean(report), figures


def _figures(traj, field, nonmag_est, mag_est, swim, swim_rep, window) -> dict:
    t = traj.times
    figs = {}
    fa = Figure("Swimmer relative to magnetic fiducials", "time (s)", "|swim - mag| (um)")
    if swim_rep is not None:
        rel = swim_rep.relative
        fa.line(*decimate(t, np.hypot(rel.dx, rel.dy)), "|swim - mag|")
    if window is not None:
        fa.shade(window[0], window[1], "oscillating")
    figs[FIGURE_NAMES[0]] = fa

    fb = Figure("Translation from start", "x (um)", "y (um)", equal_aspect=True)
    if nonmag_est is not None:
        fb.line(*decimate(nonmag_est.median[:, 0], nonmag_est.median[:, 1]), "non-magnetic (median)")
    if mag_est is not None:
        fb.line(*decimate(mag_est.median[:, 0], mag_est.median[:, 1]), "magnetic (median)")
    if swim is not None:
        fb.line(*decimate(swim.dx, swim.dy), swim.particle_id)
    figs[FIGURE_NAMES[1]] = fb

    b = field.at(t)
    fc = Figure("Applied field", "time (s)", "B (mT)")
    fc.line(*decimate(t, b[:, 0]), "Bx")
    fc.line(*decimate(t, b[:, 1]), "By")
    if window is not None:
        fc.shade(window[0], window[1])
    figs[FIGURE_NAMES[2]] = fc
    return figs


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, allow_nan=False) + "\n"


def write_outputs(report: dict, figures: dict, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "report.json"]
    paths[0].write_text(report_json(report))
    for name in FIGURE_NAMES:
        paths.append(figures[name].save(out / name))
    return paths


def summarize(report: dict) -> str:
    """Human-readable digest of a report dict."""
    lines = []

    def fmt(v, spec=".3f"):
        return "n/a" if v is None else format(v, spec)

    lines.append(f"flow estimate: n={report.get('n')} fiducials, s={report.get('s')} frames, "
                 f"RMSE {fmt(report.get('rmse_um'))} um")
    nm = report.get("nonmag")
    if nm:
        d = nm["final_displacement_um"]
        lines.append(f"  final displacement ({d[0]:.2f}, {d[1]:.2f}) um")
    lf = report.get("linear_fit")
    if lf:
        lines.append(f"  linear fit v=({lf['vx']:.4f}, {lf['vy']:.4f}) um/s, R^2={lf['r2']:.5f}")
    ex = report.get("exclusion") or {}
    lines.append(f"exclusion: radius {fmt(ex.get('radius_um'), 'g')} um around {ex.get('center_id')}, "
                 f"excluded {len(ex.get('excluded_ids') or [])}, masked fraction {fmt(ex.get('masked_fraction'))}")
    sig = report.get("significance") or {}
    if sig.get("p") is not None:
        lines.append(f"  inside RMSE {fmt(sig.get('inside_rmse_um'))} um vs outside {fmt(sig.get('outside_rmse_um'))}"
                     f" um, p={sig['p']:.4g} ({sig.get('n_perm')} permutations, seed {sig.get('seed')})")
    if report.get("recommended_radius_um", "absent") != "absent":
        r = report.get("recommended_radius_um")
        lines.append("  recommended radius: " + ("no exclusion needed" if r is None else f"{r:g} um"))
    gd = report.get("gradient_drift")
    if gd and gd.get("speed_um_s") is not None:
        lines.append(f"gradient drift: {gd['speed_um_s']:.4f} um/s at {math.degrees(gd['angle_rad']):.1f} deg")
    sw = report.get("swim")
    if sw:
        lines.append(f"swimmer {sw['swimmer_id']}: {sw['speed_um_s']:.3f} um/s = {sw['speed_bl_s']:.4f} BL/s "
                     f"(BL {sw['body_length_um']:g} um), window {sw['osc_window_s'][0]:g}-{sw['osc_window_s'][1]:g} s")
        lines.append(f"  net relative displacement {sw['net_relative_displacement_um']:.2f} um, "
                     f"responded={sw['responded']}, pre-window RMSE {sw['pre_osc_rmse_um']:.2f} um")
        if sw.get("direction_change_deg") is not None:
            lines.append(f"  direction change {sw['direction_change_deg']:.1f} deg")
        else:
            lines.append("  direction change undefined (speed below 0.05 um/s on one side)")
    for w in report.get("warnings") or []:
        lines.append(f"warning: {w}")
    return "\n".join(lines)
