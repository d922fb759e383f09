"""driftbench command line: simulate, analyze, sweep, report.

Exit codes: 0 success, 2 input error, 3 data-consistency error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from . import driftest as de
from . import fieldgen as fg
from . import pipeline as pl
from . import swimiso as si
from .dynamics import IntegrationError, simulate
from .sceneio import SEED_ENV, SceneFormatError, load_scene
from .trajectory import TrajectoryError, read_csv, write_csv

EXIT_OK, EXIT_INPUT, EXIT_DATA = 0, 2, 3
FIELD_LOG_RATE_HZ = 1000.0
NO_EXCLUSION = "no exclusion needed"


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _env_seed():
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise CliError(EXIT_INPUT, f"{SEED_ENV}={raw!r} is not an integer") from None


def _pair(text, name):
    try:
        a, b = (float(v) for v in text.split(","))
    except ValueError:
        raise CliError(EXIT_INPUT, f"{name} expects two comma-separated numbers, got {text!r}") from None
    if not b > a:
        raise CliError(EXIT_INPUT, f"{name} must be increasing, got {a:g},{b:g}")
    return a, b


def _load_scene(path):
    try:
        return load_scene(path)
    except SceneFormatError as exc:
        raise CliError(EXIT_INPUT, f"invalid scene {path}: {exc}") from None


def _prepare_out(out):
    out = Path(out)
    if out.exists() and not out.is_dir():
        raise CliError(EXIT_INPUT, f"output path {out} exists and is not a directory")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out, command, inputs, options):
    manifest = {
        "tool": "driftbench",
        "tool_version": __version__,
        "command": command,
        "output_dir": str(out),
        "inputs": [{"path": str(p), "sha256": _sha256(p)} for p in inputs],
        "options": options,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def cmd_simulate(args) -> int:
    scene = _load_scene(args.scene)
    seed = args.seed if args.seed is not None else scene.rng_seed
    try:
        traj = simulate(scene, seed=seed)
    except IntegrationError as exc:
        raise CliError(EXIT_DATA, f"simulation failed: {exc}") from None
    out = _prepare_out(args.out)
    _write_manifest(out, "simulate", [args.scene], {"seed": seed, "field_log_rate_hz": FIELD_LOG_RATE_HZ})
    write_csv(traj, out / "trajectories.csv")
    fg.emit_field_log(scene.schedule, FIELD_LOG_RATE_HZ, out / "field_log.csv")
    print(f"wrote {traj.n_frames} frames x {len(traj.ids)} particles to {out / 'trajectories.csv'}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    if not Path(args.trajectories).is_file():
        raise CliError(EXIT_INPUT, f"trajectory file {args.trajectories} not found")
    if args.scene:
        field = pl.FieldSource(schedule=_load_scene(args.scene).schedule)
        inputs = [args.trajectories, args.scene]
    else:
        try:
            t, xy = fg.read_field_log(args.field_log)
        except (OSError, fg.FieldError, ValueError) as exc:
            raise CliError(EXIT_INPUT, f"invalid field log {args.field_log}: {exc}") from None
        field = pl.FieldSource(log_times=t, log_xy=xy)
        inputs = [args.trajectories, args.field_log]
    window = _pair(args.osc_window, "--osc-window") if args.osc_window else None
    if args.n_perm < 100:
        raise CliError(EXIT_INPUT, f"--n-perm must be at least 100, got {args.n_perm}")
    if not args.exclusion_radius_um > 0:
        raise CliError(EXIT_INPUT, "--exclusion-radius-um must be positive")
    if not args.body_length_um > 0:
        raise CliError(EXIT_INPUT, "--body-length-um must be positive")
    seed = args.seed if args.seed is not None else (_env_seed() or 0)
    opts = pl.AnalysisOptions(args.exclusion_radius_um, window, args.n_perm, seed, args.swimmer_id,
                              args.body_length_um)
    try:
        traj = read_csv(args.trajectories)
    except TrajectoryError as exc:
        raise CliError(EXIT_DATA, f"inconsistent trajectories: {exc}") from None
    except (OSError, ValueError) as exc:
        raise CliError(EXIT_INPUT, f"cannot read {args.trajectories}: {exc}") from None
    try:
        report, figures = pl.analyze(traj, field, opts)
    except pl.ConsistencyError as exc:
        raise CliError(EXIT_DATA, str(exc)) from None
    out = _prepare_out(args.out)
    _write_manifest(out, "analyze", inputs, {
        "exclusion_radius_um": opts.exclusion_radius_um, "osc_window_s": window, "n_perm": opts.n_perm,
        "seed": seed, "swimmer_id": opts.swimmer_id, "body_length_um": opts.body_length_um})
    pl.write_outputs(report, figures, out)
    print(pl.summarize(report))
    return EXIT_OK


def _sweep_one(task):
    path, seed = task
    scene = load_scene(path)
    traj = simulate(scene, seed=seed if seed is not None else scene.rng_seed)
    swimmer = traj.ids_of("swimmer")[0]
    series = de.displacements(traj, kinds="nonmag")
    return [(b.lo, b.hi, b.mean_abs_error, b.count) for b in de.error_vs_distance(traj, series, swimmer)]


def _pool_curves(curves):
    acc = {}
    for curve in curves:
        for lo, hi, err, count in curve:
            s, c = acc.get((lo, hi), (0.0, 0))
            acc[(lo, hi)] = (s + err * count, c + count)
    return [de.DistanceBin(lo, hi, s / c, c) for (lo, hi), (s, c) in sorted(acc.items())]


def cmd_sweep(args) -> int:
    lo, hi = _pair(args.radius_range, "--radius-range")
    if args.jobs < 1:
        raise CliError(EXIT_INPUT, "--jobs must be at least 1")
    for path in args.scene:
        scene = _load_scene(path)
        kinds = [p.kind.value for p in scene.particles]
        if "swimmer" not in kinds:
            raise CliError(EXIT_INPUT, f"scene {path} has no swimmer")
        if "nonmag" not in kinds:
            raise CliError(EXIT_INPUT, f"scene {path} has no non-magnetic fiducials")
    seed = args.seed if args.seed is not None else _env_seed()
    tasks = [(p, seed) for p in args.scene]
    try:
        if args.jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as ex:
                curves = list(ex.map(_sweep_one, tasks))
        else:
            curves = [_sweep_one(t) for t in tasks]
    except IntegrationError as exc:
        raise CliError(EXIT_DATA, f"simulation failed: {exc}") from None
    curves = [[b for b in c if b[0] >= lo - 1e-9 and b[1] <= hi + 1e-9] for c in curves]
    pooled = _pool_curves(curves)
    radius = de.recommend_radius(pooled)
    out = _prepare_out(args.out)
    _write_manifest(out, "sweep", args.scene, {"radius_range_um": [lo, hi], "seed": seed, "jobs": args.jobs})
    with open(out / "error_vs_distance.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scene", "lo_um", "hi_um", "mean_abs_error_um", "count"])
        for path, curve in zip(args.scene, curves):
            for b in curve:
                w.writerow([str(path), f"{b[0]:.17g}", f"{b[1]:.17g}", f"{b[2]:.17g}", b[3]])
        for b in pooled:
            w.writerow(["pooled", f"{b.lo:.17g}", f"{b.hi:.17g}", f"{b.mean_abs_error:.17g}", b.count])
    rec = {"recommended_radius_um": radius,
           "recommendation": NO_EXCLUSION if radius is None else f"{radius:g} um",
           "radius_range_um": [lo, hi], "n_scenes": len(args.scene)}
    (out / "recommendation.json").write_text(json.dumps(rec, indent=2) + "\n")
    print(f"recommended exclusion radius: {rec['recommendation']}")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        report = json.loads(Path(args.report).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_INPUT, f"cannot read report {args.report}: {exc}") from None
    if not isinstance(report, dict):
        raise CliError(EXIT_INPUT, f"{args.report} does not hold a report object")
    print(pl.summarize(report))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="driftbench", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate a scene and write trajectories and a field log")
    s.add_argument("--scene", required=True, help="scene JSON file")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int, default=None, help="noise seed (default: scene rng_seed)")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", help="estimate drift, isolate swimming and draw figures")
    a.add_argument("trajectories", help="trajectories CSV")
    src = a.add_mutually_exclusive_group(required=True)
    src.add_argument("--scene", help="scene JSON supplying the field schedule")
    src.add_argument("--field-log", help="field log CSV (time_s,Bx_mT,By_mT)")
    a.add_argument("--out", required=True, help="output directory")
    a.add_argument("--exclusion-radius-um", type=float, default=de.DEFAULT_EXCLUSION_RADIUS_UM)
    a.add_argument("--osc-window", default=None, metavar="T0,T1", help="override the oscillation window in s")
    a.add_argument("--n-perm", type=int, default=10000)
    a.add_argument("--seed", type=int, default=None, help=f"permutation seed (fallback ${SEED_ENV}, then 0)")
    a.add_argument("--swimmer-id", default=None)
    a.add_argument("--body-length-um", type=float, default=si.BODY_LENGTH_UM)
    a.set_defaults(func=cmd_analyze)

    w = sub.add_parser("sweep", help="error against distance from the swimmer and a recommended radius")
    w.add_argument("--scene", required=True, nargs="+", help="one or more scene JSON files")
    w.add_argument("--out", required=True)
    w.add_argument("--radius-range", default="0,1000", metavar="LO,HI")
    w.add_argument("--jobs", type=int, default=1)
    w.add_argument("--seed", type=int, default=None)
    w.set_defaults(func=cmd_sweep)

    r = sub.add_parser("report", help="print a human-readable summary of report.json")
    r.add_argument("report")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"driftbench {args.command}: error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
