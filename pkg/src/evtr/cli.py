"""Command-line entry point: ``evtr {make-world,teach,repeat,baseline,eval,bench}``.

Exit codes: 0 success, 1 run failure (repeat aborted), 2 usage or input error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import sys
from pathlib import Path
from typing import Optional, Sequence

from evtr import evaluation, sim
from evtr.config import Config, ConfigError
from evtr.controller import CorrectionReport
from evtr.topomap import MapFormatError, TopometricMap

EXIT_OK, EXIT_RUN_FAILED, EXIT_INPUT = 0, 1, 2

TRACKS = {
    "line10": [(0.0, 0.0), (10.0, 0.0)],
    "loop50": [(0.0, 0.0), (16.0, 0.0), (16.0, 10.0), (0.0, 10.0), (0.0, 2.0)],
}


class InputError(Exception):
    """Bad user input; reported with exit status 2."""


def _require(path: Optional[str], what: str) -> Path:
    if path is None:
        raise InputError(f"{what} not given")
    p = Path(path)
    if not p.is_file():
        raise InputError(f"{what} not found: {p}")
    return p


def load_config(path: Optional[str], overrides: Sequence[str]) -> Config:
    cfg = Config.load(_require(path, "config file")) if path else Config()
    return cfg.with_overrides(overrides) if overrides else cfg


def trace_path_for(map_path: Path) -> Path:
    return map_path.with_name(map_path.name + ".trace.csv")


def make_run_dir(parent: Path, prefix: str, name: Optional[str]) -> Path:
    """``parent/name`` if given, else ``parent/<prefix>-<timestamp>`` (suffixed on clashes)."""
    parent.mkdir(parents=True, exist_ok=True)
    if name:
        run = parent / name
        run.mkdir(exist_ok=True)
        return run
    stamp = _dt.datetime.now().strftime("%Y%m%d-%H%M%S")
    for n in range(1000):
        run = parent / (f"{prefix}-{stamp}" + (f"-{n}" if n else ""))
        try:
            run.mkdir()
            return run
        except FileExistsError:
            continue
    raise InputError(f"could not create a run directory under {parent}")


def write_corrections(path: Path, reports: Sequence[CorrectionReport]) -> None:
    with open(path, "w") as fh:
        fh.write(CorrectionReport.CSV_HEADER + "\n")
        for r in reports:
            fh.write(r.csv_row() + "\n")


# -- commands ---------------------------------------------------------------


def cmd_make_world(args) -> int:
    if args.track:
        waypoints = TRACKS[args.track]
    else:
        waypoints = sim.read_path(_require(args.path, "path file"))
    world = sim.make_world(waypoints, seed=args.seed)
    sim.write_world(args.out, world)
    if args.path_out:
        sim.write_path(args.path_out, waypoints)
    print(f"landmarks={len(world.landmarks)}")
    return EXIT_OK


def cmd_teach(args) -> int:
    cfg = load_config(args.config, args.set)
    world = sim.read_world(_require(args.world, "world file"))
    waypoints = sim.read_path(_require(args.path, "path file"))
    tmap, trace = sim.run_teach(world, waypoints, cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmap.save(out)
    trace.to_csv(trace_path_for(out))
    cfg.dump(out.with_name(out.name + ".config"))
    print(f"nodes={len(tmap)}")
    return EXIT_OK


def cmd_repeat(args, corrections: Optional[bool] = None) -> int:
    cfg = load_config(args.config, args.set)
    world = sim.read_world(_require(args.world, "world file"))
    map_path = _require(args.map, "map file")
    tmap = TopometricMap.load(map_path)
    teach = sim.Trace.from_csv(_require(args.teach_trace or str(trace_path_for(map_path)),
                                        "teach trace"))
    if corrections is None:
        corrections = not args.no_corrections
    run = make_run_dir(Path(args.out_dir), "repeat" if corrections else "baseline", args.name)
    cfg.dump(run / "config.txt")
    result = sim.run_repeat(world, tmap, teach, cfg, corrections)
    result.trace.to_csv(run / "trace.csv")
    write_corrections(run / "corrections.csv", result.reports)
    err = evaluation.ate(teach, result.trace)
    summary = evaluation.summary_lines([
        ("outcome", result.outcome),
        ("corrections", str(corrections).lower()),
        ("length_pct", float(result.progress_pct)),
        ("ate_mean_m", err.mean),
        ("ate_max_m", err.max),
        ("ate_rms_m", err.rms),
        ("ticks", len(result.reports)),
        ("duration_s", float(result.trace.t[-1]) / 1e6),
        ("reason", result.reason or "none"),
    ])
    (run / "summary.txt").write_text(summary)
    sys.stdout.write(f"run_dir={run}\n" + summary)
    return EXIT_OK if result.completed else EXIT_RUN_FAILED


def cmd_eval(args) -> int:
    teach = sim.Trace.from_csv(_require(args.teach_trace, "teach trace"))
    rep = sim.Trace.from_csv(_require(args.repeat_trace, "repeat trace"))
    ref = evaluation.teach_prefix(teach, args.progress) if args.progress is not None else teach
    res = evaluation.ate(ref, rep)
    if args.csv:
        evaluation.write_ate_csv(args.csv, res)
    print(f"{'metric':<10}{'value_m':>12}")
    for name, val in (("mean", res.mean), ("max", res.max), ("rms", res.rms)):
        print(f"{name:<10}{val:>12.4f}")
    print(f"{'poses':<10}{len(res):>12d}")
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = load_config(args.config, args.set)
    tmap = TopometricMap.load(_require(args.map, "map file"))
    variants = [(cfg.M, True)]
    if args.compare:
        variants += [(1, True), (cfg.M, False)]
    for factor, concat in variants:
        rep = evaluation.bench_vision(tmap, s=cfg.s, factor=factor, iterations=args.iterations,
                                      concatenated=concat, hop_us=cfg.control_hop_us)
        sys.stdout.write(rep.summary())
        if not rep.overhead_ok:
            print("warning=timer overhead above 1% of the median sample")
        print()
    return EXIT_OK


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="evtr", description="Event-camera teach and repeat in simulation.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key=value config file (defaults if omitted)")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key; repeatable")

    mw = sub.add_parser("make-world", help="generate a landmark world along a path")
    src = mw.add_mutually_exclusive_group(required=True)
    src.add_argument("--path", help="waypoint file (x,y per line)")
    src.add_argument("--track", choices=sorted(TRACKS), help="built-in track")
    mw.add_argument("--seed", type=int, default=0)
    mw.add_argument("--out", required=True, help="world file to write")
    mw.add_argument("--path-out", help="also write the waypoints here")
    mw.set_defaults(func=cmd_make_world)

    t = sub.add_parser("teach", help="drive a path and record a map")
    common(t)
    t.add_argument("--world", required=True)
    t.add_argument("--path", required=True)
    t.add_argument("--out", required=True, help="map file; the trace goes to <out>.trace.csv")
    t.set_defaults(func=cmd_teach)

    for name, helptext in (("repeat", "repeat a taught route"),
                           ("baseline", "repeat on odometry alone")):
        r = sub.add_parser(name, help=helptext)
        common(r)
        r.add_argument("--world", required=True)
        r.add_argument("--map", required=True)
        r.add_argument("--teach-trace", help="defaults to <map>.trace.csv")
        r.add_argument("--out-dir", default="runs", help="parent of the run directory")
        r.add_argument("--name", help="run directory name (default: timestamped)")
        if name == "repeat":
            r.add_argument("--no-corrections", action="store_true", help="disable visual corrections")
            r.set_defaults(func=cmd_repeat)
        else:
            r.set_defaults(func=lambda a: cmd_repeat(a, corrections=False))

    e = sub.add_parser("eval", help="ATE of a repeat trace against a teach trace")
    e.add_argument("teach_trace")
    e.add_argument("repeat_trace")
    e.add_argument("--progress", type=float, help="only the first PCT percent of the teach path")
    e.add_argument("--csv", help="write per-pose distances here")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="time the vision step on a map")
    common(b)
    b.add_argument("--map", required=True)
    b.add_argument("--iterations", type=int, default=300)
    b.add_argument("--compare", action="store_true", help="also time M=1 and the per-frame path")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except sim.SimulationError as exc:
        print(f"evtr {args.command}: run failed: {exc}", file=sys.stderr)
        return EXIT_RUN_FAILED
    except (InputError, ConfigError, MapFormatError, ValueError, OSError) as exc:
        print(f"evtr {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
