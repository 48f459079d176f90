"""Command-line entry point.

Subcommands: ``synth``, ``solve``, ``eval``, ``experiment`` and ``models``.
Progress goes to stdout as one JSON object per line; diagnostics go to
stderr.  Exit codes: 0 success, 2 invalid configuration or input, 3 no
feasible assignment, 4 time limit hit before any goal was found.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import PRESETS, ConfigError, RunConfig, load_config
from .evaluation import evaluate
from .experiment import StageError, SynthesisSpec, build_task, preprocess, run_experiment, synthesize_trials
from .fileio import FormatError
from .scenefiles import read_models, read_poses, read_scene, write_models, write_poses, write_scene
from .search import solve
from .shapes import demo_models

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_TIMEOUT = 4


def _emit(record: dict) -> None:
    def clean(v):
        return None if isinstance(v, float) and not math.isfinite(v) else v

    print(json.dumps({k: clean(v) for k, v in record.items()}), flush=True)


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("search and model parameters")
    g.add_argument("--preset", default="default", choices=sorted(PRESETS))
    g.add_argument("--delta", type=float, help="noise threshold in metres")
    g.add_argument("--w", type=float, help="suboptimality factor (>= 1)")
    g.add_argument("--grid-xy", type=float, help="translation grid step in metres")
    g.add_argument("--grid-yaw", type=float, help="yaw grid step in degrees")
    g.add_argument("--time-limit", type=float, help="search time limit in seconds")
    g.add_argument("--workers", type=int, help="successor-generation processes")
    g.add_argument("--seed", type=int, help="seed for synthesis and RANSAC")
    g.add_argument("--icp-cap", type=float, help="ICP correspondence cap in metres")
    g.add_argument("--no-icp", action="store_true", help="disable ICP refinement")
    g.add_argument("--remove-table", action="store_true", help="strip the dominant plane first")
    g.add_argument("--models", type=Path, help="directory with models.json (default: built-in demo models)")


def _config(args) -> RunConfig:
    return load_config(
        args.preset,
        delta=args.delta,
        w=args.w,
        grid_xy=args.grid_xy,
        grid_yaw=args.grid_yaw,
        time_limit=args.time_limit,
        workers=args.workers,
        seed=args.seed,
        icp_cap=args.icp_cap,
        icp=False if args.no_icp else None,
        remove_table=True if args.remove_table else None,
    )


def _models(args):
    return read_models(args.models) if args.models else demo_models()


def _cmd_models(args) -> int:
    write_models(args.out, demo_models())
    _emit({"event": "models", "dir": str(args.out)})
    return EXIT_OK


def _cmd_synth(args) -> int:
    cfg = _config(args)
    models = _models(args)
    spec = SynthesisSpec(
        tuple(args.objects.split(",")), 1, args.noise, cfg.seed, not args.off_grid, args.table
    )
    scene = synthesize_trials(spec, models, cfg)[0]
    args.out.mkdir(parents=True, exist_ok=True)
    pcd = args.out / "scene.pcd"
    write_scene(pcd, scene)
    _emit({"event": "synth", "scene": str(pcd), "points": len(scene.observed), "required": list(scene.required)})
    return EXIT_OK


def _solve_exit(res) -> int:
    if res.goal is not None:
        return EXIT_OK
    return EXIT_TIMEOUT if res.timed_out else EXIT_INFEASIBLE


def _cmd_solve(args) -> int:
    cfg = _config(args)
    models = _models(args)
    observed, camera, required, _truth = read_scene(args.scene)
    pre = preprocess(observed, camera, cfg)
    task = build_task(pre.observed, pre.camera, models, required, cfg)
    res = solve(task, cfg.search_config(), on_event=_emit)
    if res.goal is not None and args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        write_poses(
            args.out / "poses.json",
            res.poses,
            {"cost": res.cost, "expansions": res.expansions, "generated": res.generated, "timed_out": res.timed_out},
        )
    _emit({"event": "result", "cost": res.cost, "poses": [[h.model_id, h.pose.x, h.pose.y, h.pose.theta] for h in res.poses]})
    return _solve_exit(res)


def _cmd_eval(args) -> int:
    models = _models(args)
    predicted = read_poses(args.poses)
    truth = read_poses(args.truth)
    rep = evaluate(predicted, truth, models)
    doc = rep.to_dict()
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "report.json").write_text(json.dumps(doc, indent=2) + "\n")
    _emit({"event": "eval", "objects": rep.n_objects, "histogram": doc["histogram"]})
    return EXIT_OK


def _cmd_experiment(args) -> int:
    cfg = _config(args)
    models = _models(args)
    if args.scene:
        source = list(args.scene)
    elif args.spec is not None:
        try:
            source = SynthesisSpec.from_dict(json.loads(args.spec.read_text()))
        except (json.JSONDecodeError, TypeError) as exc:
            raise ConfigError(f"bad synthesis spec {args.spec}: {exc}") from exc
    else:
        objects = tuple(o for o in args.objects.split(",") if o)
        source = SynthesisSpec(objects, args.trials, args.noise, cfg.seed, not args.off_grid, args.table)
    result = run_experiment(source, cfg, models, args.out, on_event=_emit if args.verbose else None)
    for rec in result.records:
        _emit({"event": "trial", **{k: rec[k] for k in ("trial", "cost", "expansions", "generated", "timed_out")}})
    if result.report is not None:
        _emit({"event": "report", "objects": result.report.n_objects, "histogram": result.report.to_dict()["histogram"]})
    codes = [_solve_exit(r) for r in result.results]
    return max(codes) if codes else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="scenesearch", description=__doc__.split("\n\n")[0])
    ap.add_argument("--log-level", default="WARNING")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("models", help="write the built-in demo models to a directory")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(fn=_cmd_models)

    p = sub.add_parser("synth", help="render a random scene with known truth")
    _add_run_flags(p)
    p.add_argument("--objects", default="can,wedge", help="comma-separated model ids")
    p.add_argument("--noise", type=float, default=0.0, help="Gaussian noise sigma in metres")
    p.add_argument("--off-grid", action="store_true", help="draw continuous truth poses")
    p.add_argument("--table", action="store_true", help="render a table slab under the objects")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("solve", help="find object poses in a scene")
    _add_run_flags(p)
    p.add_argument("--scene", type=Path, required=True, help="PCD file with a .json side file")
    p.add_argument("--out", type=Path)
    p.set_defaults(fn=_cmd_solve)

    p = sub.add_parser("eval", help="score predicted poses against truth")
    p.add_argument("--models", type=Path)
    p.add_argument("--poses", type=Path, required=True)
    p.add_argument("--truth", type=Path, required=True, help="poses file or scene side file with truth")
    p.add_argument("--out", type=Path)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("experiment", help="synthesize or load scenes, solve and score them")
    _add_run_flags(p)
    p.add_argument("--scene", type=Path, action="append", help="scene PCD (repeatable); overrides synthesis")
    p.add_argument("--spec", type=Path, help="JSON synthesis recipe")
    p.add_argument("--objects", default="can,wedge")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--off-grid", action="store_true")
    p.add_argument("--table", action="store_true")
    p.add_argument("--verbose", action="store_true", help="stream per-expansion events")
    p.add_argument("--out", type=Path)
    p.set_defaults(fn=_cmd_experiment)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), stream=sys.stderr, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except (ConfigError, FormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc.cause, (ConfigError, FormatError, FileNotFoundError, ValueError)):
            return EXIT_CONFIG
        return 1


if __name__ == "__main__":
    sys.exit(main())
