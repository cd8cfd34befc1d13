"""Command-line entry points: simulate, triangulate, stream, evaluate, ablate.

Exit codes: 0 ok, 2 config/parse error, 3 I/O error, 4 insufficient
inputs, 5 evaluation mismatch.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import metrics
from .errors import (
    InsufficientCamerasError,
    InvariantViolationError,
    McPoseError,
    NoMatchesError,
)
from .fusion import FusionConfig, FusionLoop, follow, replay
from .geometry import load_rig, save_rig
from .simulator import (
    load_scene,
    read_ground_truth_stream,
    simulate,
    write_ground_truth_stream,
)
from .skeleton import (
    Skeleton2D,
    read_skeleton2d_stream,
    read_skeleton3d_stream,
    write_skeleton2d_stream,
    write_skeleton3d_stream,
)
from .triangulation import WeightMode, WeightParams, batch_triangulate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_INSUFFICIENT = 4
EXIT_MISMATCH = 5


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _load_json(path: str):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as exc:
        raise InvariantViolationError(f"{path}: invalid JSON at byte offset {exc.pos}: {exc.msg}") from exc


def _weight_params(args) -> WeightParams:
    base = {}
    if getattr(args, "weights_config", None):
        base = _load_json(args.weights_config)
    params = WeightParams.from_obj(base)
    overrides = {}
    if getattr(args, "weight_mode", None) is not None:
        overrides["weight_mode"] = WeightMode.parse(args.weight_mode)
    if getattr(args, "s_th", None) is not None:
        overrides["s_th"] = args.s_th
    if getattr(args, "d_min", None) is not None:
        overrides["d_min"] = args.d_min
    if getattr(args, "d_max", None) is not None:
        overrides["d_max"] = args.d_max
    if overrides:
        params = WeightParams(
            s_th=overrides.get("s_th", params.s_th),
            d_min=overrides.get("d_min", params.d_min),
            d_max=overrides.get("d_max", params.d_max),
            use_distance=params.use_distance,
            use_orthogonality=params.use_orthogonality,
            weight_mode=overrides.get("weight_mode", params.weight_mode),
        )
    return params


def _add_weight_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--weights-config", help="JSON file with weighting parameters")
    parser.add_argument("--weight-mode", help="uniform | score | all")
    parser.add_argument("--s-th", type=float, help="score gating threshold")
    parser.add_argument("--d-min", type=float, help="inner edge of the full-weight distance band, meters")
    parser.add_argument("--d-max", type=float, help="outer edge of the full-weight distance band, meters")


def _read_streams(paths) -> dict[int, list[Skeleton2D]]:
    streams: dict[int, list[Skeleton2D]] = {}
    for path in paths:
        for view in read_skeleton2d_stream(path):
            streams.setdefault(view.camera, []).append(view)
    return streams


def cmd_simulate(args) -> int:
    try:
        scene = load_scene(args.scene)
    except FileNotFoundError as exc:
        return _fail(EXIT_CONFIG, f"scene file not found: {exc.filename}")
    except json.JSONDecodeError as exc:
        return _fail(EXIT_CONFIG, f"{args.scene}: invalid JSON at byte offset {exc.pos}: {exc.msg}")
    except InvariantViolationError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    if args.seed is not None:
        from dataclasses import replace

        scene = replace(scene, seed=args.seed)
    result = simulate(scene)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        save_rig(result.rig, out / "rig.json")
        write_ground_truth_stream(result.ground_truth, out / "ground_truth.jsonl")
        for cam_id, views in sorted(result.detections.items()):
            write_skeleton2d_stream(views, out / f"detections_cam{cam_id}.jsonl")
    except OSError as exc:
        return _fail(EXIT_IO, f"cannot write outputs: {exc}")
    print(f"wrote rig, ground truth, and {len(result.detections)} detection streams to {out}")
    return EXIT_OK


def cmd_triangulate(args) -> int:
    if len(args.streams) < 2:
        return _fail(EXIT_INSUFFICIENT, f"need at least 2 detection streams, got {len(args.streams)}")
    try:
        rig = {cam.id: cam for cam in load_rig(args.rig)}
        params = _weight_params(args)
        streams = _read_streams(args.streams)
    except FileNotFoundError as exc:
        return _fail(EXIT_CONFIG, f"input not found: {exc.filename}")
    except (InvariantViolationError, json.JSONDecodeError) as exc:
        return _fail(EXIT_CONFIG, str(exc))
    if len(streams) < 2:
        return _fail(EXIT_INSUFFICIENT, f"streams cover only {len(streams)} distinct cameras")
    try:
        skeletons = batch_triangulate(streams, rig, params, tolerance=args.tolerance)
        write_skeleton3d_stream(skeletons, args.out)
    except InsufficientCamerasError as exc:
        return _fail(EXIT_INSUFFICIENT, str(exc))
    except OSError as exc:
        return _fail(EXIT_IO, f"cannot write output: {exc}")
    print(f"triangulated {len(skeletons)} frames to {args.out}")
    return EXIT_OK


def cmd_stream(args) -> int:
    try:
        rig = {cam.id: cam for cam in load_rig(args.rig)}
        params = _weight_params(args)
        if args.follow:
            for path in args.inputs:
                if not Path(path).exists():
                    raise FileNotFoundError(2, "no such file", path)
            streams = None
        else:
            streams = _read_streams(args.inputs)
    except FileNotFoundError as exc:
        return _fail(EXIT_CONFIG, f"input not found: {exc.filename}")
    except (InvariantViolationError, json.JSONDecodeError) as exc:
        return _fail(EXIT_CONFIG, str(exc))
    if streams is not None and len(streams) < 2:
        return _fail(EXIT_INSUFFICIENT, f"streams cover only {len(streams)} distinct cameras")
    config = FusionConfig(tick_rate=args.tick_rate, staleness_horizon=args.staleness, weight_params=params)
    loop = FusionLoop(rig, config)
    skeletons = []
    records = []
    costs = []
    interrupted = False

    def collect(output) -> None:
        skeletons.append(output.skeleton)
        records.extend(output.latency)
        costs.append(output.tick_cost)

    try:
        if args.follow:
            follow(loop, args.inputs, idle_timeout=args.idle_timeout, on_output=collect)
        else:
            for output in replay(loop, streams):
                collect(output)
                if args.realtime:
                    import time as _time

                    _time.sleep(1.0 / config.tick_rate)
    except KeyboardInterrupt:
        interrupted = True
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_skeleton3d_stream(skeletons, out / "skeletons_3d.jsonl")
        metrics.write_latency_records_csv(records, out / "latency_records.csv")
        if records:
            report = metrics.latency_report(
                records, [sk.timestamp for sk in skeletons], config, tick_costs=costs
            )
            metrics.write_latency_csv(report, out / "latency.csv")
            metrics.write_latency_summary(report, out / "latency.json")
            if not args.no_figures:
                from . import plots

                plots.save_latency_figure(report, out / "latency.png")
    except OSError as exc:
        return _fail(EXIT_IO, f"cannot write outputs: {exc}")
    state = "interrupted, flushed" if interrupted else "done"
    print(f"{state}: {len(skeletons)} fused frames to {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    try:
        estimated = read_skeleton3d_stream(args.estimate)
        truth = read_ground_truth_stream(args.truth)
    except FileNotFoundError as exc:
        return _fail(EXIT_CONFIG, f"input not found: {exc.filename}")
    except (InvariantViolationError, json.JSONDecodeError) as exc:
        return _fail(EXIT_CONFIG, str(exc))
    tolerance = args.tolerance
    if tolerance is None:
        times = sorted(f.timestamp for f in truth)
        deltas = [b - a for a, b in zip(times, times[1:])]
        tolerance = (sorted(deltas)[len(deltas) // 2] / 2.0) if deltas else float("inf")
    try:
        report = metrics.mpjpe(estimated, truth, matching=tolerance)
    except NoMatchesError as exc:
        return _fail(EXIT_MISMATCH, str(exc))
    labeled = {"estimate": report}
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        metrics.write_mpjpe_csv(labeled, out / "mpjpe.csv")
        metrics.write_mpjpe_summary(labeled, out / "mpjpe.json")
        if not args.no_figures:
            from . import plots

            plots.save_mpjpe_figure(labeled, out / "mpjpe_per_joint.png")
            plots.save_trajectory_figure(estimated, truth, out / "trajectories.png")
    except OSError as exc:
        return _fail(EXIT_IO, f"cannot write outputs: {exc}")
    print(f"overall MPJPE [mm]: {report.overall_mm:.6g}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    try:
        scene = load_scene(args.scene)
        rig = load_rig(args.rig) if args.rig else None
        params = _weight_params(args)
        modes = [WeightMode.parse(name) for name in args.modes.split(",")]
    except FileNotFoundError as exc:
        return _fail(EXIT_CONFIG, f"input not found: {exc.filename}")
    except (InvariantViolationError, json.JSONDecodeError) as exc:
        return _fail(EXIT_CONFIG, str(exc))
    try:
        report = metrics.ablation_report(scene, rig, modes, params=params)
    except McPoseError as exc:
        return _fail(EXIT_INSUFFICIENT, str(exc))
    labeled = metrics.labeled_reports(report)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        metrics.write_mpjpe_csv(labeled, out / "ablation.csv")
        metrics.write_mpjpe_summary(labeled, out / "ablation.json")
        if not args.no_figures:
            from . import plots

            plots.save_mpjpe_figure(labeled, out / "ablation_mpjpe.png", log_scale=True)
    except OSError as exc:
        return _fail(EXIT_IO, f"cannot write outputs: {exc}")
    for label, rep in labeled.items():
        print(f"{label}: overall MPJPE [mm] = {rep.overall_mm:.6g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcpose", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic scene: rig, ground truth, detections")
    p.add_argument("--scene", required=True, help="scene configuration JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override the scene seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("triangulate", help="batch-triangulate recorded detection streams")
    p.add_argument("--rig", required=True, help="rig JSON file")
    p.add_argument("--streams", nargs="+", required=True, help="per-camera detection JSONL files")
    p.add_argument("--out", required=True, help="output 3D skeleton JSONL file")
    p.add_argument("--tolerance", type=float, help="frame grouping tolerance, seconds")
    _add_weight_flags(p)
    p.set_defaults(func=cmd_triangulate)

    p = sub.add_parser("stream", help="run the fixed-rate fusion loop over streams")
    p.add_argument("--rig", required=True, help="rig JSON file")
    p.add_argument("--inputs", nargs="+", required=True, help="per-camera detection JSONL files")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--tick-rate", type=float, default=100.0, help="fusion tick rate, Hz")
    p.add_argument("--staleness", type=float, default=0.5, help="staleness horizon, seconds")
    p.add_argument("--realtime", action="store_true", help="pace the replay against the wall clock")
    p.add_argument("--follow", action="store_true", help="tail the inputs live (files or named pipes)")
    p.add_argument("--idle-timeout", type=float, default=2.0, help="follow mode: stop after this many idle seconds")
    p.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    _add_weight_flags(p)
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("evaluate", help="score an estimated stream against ground truth")
    p.add_argument("--estimate", required=True, help="estimated 3D skeleton JSONL file")
    p.add_argument("--truth", required=True, help="ground-truth JSONL file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--tolerance", type=float, help="frame matching tolerance, seconds")
    p.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="compare weighting modes on one simulated scene")
    p.add_argument("--scene", required=True, help="scene configuration JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--rig", help="optional rig JSON overriding the scene rig")
    p.add_argument("--modes", default="uniform,score,all", help="comma-separated weighting modes")
    p.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    _add_weight_flags(p)
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except McPoseError as exc:
        return _fail(EXIT_CONFIG, str(exc))


if __name__ == "__main__":
    sys.exit(main())
