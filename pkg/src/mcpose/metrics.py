"""Position-error and latency aggregation, with CSV/JSON report writers.

Per-joint error is the Euclidean distance between estimate and ground
truth in millimeters, averaged over matched frames; the overall figure
is the arithmetic mean of the per-joint means.  Spreads are population
standard deviations.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import EmptyInputError, NoMatchesError
from .fusion import FusionConfig, LatencyRecord
from .geometry import Camera
from .simulator import (
    GroundTruthFrame,
    SceneConfig,
    generate_ground_truth,
    render_detections,
    rig_from_spec,
)
from .skeleton import JOINT_ORDER, JointId, Skeleton3D
from .triangulation import WeightMode, WeightParams, batch_triangulate

MM_PER_M = 1000.0


@dataclass(frozen=True)
class JointStats:
    mean_mm: float
    std_mm: float
    max_mm: float
    frames: int


@dataclass(frozen=True)
class MpjpeReport:
    per_joint: dict[JointId, JointStats]
    overall_mm: float
    matched_frames: int

    def max_mm(self) -> float:
        return max((s.max_mm for s in self.per_joint.values()), default=0.0)


def _match_frames(
    estimated: Sequence[Skeleton3D],
    truth: Sequence[GroundTruthFrame],
    tolerance: float,
) -> list[tuple[Skeleton3D, GroundTruthFrame]]:
    truth = sorted(truth, key=lambda f: f.timestamp)
    times = np.array([f.timestamp for f in truth])
    pairs = []
    for est in estimated:
        idx = int(np.searchsorted(times, est.timestamp))
        best = None
        for j in (idx - 1, idx):
            if 0 <= j < len(times) and abs(times[j] - est.timestamp) <= tolerance:
                if best is None or abs(times[j] - est.timestamp) < abs(times[best] - est.timestamp):
                    best = j
        if best is not None:
            pairs.append((est, truth[best]))
    return pairs


def mpjpe(
    estimated: Sequence[Skeleton3D],
    truth: Sequence[GroundTruthFrame],
    matching: float,
) -> MpjpeReport:
    """Per-joint position error over nearest-timestamp frame pairs.

    Joints never present in the estimates are absent from the report,
    not reported as zero.
    """
    pairs = _match_frames(estimated, truth, matching)
    if not pairs:
        raise NoMatchesError(f"no estimate/truth pairs matched within {matching} s")
    errors: dict[JointId, list[float]] = {j: [] for j in JOINT_ORDER}
    for est, gt in pairs:
        for joint, e in est.joints.items():
            errors[joint].append(float(np.linalg.norm(e.position - gt.joints[joint])) * MM_PER_M)
    per_joint = {
        joint: JointStats(
            mean_mm=float(np.mean(vals)),
            std_mm=float(np.std(vals)),
            max_mm=float(np.max(vals)),
            frames=len(vals),
        )
        for joint, vals in errors.items()
        if vals
    }
    overall = float(np.mean([s.mean_mm for s in per_joint.values()])) if per_joint else math.nan
    return MpjpeReport(per_joint=per_joint, overall_mm=overall, matched_frames=len(pairs))


@dataclass(frozen=True)
class AblationReport:
    """One error report per weighting mode, computed on identical detections."""

    reports: dict[WeightMode, MpjpeReport]

    def overall(self, mode: WeightMode) -> float:
        return self.reports[mode].overall_mm


def ablation_report(
    scene: SceneConfig,
    rig: Optional[Sequence[Camera]],
    modes: Sequence[WeightMode],
    *,
    params: Optional[WeightParams] = None,
) -> AblationReport:
    """Render the scene once, then triangulate it once per weighting mode.

    All modes see byte-identical detections; a rig passed explicitly
    replaces the scene's circular rig for rendering and solving alike.
    """
    rig = list(rig) if rig is not None else rig_from_spec(scene.rig)
    ground_truth = generate_ground_truth(scene)
    detections = render_detections(ground_truth, rig, scene)
    rig_map = {cam.id: cam for cam in rig}
    tolerance = 0.5 / scene.fps
    base = params or WeightParams()
    reports = {}
    for mode in modes:
        mode_params = WeightParams(
            s_th=base.s_th,
            d_min=base.d_min,
            d_max=base.d_max,
            use_distance=base.use_distance,
            use_orthogonality=base.use_orthogonality,
            weight_mode=mode,
        )
        estimated = batch_triangulate(detections, rig_map, mode_params, tolerance=tolerance)
        reports[mode] = mpjpe(estimated, ground_truth, matching=tolerance)
    return AblationReport(reports=reports)


@dataclass(frozen=True)
class CameraLatency:
    mean_ingest_ms: float
    std_ingest_ms: float
    mean_output_ms: float
    std_output_ms: float


@dataclass(frozen=True)
class LatencyReport:
    per_camera: dict[int, CameraLatency]
    tick_cost_ms: float
    achieved_rate_hz: float


def latency_report(
    records: Sequence[LatencyRecord],
    outputs: Sequence[float],
    cfg: FusionConfig,
    *,
    tick_costs: Sequence[float] = (),
) -> LatencyReport:
    """Aggregate per-camera latencies and the achieved output rate."""
    if not records:
        raise EmptyInputError("no latency records to aggregate")
    by_camera: dict[int, list[LatencyRecord]] = {}
    for rec in records:
        by_camera.setdefault(rec.camera, []).append(rec)
    per_camera = {}
    for camera, recs in sorted(by_camera.items()):
        ingest = np.array([r.capture_to_ingest for r in recs]) * 1e3
        output = np.array([r.ingest_to_output for r in recs]) * 1e3
        per_camera[camera] = CameraLatency(
            mean_ingest_ms=float(ingest.mean()),
            std_ingest_ms=float(ingest.std()),
            mean_output_ms=float(output.mean()),
            std_output_ms=float(output.std()),
        )
    rate = 0.0
    if len(outputs) > 1:
        span = max(outputs) - min(outputs)
        rate = (len(outputs) - 1) / span if span > 0 else 0.0
    return LatencyReport(
        per_camera=per_camera,
        tick_cost_ms=float(np.mean(tick_costs)) * 1e3 if len(tick_costs) else 0.0,
        achieved_rate_hz=rate,
    )


# --- report serialization ---------------------------------------------------

MODE_LABEL = {
    WeightMode.UNIFORM: "uniform",
    WeightMode.SCORE_ONLY: "score",
    WeightMode.ALL: "all",
}

_MPJPE_HEADER = (
    "# std is the population standard deviation; the Average row is the "
    "arithmetic mean of the per-joint means\n"
    "joint,mode,mean_mm,std_mm,frames\n"
)


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def labeled_reports(report: AblationReport) -> dict[str, MpjpeReport]:
    return {MODE_LABEL[mode]: rep for mode, rep in report.reports.items()}


def mpjpe_csv(reports: Mapping[str, MpjpeReport]) -> str:
    lines = [_MPJPE_HEADER]
    for label, report in reports.items():
        for joint in JOINT_ORDER:
            stats = report.per_joint.get(joint)
            if stats is None:
                continue
            lines.append(f"{joint.value},{label},{_fmt(stats.mean_mm)},{_fmt(stats.std_mm)},{stats.frames}\n")
        lines.append(f"Average,{label},{_fmt(report.overall_mm)},,\n")
    return "".join(lines)


def write_mpjpe_csv(reports: Mapping[str, MpjpeReport], path: str | Path) -> None:
    Path(path).write_text(mpjpe_csv(reports), encoding="utf-8")


def mpjpe_summary_obj(reports: Mapping[str, MpjpeReport]) -> dict:
    return {
        label: {
            "overall_mm": report.overall_mm,
            "matched_frames": report.matched_frames,
            "per_joint": {
                joint.value: {
                    "mean_mm": stats.mean_mm,
                    "std_mm": stats.std_mm,
                    "max_mm": stats.max_mm,
                    "frames": stats.frames,
                }
                for joint, stats in report.per_joint.items()
            },
        }
        for label, report in reports.items()
    }


def write_mpjpe_summary(reports: Mapping[str, MpjpeReport], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(mpjpe_summary_obj(reports), f, indent=2, sort_keys=True)
        f.write("\n")


def latency_csv(report: LatencyReport) -> str:
    lines = ["camera,mean_ingest_ms,std_ingest_ms,mean_output_ms,std_output_ms\n"]
    for camera, lat in report.per_camera.items():
        lines.append(
            f"{camera},{_fmt(lat.mean_ingest_ms)},{_fmt(lat.std_ingest_ms)},"
            f"{_fmt(lat.mean_output_ms)},{_fmt(lat.std_output_ms)}\n"
        )
    return "".join(lines)


def write_latency_csv(report: LatencyReport, path: str | Path) -> None:
    Path(path).write_text(latency_csv(report), encoding="utf-8")


def write_latency_records_csv(records: Sequence[LatencyRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("camera_id,capture_to_ingest_s,ingest_to_output_s\n")
        for rec in records:
            f.write(f"{rec.camera},{_fmt(rec.capture_to_ingest)},{_fmt(rec.ingest_to_output)}\n")


def write_latency_summary(report: LatencyReport, path: str | Path) -> None:
    obj = {
        "achieved_rate_hz": report.achieved_rate_hz,
        "tick_cost_ms": report.tick_cost_ms,
        "per_camera": {
            str(camera): {
                "mean_ingest_ms": lat.mean_ingest_ms,
                "std_ingest_ms": lat.std_ingest_ms,
                "mean_output_ms": lat.mean_output_ms,
                "std_output_ms": lat.std_output_ms,
            }
            for camera, lat in report.per_camera.items()
        },
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")
