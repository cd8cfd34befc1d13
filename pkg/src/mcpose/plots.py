"""Report figures rendered to files next to the delimited outputs."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import LatencyReport, MpjpeReport
from .simulator import GroundTruthFrame
from .skeleton import JOINT_ORDER, JointId, Skeleton3D

_SAVE_KWARGS = dict(dpi=150, bbox_inches="tight")


def save_mpjpe_figure(reports: Mapping[str, MpjpeReport], path: str | Path, *, log_scale: bool = False) -> None:
    """Grouped per-joint error bars, one group color per labeled report."""
    labels = list(reports)
    joints = [j for j in JOINT_ORDER if any(j in reports[m].per_joint for m in labels)]
    x = np.arange(len(joints))
    width = 0.8 / max(1, len(labels))
    fig, ax = plt.subplots(figsize=(10, 4))
    for i, label in enumerate(labels):
        report = reports[label]
        means = [report.per_joint[j].mean_mm if j in report.per_joint else np.nan for j in joints]
        stds = [report.per_joint[j].std_mm if j in report.per_joint else 0.0 for j in joints]
        offset = (i - (len(labels) - 1) / 2) * width
        ax.bar(x + offset, means, width, yerr=stds, capsize=2, label=label)
    ax.set_xticks(x)
    ax.set_xticklabels([j.value for j in joints], rotation=45, ha="right")
    ax.set_ylabel("MPJPE [mm]")
    if log_scale:
        ax.set_yscale("log")
    ax.legend()
    ax.grid(axis="y", alpha=0.3)
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def save_latency_figure(report: LatencyReport, path: str | Path) -> None:
    """Per-camera mean latencies with spreads, plus the achieved rate."""
    cameras = sorted(report.per_camera)
    x = np.arange(len(cameras))
    ingest = [report.per_camera[c].mean_ingest_ms for c in cameras]
    ingest_std = [report.per_camera[c].std_ingest_ms for c in cameras]
    output = [report.per_camera[c].mean_output_ms for c in cameras]
    output_std = [report.per_camera[c].std_output_ms for c in cameras]
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.bar(x - 0.2, ingest, 0.4, yerr=ingest_std, capsize=2, label="capture to ingest")
    ax.bar(x + 0.2, output, 0.4, yerr=output_std, capsize=2, label="ingest to output")
    ax.set_xticks(x)
    ax.set_xticklabels([f"camera {c}" for c in cameras])
    ax.set_ylabel("latency [ms]")
    ax.set_title(f"output rate {report.achieved_rate_hz:.1f} Hz, mean tick cost {report.tick_cost_ms:.3f} ms")
    ax.legend()
    ax.grid(axis="y", alpha=0.3)
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def save_trajectory_figure(
    estimated: Sequence[Skeleton3D],
    truth: Optional[Sequence[GroundTruthFrame]],
    path: str | Path,
    *,
    joints: Sequence[JointId] = (JointId.RIGHT_WRIST, JointId.LEFT_HIP, JointId.LEFT_ANKLE),
) -> None:
    """XYZ traces of a few joints, estimates overlaid on ground truth."""
    fig, axes = plt.subplots(len(joints), 3, figsize=(11, 2.2 * len(joints)), sharex=True, squeeze=False)
    for row, joint in enumerate(joints):
        est_t = [sk.timestamp for sk in estimated if joint in sk.joints]
        est_p = np.array([sk.joints[joint].position for sk in estimated if joint in sk.joints])
        for col, axis_name in enumerate("xyz"):
            ax = axes[row][col]
            if truth is not None:
                gt_t = [fr.timestamp for fr in truth]
                gt_p = np.array([fr.joints[joint][col] for fr in truth])
                ax.plot(gt_t, gt_p, color="tab:red", lw=1.0, label="ground truth")
            if len(est_p):
                ax.plot(est_t, est_p[:, col], color="tab:blue", lw=0.8, label="estimate")
            if col == 0:
                ax.set_ylabel(f"{joint.value}\n[m]")
            if row == 0:
                ax.set_title(axis_name)
    axes[-1][1].set_xlabel("time [s]")
    handles, labels = axes[0][0].get_legend_handles_labels()
    if handles:
        fig.legend(handles, labels, loc="upper right")
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)
