"""Multi-camera joint triangulation by weighted least squares.

Each camera observing pixel (u, v) contributes two rows to a linear
system in the unknown world point x.  With projection rows m1, m2, m3,
each split into a rotational part r (first three entries) and an offset
o (fourth entry), the pinhole relation ``depth * [u, v, 1] = M [x; 1]``
rearranges to

    (u * r3 - r1) . x = o1 - u * o3
    (v * r3 - r2) . x = o2 - v * o3

eliminating the unknown per-camera depth.  Stacking all cameras gives
``A x = b``; the solve minimizes ``sum_i w_i (A x - b)_i ** 2`` with one
weight per camera (duplicated across its row pair), combining a squared
confidence score, a distance band, and a view/limb orthogonality factor:

    w = w_score * (w_orthogonality + w_distance) / 2
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import (
    AllWeightsZeroError,
    InsufficientCamerasError,
    InsufficientViewsError,
    InvariantViolationError,
    RankDeficientError,
)
from .geometry import Camera, ProjectionMatrix
from .skeleton import (
    JOINT_ORDER,
    Detection2D,
    JointEstimate,
    JointId,
    SegmentId,
    Skeleton2D,
    Skeleton3D,
    segment_z_directions,
)

# cond(A^T W A) above this is treated as rank deficient.
CONDITION_LIMIT = 1e12


class WeightMode(Enum):
    """Weighting regimes: plain LS, score-gated, or fully weighted."""

    UNIFORM = "uniform"
    SCORE_ONLY = "score"
    ALL = "all"

    @classmethod
    def parse(cls, name: str) -> "WeightMode":
        key = name.strip().lower().replace("_", "").replace("-", "")
        table = {
            "uniform": cls.UNIFORM,
            "noweights": cls.UNIFORM,
            "score": cls.SCORE_ONLY,
            "scoreonly": cls.SCORE_ONLY,
            "scoreweight": cls.SCORE_ONLY,
            "all": cls.ALL,
            "allweights": cls.ALL,
        }
        try:
            return table[key]
        except KeyError:
            raise InvariantViolationError(f"unknown weight mode {name!r}") from None


@dataclass(frozen=True)
class WeightParams:
    """Configuration of the per-camera weighting."""

    s_th: float = 0.4
    d_min: float = 1.0
    d_max: float = 4.0
    use_distance: bool = True
    use_orthogonality: bool = True
    weight_mode: WeightMode = WeightMode.ALL

    def __post_init__(self):
        if not 0.0 <= self.s_th <= 1.0:
            raise InvariantViolationError(f"s_th must lie in [0, 1], got {self.s_th}")
        if not 0.0 < self.d_min < self.d_max:
            raise InvariantViolationError(f"need 0 < d_min < d_max, got {self.d_min}, {self.d_max}")

    @classmethod
    def from_obj(cls, obj: Mapping) -> "WeightParams":
        kwargs = {}
        if "s_th" in obj:
            kwargs["s_th"] = float(obj["s_th"])
        if "d_min" in obj:
            kwargs["d_min"] = float(obj["d_min"])
        if "d_max" in obj:
            kwargs["d_max"] = float(obj["d_max"])
        if "use_distance" in obj:
            kwargs["use_distance"] = bool(obj["use_distance"])
        if "use_orthogonality" in obj:
            kwargs["use_orthogonality"] = bool(obj["use_orthogonality"])
        if "weight_mode" in obj:
            kwargs["weight_mode"] = WeightMode.parse(str(obj["weight_mode"]))
        return cls(**kwargs)


@dataclass
class DltSystem:
    """Stacked two-rows-per-camera linear system for one joint."""

    a: np.ndarray
    b: np.ndarray
    camera_order: list[int]

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        if self.a.ndim != 2 or self.a.shape[1] != 3:
            raise InvariantViolationError(f"system matrix must be (2k, 3), got {self.a.shape}")
        if self.a.shape[0] != self.b.shape[0] or self.a.shape[0] % 2 != 0:
            raise InvariantViolationError("system must have an even, matching number of rows")
        if self.a.shape[0] != 2 * len(self.camera_order):
            raise InvariantViolationError("row count must be twice the camera count")


@dataclass
class WeightMatrix:
    """Diagonal of the weighting matrix; each camera's weight appears twice."""

    diag: np.ndarray

    def __post_init__(self):
        self.diag = np.asarray(self.diag, dtype=np.float64).reshape(-1)
        if self.diag.size % 2 != 0:
            raise InvariantViolationError("weight diagonal must have an even length")
        if np.any(self.diag < 0) or not np.all(np.isfinite(self.diag)):
            raise InvariantViolationError("weights must be finite and non-negative")
        if np.any(self.diag[0::2] != self.diag[1::2]):
            raise InvariantViolationError("each camera's two rows must share one weight")

    @classmethod
    def from_camera_weights(cls, weights: Sequence[float]) -> "WeightMatrix":
        return cls(diag=np.repeat(np.asarray(weights, dtype=np.float64), 2))


def build_dlt_system(
    detections: Mapping[int, Detection2D],
    cameras: Mapping[int, ProjectionMatrix],
) -> DltSystem:
    """Assemble the stacked linear system from per-camera pixel detections."""
    order = [cam_id for cam_id in sorted(detections) if cam_id in cameras]
    if len(order) < 2:
        raise InsufficientCamerasError(f"triangulation needs >= 2 cameras, got {len(order)}")
    a = np.empty((2 * len(order), 3))
    b = np.empty(2 * len(order))
    for i, cam_id in enumerate(order):
        det = detections[cam_id]
        m = cameras[cam_id].m
        r, o = m[:, :3], m[:, 3]
        a[2 * i] = det.u * r[2] - r[0]
        a[2 * i + 1] = det.v * r[2] - r[1]
        b[2 * i] = o[0] - det.u * o[2]
        b[2 * i + 1] = o[1] - det.v * o[2]
    return DltSystem(a=a, b=b, camera_order=order)


def score_weight(score: float, s_th: float) -> float:
    """Squared confidence score, zeroed below the gating threshold."""
    return 0.0 if score < s_th else score * score


def distance_weight(d: float, d_min: float, d_max: float) -> float:
    """Trapezoidal profile: full weight inside [d_min, d_max], fading to 0
    at zero range and at twice d_max."""
    if d <= 0.0:
        return 0.0
    if d < d_min:
        return d / d_min
    if d <= d_max:
        return 1.0
    return max(0.0, (2.0 * d_max - d) / d_max)


def orthogonality_weight(camera_axis: Sequence[float], segment_z: Sequence[float]) -> float:
    """Visibility of a limb from a camera: 1 when the limb is perpendicular
    to the viewing direction, 0 when fully foreshortened."""
    dot = float(np.dot(np.asarray(camera_axis, float), np.asarray(segment_z, float)))
    return float(np.clip(1.0 - abs(dot), 0.0, 1.0))


def combine_weights(ws: float, wo: float, wd: float) -> float:
    """Score gates everything; orientation and distance average."""
    return ws * (wo + wd) / 2.0


def _solve_weighted(a: np.ndarray, b: np.ndarray, diag: np.ndarray) -> tuple[np.ndarray, float]:
    """Core WLS solve via SVD of the sqrt-weight scaled system.

    Zero-weight rows are removed outright so they cannot perturb the
    factorization; the singular values double as the conditioning guard.
    """
    total = diag.sum()
    if total <= 0.0:
        raise AllWeightsZeroError("all camera weights are zero")
    keep = diag > 0.0
    if not keep.all():
        a, b, diag = a[keep], b[keep], diag[keep]
    s = np.sqrt(diag)
    u_mat, sv, vt = np.linalg.svd(a * s[:, None], full_matrices=False)
    if sv[2] <= 0.0 or (sv[0] / sv[2]) ** 2 >= CONDITION_LIMIT:
        raise RankDeficientError(
            f"weighted normal matrix is ill conditioned (cond ~ {(sv[0] / max(sv[2], 1e-300)) ** 2:.2e})"
        )
    x = vt.T @ ((u_mat.T @ (b * s)) / sv)
    r = a @ x - b
    residual = math.sqrt(float(diag @ (r * r)) / float(diag.sum()))
    return x, residual


def wls_solve(system: DltSystem, weights: WeightMatrix) -> tuple[np.ndarray, float]:
    """Weighted least-squares minimizer of the system and its weighted RMS
    residual sqrt(sum w_i r_i^2 / sum w_i)."""
    if weights.diag.size != system.a.shape[0]:
        raise InvariantViolationError(
            f"weight diagonal length {weights.diag.size} does not match {system.a.shape[0]} rows"
        )
    return _solve_weighted(system.a, system.b, weights.diag)


# Segment whose Z axis stands in for each joint in the orthogonality weight:
# torso keypoints use the chest, limb joints their adjacent (distal-most)
# limb segment.
JOINT_SEGMENT_Z: dict[JointId, SegmentId] = {
    JointId.NECK: SegmentId.CHEST,
    JointId.HIPS: SegmentId.CHEST,
    JointId.RIGHT_SHOULDER: SegmentId.RIGHT_UPPER_ARM,
    JointId.RIGHT_ELBOW: SegmentId.RIGHT_FOREARM,
    JointId.RIGHT_WRIST: SegmentId.RIGHT_FOREARM,
    JointId.LEFT_SHOULDER: SegmentId.LEFT_UPPER_ARM,
    JointId.LEFT_ELBOW: SegmentId.LEFT_FOREARM,
    JointId.LEFT_WRIST: SegmentId.LEFT_FOREARM,
    JointId.RIGHT_HIP: SegmentId.RIGHT_UPPER_LEG,
    JointId.RIGHT_KNEE: SegmentId.RIGHT_LOWER_LEG,
    JointId.RIGHT_ANKLE: SegmentId.RIGHT_LOWER_LEG,
    JointId.LEFT_HIP: SegmentId.LEFT_UPPER_LEG,
    JointId.LEFT_KNEE: SegmentId.LEFT_LOWER_LEG,
    JointId.LEFT_ANKLE: SegmentId.LEFT_LOWER_LEG,
}


_JOINT_INDEX = {joint: k for k, joint in enumerate(JOINT_ORDER)}


def _weight_table(
    cams: list[int],
    rig: Mapping[int, Camera],
    params: WeightParams,
    prior: Optional[Skeleton3D],
    scores: np.ndarray,
    present: np.ndarray,
) -> np.ndarray:
    """Per (camera, joint) weights, vectorizing the scalar weight profiles."""
    n_cams, n_joints = present.shape
    if params.weight_mode is WeightMode.UNIFORM:
        return present.astype(np.float64)

    ws = np.where(scores >= params.s_th, scores * scores, 0.0) * present
    if params.weight_mode is WeightMode.SCORE_ONLY or prior is None:
        return ws

    wd = np.ones((n_cams, n_joints))
    wo = np.ones((n_cams, n_joints))
    prior_pos = prior.positions()
    if params.use_distance:
        centers = np.stack([rig[c].position for c in cams])
        xyz = np.zeros((n_joints, 3))
        have = np.zeros(n_joints, dtype=bool)
        for k, joint in enumerate(JOINT_ORDER):
            p = prior_pos.get(joint)
            if p is not None:
                xyz[k] = p
                have[k] = True
        d = np.linalg.norm(centers[:, None, :] - xyz[None, :, :], axis=2)
        # Trapezoid: min of the rising and falling ramps, clipped to [0, 1].
        ramps = np.minimum(d / params.d_min, (2.0 * params.d_max - d) / params.d_max)
        wd = np.where(have[None, :], np.clip(ramps, 0.0, 1.0), 1.0)
    if params.use_orthogonality:
        z_dirs = segment_z_directions(prior_pos)
        axes = np.stack([rig[c].axis for c in cams])
        z = np.zeros((n_joints, 3))
        have_z = np.zeros(n_joints, dtype=bool)
        for k, joint in enumerate(JOINT_ORDER):
            direction = z_dirs.get(JOINT_SEGMENT_Z[joint])
            if direction is not None:
                z[k] = direction
                have_z[k] = True
        dots = np.abs(axes @ z.T)
        wo = np.where(have_z[None, :], np.clip(1.0 - dots, 0.0, 1.0), 1.0)
    return ws * (wo + wd) / 2.0


def triangulate_skeleton(
    views: Mapping[int, Skeleton2D],
    rig: Mapping[int, Camera],
    params: WeightParams,
    prior: Optional[Skeleton3D] = None,
    *,
    timestamp: Optional[float] = None,
    weights_out: Optional[dict] = None,
) -> Skeleton3D:
    """Triangulate every joint visible in >= 2 usable views.

    Distance and orthogonality factors need a 3D estimate and come from
    ``prior`` (typically the previous output frame); without it they
    default to 1.  Joints that cannot be solved are omitted, never fatal.
    ``weights_out``, when given, is filled with {joint: {camera: weight}}.

    Joints sharing the same set of contributing cameras are solved in one
    batched factorization, keeping a full-skeleton solve under a
    millisecond on rigs of realistic size.
    """
    views = {c: v for c, v in views.items() if c in rig}
    if len(views) < 2:
        raise InsufficientViewsError(f"skeleton triangulation needs >= 2 views, got {len(views)}")
    if timestamp is None:
        timestamp = max(v.timestamp for v in views.values())

    cams = sorted(views)
    n_cams = len(cams)
    n_joints = len(JOINT_ORDER)

    u_px = np.zeros((n_cams, n_joints))
    v_px = np.zeros((n_cams, n_joints))
    scores = np.zeros((n_cams, n_joints))
    present = np.zeros((n_cams, n_joints), dtype=bool)
    for i, c in enumerate(cams):
        for joint, det in views[c].joints.items():
            k = _JOINT_INDEX[joint]
            present[i, k] = True
            u_px[i, k] = det.u
            v_px[i, k] = det.v
            scores[i, k] = det.score

    weights = _weight_table(cams, rig, params, prior, scores, present)
    if weights_out is not None:
        for k, joint in enumerate(JOINT_ORDER):
            weights_out[joint] = {c: float(weights[i, k]) for i, c in enumerate(cams) if present[i, k]}
    usable = present & (weights > 0.0)

    # DLT rows for every (camera, joint) pair at once.
    m_all = np.stack([rig[c].projection.m for c in cams])  # (c, 3, 4)
    rot = m_all[:, :, :3]
    off = m_all[:, :, 3]
    row_u = u_px[..., None] * rot[:, None, 2, :] - rot[:, None, 0, :]  # (c, j, 3)
    row_v = v_px[..., None] * rot[:, None, 2, :] - rot[:, None, 1, :]
    rhs_u = off[:, None, 0] - u_px * off[:, None, 2]  # (c, j)
    rhs_v = off[:, None, 1] - v_px * off[:, None, 2]

    # Group joints by their contributing camera set to batch the solves.
    groups: dict[bytes, list[int]] = {}
    for k in range(n_joints):
        if int(usable[:, k].sum()) >= 2:
            groups.setdefault(usable[:, k].tobytes(), []).append(k)

    joints: dict[JointId, JointEstimate] = {}
    for mask_key, joint_idx in groups.items():
        mask = np.frombuffer(mask_key, dtype=bool)
        cam_idx = np.nonzero(mask)[0]
        k_cams = len(cam_idx)
        g = len(joint_idx)
        a = np.empty((g, 2 * k_cams, 3))
        b = np.empty((g, 2 * k_cams))
        a[:, 0::2, :] = row_u[cam_idx][:, joint_idx].transpose(1, 0, 2)
        a[:, 1::2, :] = row_v[cam_idx][:, joint_idx].transpose(1, 0, 2)
        b[:, 0::2] = rhs_u[cam_idx][:, joint_idx].T
        b[:, 1::2] = rhs_v[cam_idx][:, joint_idx].T
        w = weights[cam_idx][:, joint_idx].T  # (g, k_cams)
        w2 = np.repeat(w, 2, axis=1)  # (g, 2k)
        sqrt_w = np.sqrt(w2)
        u_mat, sv, vt = np.linalg.svd(a * sqrt_w[..., None], full_matrices=False)
        ok = (sv[:, 2] > 0.0) & ((sv[:, 0] / np.maximum(sv[:, 2], 1e-300)) ** 2 < CONDITION_LIMIT)
        x = np.einsum("gji,gj->gi", vt, np.einsum("gij,gi->gj", u_mat, b * sqrt_w) / sv)

        # Weighted RMS reprojection residual in pixels per joint.
        h = np.einsum("cij,gj->gci", rot[cam_idx], x) + off[cam_idx][None, :, :]
        du = h[..., 0] / h[..., 2] - u_px[cam_idx][:, joint_idx].T
        dv = h[..., 1] / h[..., 2] - v_px[cam_idx][:, joint_idx].T
        wsum = w.sum(axis=1)
        residual = np.sqrt((w * (du * du + dv * dv)).sum(axis=1) / wsum)

        for g_i, k in enumerate(joint_idx):
            if not ok[g_i]:
                continue
            joints[JOINT_ORDER[k]] = JointEstimate(
                position=x[g_i], residual=float(residual[g_i]), cameras_used=k_cams
            )

    return Skeleton3D(timestamp=timestamp, joints=joints)


def batch_triangulate(
    streams: Mapping[int, Sequence[Skeleton2D]],
    rig: Mapping[int, Camera],
    params: WeightParams,
    *,
    tolerance: Optional[float] = None,
) -> list[Skeleton3D]:
    """Frame-synchronous triangulation of recorded per-camera streams.

    Views are grouped around the longest stream's timestamps by nearest
    capture time; the grouping tolerance defaults to half that stream's
    median frame interval.  The previous output frame feeds the next
    frame's distance/orthogonality weights.
    """
    streams = {c: sorted(views, key=lambda v: v.timestamp) for c, views in streams.items() if views}
    if len(streams) < 2:
        raise InsufficientViewsError(f"batch triangulation needs >= 2 streams, got {len(streams)}")
    ref_cam = max(streams, key=lambda c: (len(streams[c]), -c))
    ref = streams[ref_cam]
    if tolerance is None:
        ts = np.array([v.timestamp for v in ref])
        tolerance = float(np.median(np.diff(ts)) / 2.0) if len(ts) > 1 else float("inf")

    others = {c: np.array([v.timestamp for v in views]) for c, views in streams.items()}
    out: list[Skeleton3D] = []
    prior: Optional[Skeleton3D] = None
    for ref_view in ref:
        t = ref_view.timestamp
        group: dict[int, Skeleton2D] = {}
        for c, times in others.items():
            idx = int(np.searchsorted(times, t))
            best = None
            for j in (idx - 1, idx):
                if 0 <= j < len(times) and abs(times[j] - t) <= tolerance:
                    if best is None or abs(times[j] - t) < abs(times[best] - t):
                        best = j
            if best is not None:
                group[c] = streams[c][best]
        if len(group) < 2:
            continue
        try:
            sk = triangulate_skeleton(group, rig, params, prior, timestamp=t)
        except InsufficientViewsError:
            continue
        out.append(sk)
        prior = sk
    return out
