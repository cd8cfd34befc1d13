"""14-joint skeleton vocabulary, 2D/3D containers, and body segment frames.

Segment frames follow ISB-style joint coordinate systems: each frame's
Z axis runs along the segment toward the proximal joint, the Y axis is
the normal of the plane the adjacent segments span, and X closes a
right-handed triad.  The "neck" used for torso axes is the midpoint of
the shoulders, not the Neck keypoint itself.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping

import numpy as np

from .errors import DegenerateGeometryError, InvariantViolationError, MissingJointError

CROSS_DEGENERACY_EPS = 1e-8


class JointId(Enum):
    NECK = "Neck"
    RIGHT_SHOULDER = "RightShoulder"
    RIGHT_ELBOW = "RightElbow"
    RIGHT_WRIST = "RightWrist"
    LEFT_SHOULDER = "LeftShoulder"
    LEFT_ELBOW = "LeftElbow"
    LEFT_WRIST = "LeftWrist"
    HIPS = "Hips"
    RIGHT_HIP = "RightHip"
    RIGHT_KNEE = "RightKnee"
    RIGHT_ANKLE = "RightAnkle"
    LEFT_HIP = "LeftHip"
    LEFT_KNEE = "LeftKnee"
    LEFT_ANKLE = "LeftAnkle"


# Canonical serialization / iteration order.
JOINT_ORDER: tuple[JointId, ...] = tuple(JointId)


class SegmentId(Enum):
    CHEST = "Chest"
    PELVIS = "Pelvis"
    RIGHT_UPPER_ARM = "RightUpperArm"
    LEFT_UPPER_ARM = "LeftUpperArm"
    RIGHT_FOREARM = "RightForearm"
    LEFT_FOREARM = "LeftForearm"
    RIGHT_UPPER_LEG = "RightUpperLeg"
    LEFT_UPPER_LEG = "LeftUpperLeg"
    RIGHT_LOWER_LEG = "RightLowerLeg"
    LEFT_LOWER_LEG = "LeftLowerLeg"


SEGMENT_ENDPOINTS: dict[SegmentId, tuple[JointId, JointId]] = {
    SegmentId.CHEST: (JointId.HIPS, JointId.NECK),
    SegmentId.PELVIS: (JointId.HIPS, JointId.NECK),
    SegmentId.RIGHT_UPPER_ARM: (JointId.RIGHT_SHOULDER, JointId.RIGHT_ELBOW),
    SegmentId.LEFT_UPPER_ARM: (JointId.LEFT_SHOULDER, JointId.LEFT_ELBOW),
    SegmentId.RIGHT_FOREARM: (JointId.RIGHT_ELBOW, JointId.RIGHT_WRIST),
    SegmentId.LEFT_FOREARM: (JointId.LEFT_ELBOW, JointId.LEFT_WRIST),
    SegmentId.RIGHT_UPPER_LEG: (JointId.RIGHT_HIP, JointId.RIGHT_KNEE),
    SegmentId.LEFT_UPPER_LEG: (JointId.LEFT_HIP, JointId.LEFT_KNEE),
    SegmentId.RIGHT_LOWER_LEG: (JointId.RIGHT_KNEE, JointId.RIGHT_ANKLE),
    SegmentId.LEFT_LOWER_LEG: (JointId.LEFT_KNEE, JointId.LEFT_ANKLE),
}


def segment_endpoints(seg: SegmentId) -> tuple[JointId, JointId]:
    """(proximal, distal) joints bounding a body segment."""
    return SEGMENT_ENDPOINTS[seg]


@dataclass(frozen=True)
class Detection2D:
    """A single joint detection in one camera image."""

    u: float
    v: float
    score: float

    def __post_init__(self):
        if not (np.isfinite(self.u) and np.isfinite(self.v)):
            raise InvariantViolationError(f"pixel coordinates must be finite, got ({self.u}, {self.v})")
        if not (0.0 <= self.score <= 1.0):
            raise InvariantViolationError(f"score must lie in [0, 1], got {self.score}")


@dataclass(frozen=True)
class Skeleton2D:
    """Per-camera 2D skeleton at one capture timestamp."""

    camera: int
    timestamp: float
    joints: Mapping[JointId, Detection2D]

    def __post_init__(self):
        if not np.isfinite(self.timestamp):
            raise InvariantViolationError(f"timestamp must be finite, got {self.timestamp}")
        object.__setattr__(self, "joints", dict(self.joints))


@dataclass(frozen=True)
class JointEstimate:
    """Triangulated joint: world position plus solve diagnostics."""

    position: np.ndarray
    residual: float  # weighted RMS reprojection residual, pixels
    cameras_used: int

    def __post_init__(self):
        p = np.asarray(self.position, dtype=np.float64).reshape(3)
        if not (math.isfinite(p[0]) and math.isfinite(p[1]) and math.isfinite(p[2])):
            raise InvariantViolationError("joint position must be finite")
        if self.cameras_used < 2:
            raise InvariantViolationError(f"a triangulated joint needs >= 2 cameras, got {self.cameras_used}")
        object.__setattr__(self, "position", p)


@dataclass(frozen=True)
class Skeleton3D:
    """World-frame skeleton at one timestamp; joints may be missing."""

    timestamp: float
    joints: Mapping[JointId, JointEstimate]

    def __post_init__(self):
        if not np.isfinite(self.timestamp):
            raise InvariantViolationError(f"timestamp must be finite, got {self.timestamp}")
        object.__setattr__(self, "joints", dict(self.joints))

    def positions(self) -> dict[JointId, np.ndarray]:
        return {j: e.position for j, e in self.joints.items()}


@dataclass(frozen=True)
class SegmentFrame:
    """Orthonormal right-handed frame attached to a body segment."""

    rotation: np.ndarray  # columns are the frame's X, Y, Z in world coordinates
    origin: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        o = np.asarray(self.origin, dtype=np.float64).reshape(3)
        if r.shape != (3, 3):
            raise InvariantViolationError(f"frame rotation must be 3x3, got {r.shape}")
        if np.abs(r @ r.T - np.eye(3)).max() > 1e-9 or abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise InvariantViolationError("segment frame is not orthonormal right-handed within 1e-9")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "origin", o)

    @property
    def x(self) -> np.ndarray:
        return self.rotation[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.rotation[:, 1]

    @property
    def z(self) -> np.ndarray:
        return self.rotation[:, 2]


def neck_midpoint(sk: Skeleton3D | Mapping[JointId, np.ndarray]) -> np.ndarray:
    """Midpoint of the two shoulders, the torso's upper reference point."""
    pos = sk.positions() if isinstance(sk, Skeleton3D) else sk
    try:
        return (np.asarray(pos[JointId.RIGHT_SHOULDER]) + np.asarray(pos[JointId.LEFT_SHOULDER])) / 2.0
    except KeyError as exc:
        raise MissingJointError(f"neck midpoint needs both shoulders, missing {exc}") from exc


def _unit(v: np.ndarray, what: str) -> np.ndarray:
    n = np.linalg.norm(v)
    if n < CROSS_DEGENERACY_EPS:
        raise DegenerateGeometryError(f"{what} is degenerate (norm {n:.2e})")
    return v / n


def _frame(x: np.ndarray, y: np.ndarray, z: np.ndarray, origin: np.ndarray) -> SegmentFrame:
    return SegmentFrame(rotation=np.column_stack([x, y, z]), origin=origin)


def _torso_axes(pos: Mapping[JointId, np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """(Z up the spine, girdle vector left shoulder -> right shoulder)."""
    z = _unit(neck_midpoint(pos) - pos[JointId.HIPS], "pelvis-to-neck axis")
    girdle = pos[JointId.RIGHT_SHOULDER] - pos[JointId.LEFT_SHOULDER]
    return z, girdle


def segment_frames_from_positions(
    pos: Mapping[JointId, np.ndarray],
    *,
    on_degenerate: str = "raise",
) -> dict[SegmentId, SegmentFrame]:
    """Compute all segment frames available from the given joint positions.

    Segments whose joints are missing are silently omitted.  Collinear
    geometry (e.g. a fully extended elbow) raises DegenerateGeometryError
    unless ``on_degenerate="omit"``, which drops the affected segments
    instead.
    """
    if on_degenerate not in ("raise", "omit"):
        raise ValueError(f"on_degenerate must be 'raise' or 'omit', got {on_degenerate!r}")
    out: dict[SegmentId, SegmentFrame] = {}

    def put(seg: SegmentId, build):
        try:
            out[seg] = build()
        except DegenerateGeometryError:
            if on_degenerate == "raise":
                raise

    def have(*joints: JointId) -> bool:
        return all(j in pos for j in joints)

    J = JointId
    torso_ok = have(J.HIPS, J.RIGHT_SHOULDER, J.LEFT_SHOULDER)

    if torso_ok:

        def chest():
            z, girdle = _torso_axes(pos)
            x = _unit(np.cross(z, girdle), "chest X (spine x girdle)")
            return _frame(x, np.cross(z, x), z, pos[J.HIPS])

        put(SegmentId.CHEST, chest)

    if torso_ok and have(J.RIGHT_HIP, J.LEFT_HIP):

        def pelvis():
            z = _unit(neck_midpoint(pos) - pos[J.HIPS], "pelvis-to-neck axis")
            hips_axis = pos[J.LEFT_HIP] - pos[J.RIGHT_HIP]
            x = _unit(np.cross(hips_axis, z), "pelvis X (hips x spine)")
            # Y recomputed from Z and X: the longitudinal axis is primary.
            return _frame(x, np.cross(z, x), z, pos[J.HIPS])

        put(SegmentId.PELVIS, pelvis)

    for upper_seg, fore_seg, shoulder, elbow, wrist in (
        (SegmentId.RIGHT_UPPER_ARM, SegmentId.RIGHT_FOREARM, J.RIGHT_SHOULDER, J.RIGHT_ELBOW, J.RIGHT_WRIST),
        (SegmentId.LEFT_UPPER_ARM, SegmentId.LEFT_FOREARM, J.LEFT_SHOULDER, J.LEFT_ELBOW, J.LEFT_WRIST),
    ):
        if not have(shoulder, elbow, wrist):
            continue

        def arm_pair(shoulder=shoulder, elbow=elbow, wrist=wrist):
            fore_vec = pos[wrist] - pos[elbow]
            upper_vec = pos[shoulder] - pos[elbow]
            y = _unit(np.cross(fore_vec, upper_vec), "arm plane normal")
            z_upper = _unit(upper_vec, "upper-arm axis")
            z_fore = _unit(pos[elbow] - pos[wrist], "forearm axis")
            return (
                _frame(np.cross(y, z_upper), y, z_upper, pos[shoulder]),
                _frame(np.cross(y, z_fore), y, z_fore, pos[elbow]),
            )

        try:
            upper_frame, fore_frame = arm_pair()
        except DegenerateGeometryError:
            if on_degenerate == "raise":
                raise
            continue
        out[upper_seg] = upper_frame
        out[fore_seg] = fore_frame

    for upper_seg, lower_seg, hip, knee, ankle in (
        (SegmentId.RIGHT_UPPER_LEG, SegmentId.RIGHT_LOWER_LEG, J.RIGHT_HIP, J.RIGHT_KNEE, J.RIGHT_ANKLE),
        (SegmentId.LEFT_UPPER_LEG, SegmentId.LEFT_LOWER_LEG, J.LEFT_HIP, J.LEFT_KNEE, J.LEFT_ANKLE),
    ):
        if not have(hip, knee, ankle):
            continue

        def leg_pair(hip=hip, knee=knee, ankle=ankle):
            z_upper = _unit(pos[hip] - pos[knee], "upper-leg axis")
            z_lower = _unit(pos[knee] - pos[ankle], "lower-leg axis")
            y = _unit(np.cross(z_upper, z_lower), "leg plane normal")
            return (
                _frame(np.cross(y, z_upper), y, z_upper, pos[hip]),
                _frame(np.cross(y, z_lower), y, z_lower, pos[knee]),
            )

        try:
            upper_frame, lower_frame = leg_pair()
        except DegenerateGeometryError:
            if on_degenerate == "raise":
                raise
            continue
        out[upper_seg] = upper_frame
        out[lower_seg] = lower_frame

    return out


def compute_segment_frames(sk: Skeleton3D, *, on_degenerate: str = "raise") -> dict[SegmentId, SegmentFrame]:
    """Segment frames of a triangulated skeleton; see segment_frames_from_positions."""
    return segment_frames_from_positions(sk.positions(), on_degenerate=on_degenerate)


def segment_z_directions(pos: Mapping[JointId, np.ndarray]) -> dict[SegmentId, np.ndarray]:
    """Unit Z axis of each available segment frame, without building frames.

    A frame's Z always runs along the segment toward the proximal joint
    (pelvis center to neck midpoint for chest and pelvis), so it exists
    even where the full frame is degenerate.  Zero-length segments are
    omitted.
    """
    J = JointId
    out: dict[SegmentId, np.ndarray] = {}

    def put(seg: SegmentId, head: JointId, tail: JointId):
        if head in pos and tail in pos:
            v = np.asarray(pos[head], float) - np.asarray(pos[tail], float)
            n = np.linalg.norm(v)
            if n >= CROSS_DEGENERACY_EPS:
                out[seg] = v / n

    if J.HIPS in pos and J.RIGHT_SHOULDER in pos and J.LEFT_SHOULDER in pos:
        v = neck_midpoint(pos) - np.asarray(pos[J.HIPS], float)
        n = np.linalg.norm(v)
        if n >= CROSS_DEGENERACY_EPS:
            out[SegmentId.CHEST] = v / n
            out[SegmentId.PELVIS] = out[SegmentId.CHEST]
    put(SegmentId.RIGHT_UPPER_ARM, J.RIGHT_SHOULDER, J.RIGHT_ELBOW)
    put(SegmentId.LEFT_UPPER_ARM, J.LEFT_SHOULDER, J.LEFT_ELBOW)
    put(SegmentId.RIGHT_FOREARM, J.RIGHT_ELBOW, J.RIGHT_WRIST)
    put(SegmentId.LEFT_FOREARM, J.LEFT_ELBOW, J.LEFT_WRIST)
    put(SegmentId.RIGHT_UPPER_LEG, J.RIGHT_HIP, J.RIGHT_KNEE)
    put(SegmentId.LEFT_UPPER_LEG, J.LEFT_HIP, J.LEFT_KNEE)
    put(SegmentId.RIGHT_LOWER_LEG, J.RIGHT_KNEE, J.RIGHT_ANKLE)
    put(SegmentId.LEFT_LOWER_LEG, J.LEFT_KNEE, J.LEFT_ANKLE)
    return out


def segment_plane_angle(
    seg_frame: SegmentFrame | None,
    segment_vector: np.ndarray | None,
    plane_normal: np.ndarray,
) -> float:
    """Angle in [0, pi/2] between a segment direction and a plane normal.

    When ``segment_vector`` is None the frame's Z axis is used.
    """
    if segment_vector is None:
        if seg_frame is None:
            raise InvariantViolationError("either a segment frame or an explicit segment vector is required")
        segment_vector = seg_frame.z
    s = np.asarray(segment_vector, dtype=np.float64).reshape(3)
    n = np.asarray(plane_normal, dtype=np.float64).reshape(3)
    ns, nn = np.linalg.norm(s), np.linalg.norm(n)
    if ns < 1e-12 or nn < 1e-12:
        raise DegenerateGeometryError("segment vector and plane normal must be nonzero")
    return float(np.arccos(np.clip(abs(np.dot(s, n)) / (ns * nn), 0.0, 1.0)))


# --- JSON Lines stream formats --------------------------------------------

_JOINT_BY_NAME = {j.value: j for j in JointId}


def skeleton2d_to_obj(sk: Skeleton2D) -> dict:
    return {
        "t": sk.timestamp,
        "camera": sk.camera,
        "joints": {
            j.value: {"u": det.u, "v": det.v, "score": det.score}
            for j in JOINT_ORDER
            if (det := sk.joints.get(j)) is not None
        },
    }


def skeleton2d_from_obj(obj: Mapping) -> Skeleton2D:
    try:
        joints = {
            _JOINT_BY_NAME[name]: Detection2D(u=float(d["u"]), v=float(d["v"]), score=float(d["score"]))
            for name, d in obj["joints"].items()
        }
        return Skeleton2D(camera=int(obj["camera"]), timestamp=float(obj["t"]), joints=joints)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvariantViolationError(f"malformed 2D skeleton record: {exc}") from exc


def skeleton3d_to_obj(sk: Skeleton3D) -> dict:
    return {
        "t": sk.timestamp,
        "joints": {
            j.value: {
                "x": float(e.position[0]),
                "y": float(e.position[1]),
                "z": float(e.position[2]),
                "residual": e.residual,
                "cameras_used": e.cameras_used,
            }
            for j in JOINT_ORDER
            if (e := sk.joints.get(j)) is not None
        },
    }


def skeleton3d_from_obj(obj: Mapping) -> Skeleton3D:
    try:
        joints = {
            _JOINT_BY_NAME[name]: JointEstimate(
                position=np.array([float(d["x"]), float(d["y"]), float(d["z"])]),
                residual=float(d["residual"]),
                cameras_used=int(d["cameras_used"]),
            )
            for name, d in obj["joints"].items()
        }
        return Skeleton3D(timestamp=float(obj["t"]), joints=joints)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvariantViolationError(f"malformed 3D skeleton record: {exc}") from exc


def _read_jsonl(path: str | Path) -> Iterator[object]:
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                yield json.loads(line)


def read_skeleton2d_stream(path: str | Path) -> list[Skeleton2D]:
    return [skeleton2d_from_obj(obj) for obj in _read_jsonl(path)]


def read_skeleton3d_stream(path: str | Path) -> list[Skeleton3D]:
    return [skeleton3d_from_obj(obj) for obj in _read_jsonl(path)]


def write_skeleton2d_stream(skeletons: Iterable[Skeleton2D], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for sk in skeletons:
            f.write(json.dumps(skeleton2d_to_obj(sk)) + "\n")


def write_skeleton3d_stream(skeletons: Iterable[Skeleton3D], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for sk in skeletons:
            f.write(json.dumps(skeleton3d_to_obj(sk)) + "\n")
