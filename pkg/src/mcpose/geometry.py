"""Pinhole camera parameterization and world-to-pixel projection.

Conventions
-----------
World frame: right-handed, Z up, lengths in meters.

Camera frame: right-handed, +Z along the optical axis into the scene,
+X right, +Y down, matching the pixel axes (u right, v down, origin at
the top-left image corner).

Extrinsics store the camera pose *in* the world frame: ``rotation``
columns are the camera axes expressed in world coordinates and
``translation`` is the camera origin.  Projection therefore inverts the
pose internally,

    M = K @ inv(T),    inv(T) = [R.T, -R.T @ t; 0, 1]

where ``K`` is the 3x4 intrinsic matrix and ``T`` the 4x4 pose.  ``M``
is 3x4 and maps homogeneous world points to homogeneous pixels:

    depth * [u, v, 1] = M @ [x, y, z, 1]

A positive depth means the point is in front of the camera.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateDepthError, DegenerateGeometryError, InvariantViolationError

ORTHONORMAL_TOL = 1e-9
DEPTH_EPS = 1e-9

WORLD_UP = np.array([0.0, 0.0, 1.0])


def _as_readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class CameraIntrinsics:
    """Focal lengths and principal point in pixels, plus the image size."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (np.isfinite(self.fx) and self.fx > 0 and np.isfinite(self.fy) and self.fy > 0):
            raise InvariantViolationError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InvariantViolationError(
                f"principal point ({self.cx}, {self.cy}) outside image {self.width}x{self.height}"
            )

    def matrix(self) -> np.ndarray:
        """3x4 intrinsic matrix mapping camera-frame homogeneous points to pixels."""
        return np.array(
            [
                [self.fx, 0.0, self.cx, 0.0],
                [0.0, self.fy, self.cy, 0.0],
                [0.0, 0.0, 1.0, 0.0],
            ]
        )


@dataclass(frozen=True)
class CameraExtrinsics:
    """Camera pose in the world frame (rotation columns = camera axes)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(-1)
        if r.shape != (3, 3):
            raise InvariantViolationError(f"rotation must be 3x3, got {r.shape}")
        if t.shape != (3,):
            raise InvariantViolationError(f"translation must be a 3-vector, got shape {t.shape}")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise InvariantViolationError("extrinsics contain non-finite values")
        if np.abs(r @ r.T - np.eye(3)).max() > ORTHONORMAL_TOL:
            raise InvariantViolationError("rotation is not orthonormal within 1e-9")
        if abs(np.linalg.det(r) - 1.0) > ORTHONORMAL_TOL:
            raise InvariantViolationError("rotation determinant differs from +1")
        object.__setattr__(self, "rotation", _as_readonly(r))
        object.__setattr__(self, "translation", _as_readonly(t))

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous camera-to-world transform."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse_matrix(self) -> np.ndarray:
        """4x4 world-to-camera transform, the rigid inverse [R.T, -R.T t]."""
        m = np.eye(4)
        m[:3, :3] = self.rotation.T
        m[:3, 3] = -self.rotation.T @ self.translation
        return m


@dataclass(frozen=True)
class ProjectionMatrix:
    """3x4 map from homogeneous world points to homogeneous pixels."""

    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=np.float64)
        if m.shape != (3, 4):
            raise InvariantViolationError(f"projection matrix must be 3x4, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise InvariantViolationError("projection matrix contains non-finite values")
        sv = np.linalg.svd(m, compute_uv=False)
        if sv[2] <= 1e-12 * sv[0]:
            raise InvariantViolationError("projection matrix is rank deficient")
        object.__setattr__(self, "m", _as_readonly(m))


def projection_matrix(intr: CameraIntrinsics, extr: CameraExtrinsics) -> ProjectionMatrix:
    """Compose the 3x4 projection from intrinsics and the inverted camera pose."""
    return ProjectionMatrix(intr.matrix() @ extr.inverse_matrix())


def project(m: ProjectionMatrix, point: Sequence[float]) -> tuple[np.ndarray, float]:
    """Project a world point; returns (pixel, depth).

    Negative depth flags a point behind the camera; it is not an error.
    Raises DegenerateDepthError when the point sits on the principal
    plane (|depth| <= 1e-9) and the pixel is undefined.
    """
    x = np.asarray(point, dtype=np.float64).reshape(3)
    h = m.m[:, :3] @ x + m.m[:, 3]
    depth = float(h[2])
    if abs(depth) <= DEPTH_EPS:
        raise DegenerateDepthError(f"point {x.tolist()} lies on the principal plane (depth={depth:.3e})")
    return h[:2] / depth, depth


def optical_axis(extr: CameraExtrinsics) -> np.ndarray:
    """Camera viewing direction (+Z of the camera frame) in world coordinates."""
    return extr.rotation[:, 2].copy()


def look_at_extrinsics(
    position: Sequence[float],
    target: Sequence[float],
    up: Sequence[float] = WORLD_UP,
) -> CameraExtrinsics:
    """Pose a camera at ``position`` with its optical axis through ``target``.

    The image +X is chosen horizontal (perpendicular to ``up``) so the
    image +Y points downward for an upright camera.
    """
    position = np.asarray(position, dtype=np.float64).reshape(3)
    target = np.asarray(target, dtype=np.float64).reshape(3)
    up = np.asarray(up, dtype=np.float64).reshape(3)
    z = target - position
    nz = np.linalg.norm(z)
    if nz < 1e-12:
        raise DegenerateGeometryError("look-at target coincides with the camera position")
    z = z / nz
    x = np.cross(z, up)
    nx = np.linalg.norm(x)
    if nx < 1e-8:
        raise DegenerateGeometryError("optical axis parallel to the up direction")
    x = x / nx
    y = np.cross(z, x)
    return CameraExtrinsics(rotation=np.column_stack([x, y, z]), translation=position)


@dataclass(frozen=True)
class Camera:
    """A rigged camera: identity, parameters, and the derived projection."""

    id: int
    intrinsics: CameraIntrinsics
    extrinsics: CameraExtrinsics
    projection: ProjectionMatrix = field(init=False)

    def __post_init__(self):
        if self.id < 0 or int(self.id) != self.id:
            raise InvariantViolationError(f"camera id must be a non-negative integer, got {self.id}")
        object.__setattr__(self, "projection", projection_matrix(self.intrinsics, self.extrinsics))

    @property
    def position(self) -> np.ndarray:
        return self.extrinsics.translation

    @property
    def axis(self) -> np.ndarray:
        return optical_axis(self.extrinsics)


def load_rig(path: str | Path) -> list[Camera]:
    """Read a rig file (JSON array of camera records) and validate it."""
    with open(path, "r", encoding="utf-8") as f:
        raw = json.load(f)
    return rig_from_obj(raw)


def rig_from_obj(raw: object) -> list[Camera]:
    if not isinstance(raw, list):
        raise InvariantViolationError("rig file must contain a top-level array of cameras")
    cameras = []
    seen = set()
    for entry in raw:
        try:
            cam_id = int(entry["id"])
            intr = entry["intrinsics"]
            extr = entry["extrinsics"]
            intrinsics = CameraIntrinsics(
                fx=float(intr["fx"]),
                fy=float(intr["fy"]),
                cx=float(intr["cx"]),
                cy=float(intr["cy"]),
                width=int(intr["width"]),
                height=int(intr["height"]),
            )
            rotation = np.asarray(extr["rotation"], dtype=np.float64).reshape(3, 3)
            translation = np.asarray(extr["translation"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise InvariantViolationError(f"malformed camera record: {exc}") from exc
        if cam_id in seen:
            raise InvariantViolationError(f"duplicate camera id {cam_id} in rig")
        seen.add(cam_id)
        cameras.append(Camera(id=cam_id, intrinsics=intrinsics, extrinsics=CameraExtrinsics(rotation, translation)))
    return cameras


def rig_to_obj(cameras: Iterable[Camera]) -> list[dict]:
    return [
        {
            "id": cam.id,
            "intrinsics": {
                "fx": cam.intrinsics.fx,
                "fy": cam.intrinsics.fy,
                "cx": cam.intrinsics.cx,
                "cy": cam.intrinsics.cy,
                "width": cam.intrinsics.width,
                "height": cam.intrinsics.height,
            },
            "extrinsics": {
                "rotation": [float(v) for v in cam.extrinsics.rotation.reshape(-1)],
                "translation": [float(v) for v in cam.extrinsics.translation],
            },
        }
        for cam in cameras
    ]


def save_rig(cameras: Iterable[Camera], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(rig_to_obj(cameras), f, indent=2)
        f.write("\n")
