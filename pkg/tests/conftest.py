"""Shared fixtures: camera rigs, synthetic poses, and view rendering."""

from __future__ import annotations

import math

import numpy as np
import pytest

from mcpose.geometry import Camera, project
from mcpose.simulator import place_cameras_on_circle
from mcpose.skeleton import Detection2D, JointEstimate, JointId, Skeleton2D, Skeleton3D

# --- acceptance criterion reporting ----------------------------------------

_ACCEPTANCE_RESULTS: dict[str, bool] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(criterion): marks a test as an acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call":
        marker = item.get_closest_marker("acceptance")
        if marker:
            _ACCEPTANCE_RESULTS[marker.args[0]] = report.passed


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for name in sorted(_ACCEPTANCE_RESULTS):
            status = "PASS" if _ACCEPTANCE_RESULTS[name] else "FAIL"
            terminalreporter.write_line(f"{name}: {status}")


# --- rigs -------------------------------------------------------------------


@pytest.fixture
def rig4() -> list[Camera]:
    return place_cameras_on_circle(4, 4.5, 2.2, (0.0, 0.0, 1.0))


@pytest.fixture
def rig8() -> list[Camera]:
    return place_cameras_on_circle(8, 4.5, 2.2, (0.0, 0.0, 1.0))


# --- skeleton helpers --------------------------------------------------------


def sk3d(positions: dict[JointId, np.ndarray], t: float = 0.0) -> Skeleton3D:
    return Skeleton3D(
        timestamp=t,
        joints={j: JointEstimate(position=np.asarray(p, float), residual=0.0, cameras_used=2) for j, p in positions.items()},
    )


def views_from_pose(
    pose: dict[JointId, np.ndarray],
    rig: list[Camera],
    *,
    score: float = 0.9,
    t: float = 0.0,
) -> dict[int, Skeleton2D]:
    """Exact projections of a pose into every camera, one view per camera."""
    views = {}
    for cam in rig:
        dets = {}
        for j, p in pose.items():
            pixel, depth = project(cam.projection, p)
            if depth > 0:
                dets[j] = Detection2D(u=float(pixel[0]), v=float(pixel[1]), score=score)
        views[cam.id] = Skeleton2D(camera=cam.id, timestamp=t, joints=dets)
    return views


def tpose_positions(
    *,
    center: np.ndarray | None = None,
    elbow_flexion: float = 0.0,
    knee_flexion: float = 0.0,
) -> dict[JointId, np.ndarray]:
    """Hand-built T-pose: torso up +Z, arms along +/-Y, facing +X."""
    c = np.zeros(3) if center is None else np.asarray(center, float)
    J = JointId
    hips = c + np.array([0.0, 0.0, 0.93])
    neck = hips + np.array([0.0, 0.0, 0.50])
    fwd = np.array([1.0, 0.0, 0.0])
    left = np.array([0.0, 1.0, 0.0])
    down = np.array([0.0, 0.0, -1.0])
    pose = {
        J.HIPS: hips,
        J.NECK: neck,
        J.RIGHT_SHOULDER: neck - 0.19 * left,
        J.LEFT_SHOULDER: neck + 0.19 * left,
        J.RIGHT_HIP: hips - 0.13 * left,
        J.LEFT_HIP: hips + 0.13 * left,
    }
    for sign, elbow, wrist, shoulder, hip, knee, ankle in (
        (-1, J.RIGHT_ELBOW, J.RIGHT_WRIST, J.RIGHT_SHOULDER, J.RIGHT_HIP, J.RIGHT_KNEE, J.RIGHT_ANKLE),
        (+1, J.LEFT_ELBOW, J.LEFT_WRIST, J.LEFT_SHOULDER, J.LEFT_HIP, J.LEFT_KNEE, J.LEFT_ANKLE),
    ):
        lateral = sign * left
        pose[elbow] = pose[shoulder] + 0.30 * lateral
        fore_dir = math.cos(elbow_flexion) * lateral + math.sin(elbow_flexion) * fwd
        pose[wrist] = pose[elbow] + 0.27 * fore_dir
        pose[knee] = pose[hip] + 0.42 * down
        shank_dir = math.cos(knee_flexion) * down - math.sin(knee_flexion) * fwd
        pose[ankle] = pose[knee] + 0.41 * shank_dir
    return pose


def random_pose(rng: np.random.Generator) -> dict[JointId, np.ndarray]:
    """Random non-degenerate pose: every limb pair spans a solid plane."""

    def unit(v):
        return v / np.linalg.norm(v)

    def rand_unit():
        return unit(rng.normal(size=3))

    def at_angle(base: np.ndarray, angle: float) -> np.ndarray:
        # Unit vector at the given angle from `base`.
        p = rng.normal(size=3)
        p -= np.dot(p, base) * base
        p = unit(p)
        return math.cos(angle) * base + math.sin(angle) * p

    J = JointId
    torso = rng.uniform(0.4, 0.6)
    shoulder_w = rng.uniform(0.3, 0.45)
    hip_w = rng.uniform(0.2, 0.3)
    hips = rng.normal(scale=2.0, size=3)
    spine = rand_unit()
    neck_mid = hips + torso * spine
    girdle = at_angle(spine, rng.uniform(0.3, math.pi - 0.3))  # left -> right
    hip_line = at_angle(spine, rng.uniform(0.3, math.pi - 0.3))  # left -> right
    pose = {
        J.HIPS: hips,
        J.NECK: neck_mid + 0.03 * rand_unit(),
        J.RIGHT_SHOULDER: neck_mid + 0.5 * shoulder_w * girdle,
        J.LEFT_SHOULDER: neck_mid - 0.5 * shoulder_w * girdle,
        J.RIGHT_HIP: hips + 0.5 * hip_w * hip_line,
        J.LEFT_HIP: hips - 0.5 * hip_w * hip_line,
    }
    for shoulder, elbow, wrist in (
        (J.RIGHT_SHOULDER, J.RIGHT_ELBOW, J.RIGHT_WRIST),
        (J.LEFT_SHOULDER, J.LEFT_ELBOW, J.LEFT_WRIST),
    ):
        upper_dir = rand_unit()
        fore_dir = at_angle(upper_dir, rng.uniform(0.2, math.pi - 0.2))
        pose[elbow] = pose[shoulder] + rng.uniform(0.25, 0.35) * upper_dir
        pose[wrist] = pose[elbow] + rng.uniform(0.22, 0.30) * fore_dir
    for hip, knee, ankle in (
        (J.RIGHT_HIP, J.RIGHT_KNEE, J.RIGHT_ANKLE),
        (J.LEFT_HIP, J.LEFT_KNEE, J.LEFT_ANKLE),
    ):
        upper_dir = rand_unit()
        lower_dir = at_angle(upper_dir, rng.uniform(0.2, math.pi - 0.2))
        pose[knee] = pose[hip] + rng.uniform(0.35, 0.45) * upper_dir
        pose[ankle] = pose[knee] + rng.uniform(0.33, 0.43) * lower_dir
    return pose
