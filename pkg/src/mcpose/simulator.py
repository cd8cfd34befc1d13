"""Deterministic synthetic scenes: camera rigs, body motion, 2D detections.

Everything downstream of a SceneConfig is a pure function of it: the
walking path, pixel noise, scores, and occlusion corruptions all draw
from substreams derived by hashing (seed, purpose, camera, frame), so
per-camera rendering is order-independent and bitwise reproducible.

The body is a rigid-limb kinematic chain; joint angles articulate
fixed-length bones, so bone lengths are conserved exactly in every
emitted frame.  The gait is a plain parametric sinusoid, not a
biomechanical model.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .errors import InvariantViolationError
from .geometry import Camera, CameraIntrinsics, look_at_extrinsics
from .skeleton import JOINT_ORDER, Detection2D, JointId, Skeleton2D

# 848x480 color stream of a small depth camera, the intended hardware class.
DEFAULT_INTRINSICS = CameraIntrinsics(fx=615.0, fy=615.0, cx=424.0, cy=240.0, width=848, height=480)

_PATH_STREAM = 1
_RENDER_STREAM = 2


@dataclass(frozen=True)
class BodyDimensions:
    """Bone lengths in meters for the rigid-limb model."""

    shoulder_width: float = 0.38
    hip_width: float = 0.26
    upper_arm: float = 0.30
    forearm: float = 0.27
    upper_leg: float = 0.42
    lower_leg: float = 0.41
    torso: float = 0.50
    ankle_height: float = 0.10

    @property
    def hip_height(self) -> float:
        return self.ankle_height + self.lower_leg + self.upper_leg


@dataclass(frozen=True)
class RigSpec:
    """Cameras equally spaced on a circle, all aimed at one target."""

    count: int = 4
    radius: float = 4.5
    height: float = 2.2
    target: tuple[float, float, float] = (0.0, 0.0, 1.0)
    intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS

    def __post_init__(self):
        if self.count < 2:
            raise InvariantViolationError(f"a rig needs >= 2 cameras, got {self.count}")
        if self.radius <= 0:
            raise InvariantViolationError(f"rig radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class TPose:
    """Static standing pose with horizontal arms.

    Small default elbow/knee flexion keeps the limb planes (and with
    them the segment frames) well defined.
    """

    duration: float
    elbow_flexion: float = 0.20
    knee_flexion: float = 0.10

    def __post_init__(self):
        if self.duration <= 0:
            raise InvariantViolationError("duration must be positive")


@dataclass(frozen=True)
class Walk:
    """Seeded random-turning walk at constant speed inside a circular arena."""

    speed: float
    duration: float
    bounds: float = 2.5

    def __post_init__(self):
        if self.duration <= 0 or self.speed <= 0 or self.bounds <= 0:
            raise InvariantViolationError("walk speed, duration, and bounds must be positive")


Motion = Union[TPose, Walk]


@dataclass(frozen=True)
class NoiseModel:
    """Detection noise standing in for a 2D pose estimator's error."""

    pixel_sigma: float = 0.0
    score_clean: float = 0.9
    score_sigma: float = 0.0

    def __post_init__(self):
        if self.pixel_sigma < 0:
            raise InvariantViolationError("pixel_sigma must be non-negative")
        if not (0.0 <= self.score_clean <= 1.0 and 0.0 <= self.score_sigma <= 1.0):
            raise InvariantViolationError("score parameters must lie in [0, 1]")


@dataclass(frozen=True)
class Drop:
    """Occlusion mode: the detection disappears."""


@dataclass(frozen=True)
class Corrupt:
    """Occlusion mode: the detection is displaced and its score overridden."""

    offset_px: float
    score: float

    def __post_init__(self):
        if self.offset_px < 0:
            raise InvariantViolationError("offset_px must be non-negative")
        if not 0.0 <= self.score <= 1.0:
            raise InvariantViolationError("override score must lie in [0, 1]")


@dataclass(frozen=True)
class OcclusionSpec:
    """Degrades one camera's view of some joints during a time interval."""

    camera: int
    joints: frozenset[JointId]
    interval: tuple[float, float]
    mode: Union[Drop, Corrupt]

    def __post_init__(self):
        t0, t1 = self.interval
        if not t0 < t1:
            raise InvariantViolationError(f"occlusion interval must satisfy t0 < t1, got {self.interval}")
        object.__setattr__(self, "joints", frozenset(self.joints))

    def active(self, t: float) -> bool:
        return self.interval[0] <= t <= self.interval[1]


@dataclass(frozen=True)
class SceneConfig:
    seed: int = 0
    fps: float = 30.0
    rig: RigSpec = field(default_factory=RigSpec)
    motion: Motion = field(default_factory=lambda: TPose(duration=1.0))
    noise: NoiseModel = field(default_factory=NoiseModel)
    occlusions: tuple[OcclusionSpec, ...] = ()
    body: BodyDimensions = field(default_factory=BodyDimensions)
    # Fraction of one capture period spread across cameras' capture phases;
    # 0 = hardware-synchronized rig, 1 = evenly staggered free-running cameras.
    phase_stagger: float = 0.0

    def __post_init__(self):
        if self.fps <= 0:
            raise InvariantViolationError(f"fps must be positive, got {self.fps}")
        if not 0.0 <= self.phase_stagger <= 1.0:
            raise InvariantViolationError("phase_stagger must lie in [0, 1]")
        object.__setattr__(self, "occlusions", tuple(self.occlusions))


@dataclass(frozen=True)
class GroundTruthFrame:
    timestamp: float
    joints: Mapping[JointId, np.ndarray]

    def __post_init__(self):
        if set(self.joints) != set(JOINT_ORDER):
            raise InvariantViolationError("a ground-truth frame must contain all 14 joints")
        object.__setattr__(self, "joints", {j: np.asarray(p, dtype=np.float64).reshape(3) for j, p in self.joints.items()})


def place_cameras_on_circle(
    n: int,
    radius: float,
    height: float,
    target: Sequence[float],
    intrinsics: Optional[CameraIntrinsics] = None,
) -> list[Camera]:
    """Cameras at angles 2*pi*i/n on the circle, each aimed at ``target``."""
    if n < 2:
        raise InvariantViolationError(f"a rig needs >= 2 cameras, got {n}")
    intrinsics = intrinsics or DEFAULT_INTRINSICS
    cameras = []
    for i in range(n):
        angle = 2.0 * math.pi * i / n
        position = np.array([radius * math.cos(angle), radius * math.sin(angle), height])
        cameras.append(Camera(id=i, intrinsics=intrinsics, extrinsics=look_at_extrinsics(position, target)))
    return cameras


def rig_from_spec(spec: RigSpec) -> list[Camera]:
    return place_cameras_on_circle(spec.count, spec.radius, spec.height, spec.target, spec.intrinsics)


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=(int(seed) & (2**64 - 1), *key)))


class _PathSampler:
    """Pelvis position and heading over time for a Walk, seeded and bounded.

    The path is a polyline with per-frame steps of exactly speed/fps, so
    its length is speed * elapsed regardless of turning.  Off-grid times
    interpolate linearly (positions) and by shortest arc (heading).
    """

    def __init__(self, walk: Walk, fps: float, seed: int):
        n = max(2, round(walk.duration * fps) )
        rng = _rng(seed, _PATH_STREAM)
        step = walk.speed / fps
        heading = rng.uniform(0.0, 2.0 * math.pi)
        pos = np.zeros(2)
        positions = np.empty((n, 2))
        headings = np.empty(n)
        for k in range(n):
            positions[k] = pos
            headings[k] = heading
            turn = rng.normal(0.0, 0.15)
            heading += turn
            nxt = pos + step * np.array([math.cos(heading), math.sin(heading)])
            if np.linalg.norm(nxt) > walk.bounds:
                heading = math.atan2(-pos[1], -pos[0]) + rng.normal(0.0, 0.3)
                nxt = pos + step * np.array([math.cos(heading), math.sin(heading)])
            pos = nxt
        self.fps = fps
        self.positions = positions
        self.headings = headings

    def state_at(self, t: float) -> tuple[np.ndarray, float]:
        x = t * self.fps
        k = int(np.clip(math.floor(x), 0, len(self.positions) - 1))
        if k >= len(self.positions) - 1:
            return self.positions[-1], float(self.headings[-1])
        frac = x - k
        if frac == 0.0:
            return self.positions[k], float(self.headings[k])
        p = (1.0 - frac) * self.positions[k] + frac * self.positions[k + 1]
        dh = (self.headings[k + 1] - self.headings[k] + math.pi) % (2.0 * math.pi) - math.pi
        return p, float(self.headings[k] + frac * dh)


def _pose_tpose(body: BodyDimensions, motion: TPose) -> dict[JointId, np.ndarray]:
    return _build_pose(
        body,
        pelvis_xy=np.zeros(2),
        heading=0.0,
        hip_swing=(0.0, 0.0),
        knee_flexion=(motion.knee_flexion, motion.knee_flexion),
        arm_lateral=True,
        shoulder_swing=(0.0, 0.0),
        elbow_flexion=(motion.elbow_flexion, motion.elbow_flexion),
    )


def _pose_walk(body: BodyDimensions, walk: Walk, sampler: _PathSampler, t: float) -> dict[JointId, np.ndarray]:
    pelvis_xy, heading = sampler.state_at(t)
    stride_length = 1.4
    phase = 2.0 * math.pi * (walk.speed / stride_length) * t
    hip_amp, knee_amp, arm_amp = 0.5, 0.55, 0.35
    s, c = math.sin(phase), math.cos(phase)
    return _build_pose(
        body,
        pelvis_xy=pelvis_xy,
        heading=heading,
        hip_swing=(hip_amp * s, -hip_amp * s),
        # Knees stay slightly flexed so leg planes never collapse.
        knee_flexion=(
            0.08 + knee_amp * (0.5 - 0.5 * c),
            0.08 + knee_amp * (0.5 + 0.5 * c),
        ),
        arm_lateral=False,
        shoulder_swing=(-arm_amp * s, arm_amp * s),
        elbow_flexion=(0.35 + 0.15 * s, 0.35 - 0.15 * s),
    )


def _build_pose(
    body: BodyDimensions,
    *,
    pelvis_xy: np.ndarray,
    heading: float,
    hip_swing: tuple[float, float],
    knee_flexion: tuple[float, float],
    arm_lateral: bool,
    shoulder_swing: tuple[float, float],
    elbow_flexion: tuple[float, float],
) -> dict[JointId, np.ndarray]:
    """Assemble joints from bone lengths and sagittal-plane angles.

    All limb rotations happen about the body's lateral axis, so a swing
    angle composes additively down the chain and every bone keeps its
    exact length.
    """
    fwd = np.array([math.cos(heading), math.sin(heading), 0.0])
    left = np.array([-math.sin(heading), math.cos(heading), 0.0])
    down = np.array([0.0, 0.0, -1.0])
    up = -down

    def sagittal(angle: float) -> np.ndarray:
        # Unit vector 'down' swung forward by `angle` about the lateral axis.
        return math.cos(angle) * down + math.sin(angle) * fwd

    J = JointId
    hips = np.array([pelvis_xy[0], pelvis_xy[1], body.hip_height])
    neck = hips + body.torso * up
    pose = {
        J.HIPS: hips,
        J.NECK: neck,
        J.RIGHT_SHOULDER: neck - 0.5 * body.shoulder_width * left,
        J.LEFT_SHOULDER: neck + 0.5 * body.shoulder_width * left,
        J.RIGHT_HIP: hips - 0.5 * body.hip_width * left,
        J.LEFT_HIP: hips + 0.5 * body.hip_width * left,
    }

    for side, shoulder, elbow, wrist, hip, knee, ankle in (
        (0, J.RIGHT_SHOULDER, J.RIGHT_ELBOW, J.RIGHT_WRIST, J.RIGHT_HIP, J.RIGHT_KNEE, J.RIGHT_ANKLE),
        (1, J.LEFT_SHOULDER, J.LEFT_ELBOW, J.LEFT_WRIST, J.LEFT_HIP, J.LEFT_KNEE, J.LEFT_ANKLE),
    ):
        lateral = -left if side == 0 else left
        if arm_lateral:
            pose[elbow] = pose[shoulder] + body.upper_arm * lateral
            bend = elbow_flexion[side]
            fore_dir = math.cos(bend) * lateral + math.sin(bend) * fwd
            pose[wrist] = pose[elbow] + body.forearm * fore_dir
        else:
            swing = shoulder_swing[side]
            pose[elbow] = pose[shoulder] + body.upper_arm * sagittal(swing)
            pose[wrist] = pose[elbow] + body.forearm * sagittal(swing + elbow_flexion[side])
        swing = hip_swing[side]
        pose[knee] = pose[hip] + body.upper_leg * sagittal(swing)
        pose[ankle] = pose[knee] + body.lower_leg * sagittal(swing - knee_flexion[side])
    return pose


def _pose_at(cfg: SceneConfig, sampler: Optional[_PathSampler], t: float) -> dict[JointId, np.ndarray]:
    if isinstance(cfg.motion, TPose):
        return _pose_tpose(cfg.body, cfg.motion)
    assert sampler is not None
    return _pose_walk(cfg.body, cfg.motion, sampler, t)


def _make_sampler(cfg: SceneConfig) -> Optional[_PathSampler]:
    if isinstance(cfg.motion, Walk):
        return _PathSampler(cfg.motion, cfg.fps, cfg.seed)
    return None


def generate_ground_truth(cfg: SceneConfig) -> list[GroundTruthFrame]:
    """Skeleton trajectory at 1/fps spacing, fully determined by the config."""
    n = max(1, round(cfg.motion.duration * cfg.fps))
    sampler = _make_sampler(cfg)
    return [
        GroundTruthFrame(timestamp=k / cfg.fps, joints=_pose_at(cfg, sampler, k / cfg.fps))
        for k in range(n)
    ]


def render_detections(
    gt: Sequence[GroundTruthFrame],
    rig: Sequence[Camera],
    cfg: SceneConfig,
) -> dict[int, list[Skeleton2D]]:
    """Project ground truth into every camera and degrade it per the config.

    Joints projecting outside the image or behind a camera are dropped.
    Gaussian pixel noise and scores are drawn per (camera, frame).  A
    Corrupt occlusion replaces the detection with the exact projection
    displaced by its offset in a seeded random direction, so the
    displacement magnitude is exact regardless of pixel noise.

    With phase_stagger > 0 each camera captures at shifted times,
    re-sampling the motion between ground-truth frames.
    """
    sampler = _make_sampler(cfg) if cfg.phase_stagger > 0 else None
    period = 1.0 / cfg.fps
    out: dict[int, list[Skeleton2D]] = {}
    for idx, cam in enumerate(rig):
        m = cam.projection.m
        width, height = cam.intrinsics.width, cam.intrinsics.height
        phase = cfg.phase_stagger * (idx / len(rig)) * period
        occs = [o for o in cfg.occlusions if o.camera == cam.id]
        views: list[Skeleton2D] = []
        for k, frame in enumerate(gt):
            t = frame.timestamp + phase
            pose = frame.joints if phase == 0.0 else _pose_at(cfg, sampler, t)
            rng = _rng(cfg.seed, _RENDER_STREAM, cam.id, k)
            joints: dict[JointId, Detection2D] = {}
            for joint in JOINT_ORDER:
                h = m[:, :3] @ pose[joint] + m[:, 3]
                if h[2] <= 0:
                    continue
                u, v = h[0] / h[2], h[1] / h[2]
                if not (0.0 <= u < width and 0.0 <= v < height):
                    continue
                if cfg.noise.pixel_sigma > 0:
                    noisy = rng.normal((u, v), cfg.noise.pixel_sigma)
                    u, v = float(noisy[0]), float(noisy[1])
                score = cfg.noise.score_clean
                if cfg.noise.score_sigma > 0:
                    score = float(np.clip(rng.normal(score, cfg.noise.score_sigma), 0.0, 1.0))
                det = Detection2D(u=u, v=v, score=score)
                for occ in occs:
                    if joint in occ.joints and occ.active(t):
                        if isinstance(occ.mode, Drop):
                            det = None
                        else:
                            angle = rng.uniform(0.0, 2.0 * math.pi)
                            exact_u, exact_v = h[0] / h[2], h[1] / h[2]
                            det = Detection2D(
                                u=exact_u + occ.mode.offset_px * math.cos(angle),
                                v=exact_v + occ.mode.offset_px * math.sin(angle),
                                score=occ.mode.score,
                            )
                if det is not None:
                    joints[joint] = det
            views.append(Skeleton2D(camera=cam.id, timestamp=t, joints=joints))
        out[cam.id] = views
    return out


@dataclass(frozen=True)
class SimulationResult:
    rig: list[Camera]
    ground_truth: list[GroundTruthFrame]
    detections: dict[int, list[Skeleton2D]]


def simulate(cfg: SceneConfig) -> SimulationResult:
    rig = rig_from_spec(cfg.rig)
    gt = generate_ground_truth(cfg)
    return SimulationResult(rig=rig, ground_truth=gt, detections=render_detections(gt, rig, cfg))


# --- ground-truth stream (JSON Lines) ---------------------------------------

_JOINT_BY_NAME = {j.value: j for j in JointId}


def ground_truth_to_obj(frame: GroundTruthFrame) -> dict:
    return {
        "t": frame.timestamp,
        "joints": {
            j.value: {"x": float(p[0]), "y": float(p[1]), "z": float(p[2])}
            for j in JOINT_ORDER
            for p in (frame.joints[j],)
        },
    }


def ground_truth_from_obj(obj: Mapping) -> GroundTruthFrame:
    try:
        joints = {
            _JOINT_BY_NAME[name]: np.array([float(d["x"]), float(d["y"]), float(d["z"])])
            for name, d in obj["joints"].items()
        }
        return GroundTruthFrame(timestamp=float(obj["t"]), joints=joints)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvariantViolationError(f"malformed ground-truth record: {exc}") from exc


def write_ground_truth_stream(frames: Sequence[GroundTruthFrame], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for frame in frames:
            f.write(json.dumps(ground_truth_to_obj(frame)) + "\n")


def read_ground_truth_stream(path) -> list[GroundTruthFrame]:
    frames = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                frames.append(ground_truth_from_obj(json.loads(line)))
    return frames


# --- JSON scene configuration ----------------------------------------------


def scene_from_obj(obj: Mapping) -> SceneConfig:
    try:
        rig_obj = obj.get("rig", {})
        intr = rig_obj.get("intrinsics")
        rig = RigSpec(
            count=int(rig_obj.get("count", 4)),
            radius=float(rig_obj.get("radius", 4.5)),
            height=float(rig_obj.get("height", 2.2)),
            target=tuple(float(v) for v in rig_obj.get("target", (0.0, 0.0, 1.0))),
            intrinsics=CameraIntrinsics(
                fx=float(intr["fx"]),
                fy=float(intr["fy"]),
                cx=float(intr["cx"]),
                cy=float(intr["cy"]),
                width=int(intr["width"]),
                height=int(intr["height"]),
            )
            if intr
            else DEFAULT_INTRINSICS,
        )
        motion_obj = obj["motion"]
        kind = str(motion_obj["type"]).lower()
        if kind == "tpose":
            motion: Motion = TPose(
                duration=float(motion_obj["duration"]),
                elbow_flexion=float(motion_obj.get("elbow_flexion", 0.20)),
                knee_flexion=float(motion_obj.get("knee_flexion", 0.10)),
            )
        elif kind == "walk":
            motion = Walk(
                speed=float(motion_obj["speed"]),
                duration=float(motion_obj["duration"]),
                bounds=float(motion_obj.get("bounds", 2.5)),
            )
        else:
            raise InvariantViolationError(f"unknown motion type {kind!r}")
        noise_obj = obj.get("noise", {})
        noise = NoiseModel(
            pixel_sigma=float(noise_obj.get("pixel_sigma", 0.0)),
            score_clean=float(noise_obj.get("score_clean", 0.9)),
            score_sigma=float(noise_obj.get("score_sigma", 0.0)),
        )
        occlusions = []
        for occ in obj.get("occlusions", ()):
            mode_obj = occ["mode"]
            mode_kind = str(mode_obj["type"]).lower()
            if mode_kind == "drop":
                mode: Union[Drop, Corrupt] = Drop()
            elif mode_kind == "corrupt":
                mode = Corrupt(offset_px=float(mode_obj["offset_px"]), score=float(mode_obj["score"]))
            else:
                raise InvariantViolationError(f"unknown occlusion mode {mode_kind!r}")
            occlusions.append(
                OcclusionSpec(
                    camera=int(occ["camera"]),
                    joints=frozenset(_JOINT_BY_NAME[name] for name in occ["joints"]),
                    interval=(float(occ["interval"][0]), float(occ["interval"][1])),
                    mode=mode,
                )
            )
        body_obj = obj.get("body", {})
        body = replace(BodyDimensions(), **{k: float(v) for k, v in body_obj.items()})
        return SceneConfig(
            seed=int(obj.get("seed", 0)),
            fps=float(obj.get("fps", 30.0)),
            rig=rig,
            motion=motion,
            noise=noise,
            occlusions=tuple(occlusions),
            body=body,
            phase_stagger=float(obj.get("phase_stagger", 0.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvariantViolationError(f"malformed scene config: {exc}") from exc


def load_scene(path) -> SceneConfig:
    with open(path, "r", encoding="utf-8") as f:
        return scene_from_obj(json.load(f))
