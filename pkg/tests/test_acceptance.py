"""Acceptance suite: one test per release criterion, reported by name.

Each test prints its PASS/FAIL line in the terminal summary (see
conftest).  Expected values come from independent oracles: a dense
grid-refined reprojection search, brute-force normal equations, and
hand-computed statistics.
"""

from __future__ import annotations

import filecmp
import json
import math
import time

import numpy as np
import pytest

from mcpose.cli import main
from mcpose.errors import DegenerateGeometryError
from mcpose.fusion import FusionConfig, FusionLoop, replay
from mcpose.geometry import Camera, look_at_extrinsics
from mcpose.metrics import ablation_report, mpjpe
from mcpose.simulator import (
    DEFAULT_INTRINSICS,
    Corrupt,
    NoiseModel,
    OcclusionSpec,
    RigSpec,
    SceneConfig,
    TPose,
    Walk,
    place_cameras_on_circle,
    simulate,
)
from mcpose.skeleton import (
    JOINT_ORDER,
    JointEstimate,
    JointId,
    Skeleton2D,
    Skeleton3D,
    segment_frames_from_positions,
)
from mcpose.triangulation import (
    WeightMatrix,
    WeightMode,
    WeightParams,
    batch_triangulate,
    triangulate_skeleton,
    wls_solve,
)

from conftest import random_pose, sk3d, tpose_positions, views_from_pose
from test_triangulation import brute_force_wls, random_system

J = JointId

WALK_SCENE = dict(
    fps=30.0,
    rig=RigSpec(count=4, radius=4.5, height=2.2, target=(0.0, 0.0, 1.0)),
    motion=Walk(speed=1.35, duration=60.0, bounds=2.5),
)


@pytest.mark.acceptance("C1 noiseless round-trip exactness")
def test_c1_noiseless_round_trip():
    started = time.perf_counter()
    scene = SceneConfig(seed=19, noise=NoiseModel(pixel_sigma=0.0, score_sigma=0.0), **WALK_SCENE)
    result = simulate(scene)
    rig = {cam.id: cam for cam in result.rig}
    estimated = batch_triangulate(result.detections, rig, WeightParams(), tolerance=1.0 / 60.0)
    report = mpjpe(estimated, result.ground_truth, matching=1.0 / 60.0)
    elapsed = time.perf_counter() - started

    assert report.matched_frames == len(result.ground_truth) == 1800
    assert set(report.per_joint) == set(JOINT_ORDER)
    for joint, stats in report.per_joint.items():
        assert stats.frames == 1800
        assert stats.max_mm < 1e-3, f"{joint.value}: worst error {stats.max_mm} mm"
    assert elapsed < 30.0, f"round trip took {elapsed:.1f} s"


def grid_refine(ms: np.ndarray, pixels: np.ndarray, center: np.ndarray, *, half=0.15, n=21, iters=4) -> np.ndarray:
    """Dense grid search over the reprojection objective, refined 4 times."""
    x0 = np.asarray(center, float)
    for _ in range(iters):
        lin = np.linspace(-half, half, n)
        gx, gy, gz = np.meshgrid(lin, lin, lin, indexing="ij")
        pts = x0 + np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
        h = np.einsum("cij,nj->cni", ms[:, :, :3], pts) + ms[:, None, :, 3]
        uv = h[..., :2] / h[..., 2:3]
        cost = ((uv - pixels[:, None, :]) ** 2).sum(axis=(0, 2))
        x0 = pts[int(np.argmin(cost))]
        half = 2.0 * half / (n - 1) * 1.5
    return x0


@pytest.mark.acceptance("C2 noise-scaling sanity vs Monte Carlo oracle")
def test_c2_noise_scaling_against_grid_oracle():
    started = time.perf_counter()
    scene = SceneConfig(seed=20, noise=NoiseModel(pixel_sigma=2.0, score_clean=0.9, score_sigma=0.0), **WALK_SCENE)
    result = simulate(scene)
    rig = {cam.id: cam for cam in result.rig}
    sample_idx = list(range(0, 1800, 36))
    assert len(sample_idx) == 50
    sampled = {c: [views[i] for i in sample_idx] for c, views in result.detections.items()}
    truth = [result.ground_truth[i] for i in sample_idx]

    estimated = batch_triangulate(sampled, rig, WeightParams(weight_mode=WeightMode.ALL), tolerance=1.0 / 60.0)
    pipeline = mpjpe(estimated, truth, matching=1.0 / 60.0)

    oracle_frames = []
    for i in sample_idx:
        gt = result.ground_truth[i]
        joints = {}
        for joint in JOINT_ORDER:
            ms, px = [], []
            for cam in result.rig:
                det = result.detections[cam.id][i].joints.get(joint)
                if det is not None and det.score >= 0.4:
                    ms.append(cam.projection.m)
                    px.append([det.u, det.v])
            if len(ms) < 2:
                continue
            x = grid_refine(np.stack(ms), np.array(px), gt.joints[joint])
            joints[joint] = JointEstimate(position=x, residual=0.0, cameras_used=len(ms))
        oracle_frames.append(Skeleton3D(timestamp=gt.timestamp, joints=joints))
    oracle = mpjpe(oracle_frames, truth, matching=1.0 / 60.0)
    elapsed = time.perf_counter() - started

    ratio = pipeline.overall_mm / oracle.overall_mm
    assert 0.8 <= ratio <= 1.2, f"pipeline {pipeline.overall_mm:.2f} mm vs oracle {oracle.overall_mm:.2f} mm"
    assert elapsed < 300.0, f"criterion took {elapsed:.1f} s"


@pytest.mark.acceptance("C3 weighting ablation ordering")
def test_c3_ablation_ordering():
    started = time.perf_counter()
    near = place_cameras_on_circle(7, 4.5, 2.2, (0.0, 0.0, 1.0))
    # Eighth camera far beyond the distance band and sighting almost along
    # the T-pose arm axis, so distance and orthogonality both demote it.
    far = Camera(
        id=7,
        intrinsics=DEFAULT_INTRINSICS,
        extrinsics=look_at_extrinsics([0.0, -12.0, 1.5], [0.0, 0.0, 1.0]),
    )
    rig = near + [far]
    occlusion = OcclusionSpec(
        camera=0,
        joints=frozenset({J.RIGHT_SHOULDER, J.RIGHT_ELBOW, J.RIGHT_WRIST}),
        interval=(0.0, 100.0),
        mode=Corrupt(offset_px=300.0, score=0.35),
    )
    scene = SceneConfig(
        seed=41,
        fps=30.0,
        rig=RigSpec(count=8, radius=4.5, height=2.2),
        motion=TPose(duration=5.0),
        noise=NoiseModel(pixel_sigma=2.0, score_clean=0.9, score_sigma=0.03),
        occlusions=(occlusion,),
    )
    report = ablation_report(scene, rig, [WeightMode.UNIFORM, WeightMode.SCORE_ONLY, WeightMode.ALL])
    uniform = report.overall(WeightMode.UNIFORM)
    score = report.overall(WeightMode.SCORE_ONLY)
    all_w = report.overall(WeightMode.ALL)
    elapsed = time.perf_counter() - started

    assert all_w <= score, f"all {all_w:.2f} mm vs score {score:.2f} mm"
    assert score <= 0.5 * uniform, f"score {score:.2f} mm vs uniform {uniform:.2f} mm"
    assert elapsed < 60.0, f"criterion took {elapsed:.1f} s"


@pytest.mark.acceptance("C4 triangulation tick cost under 1 ms")
def test_c4_tick_cost(rig8):
    pose = tpose_positions(elbow_flexion=0.3, knee_flexion=0.2)
    views = views_from_pose(pose, rig8)
    rig = {cam.id: cam for cam in rig8}
    prior = sk3d(pose)
    params = WeightParams(weight_mode=WeightMode.ALL)
    for _ in range(100):  # warm-up
        triangulate_skeleton(views, rig, params, prior)
    iterations = 10_000
    started = time.perf_counter()
    for _ in range(iterations):
        triangulate_skeleton(views, rig, params, prior)
    mean_cost = (time.perf_counter() - started) / iterations
    assert mean_cost < 1e-3, f"mean solve cost {mean_cost * 1e3:.3f} ms"


@pytest.mark.acceptance("C5 fusion loop rate and freshness")
def test_c5_fusion_rate(rig4):
    pose = tpose_positions(elbow_flexion=0.3, knee_flexion=0.2)
    base_views = views_from_pose(pose, rig4)
    # Four free-running 30 Hz producers with staggered phases over 10 s.
    streams = {
        cam.id: [
            Skeleton2D(camera=cam.id, timestamp=idx / 120.0 + n / 30.0, joints=base_views[cam.id].joints)
            for n in range(300)
        ]
        for idx, cam in enumerate(rig4)
    }
    horizon = 0.5
    loop = FusionLoop(rig4, FusionConfig(tick_rate=100.0, staleness_horizon=horizon))
    outputs = list(replay(loop, streams))
    emitted = [o for o in outputs if o.skeleton.timestamp <= 10.0]
    assert 900 <= len(emitted) <= 1100, f"{len(emitted)} emissions over 10 simulated seconds"
    times = [o.skeleton.timestamp for o in outputs]
    assert all(b > a for a, b in zip(times, times[1:]))
    for output in outputs:
        for record in output.latency:
            capture_age = record.capture_to_ingest + record.ingest_to_output
            assert capture_age <= horizon + 0.01


@pytest.mark.acceptance("C6 WLS matches brute-force oracle")
def test_c6_wls_oracle_equivalence():
    rng = np.random.default_rng(1234)
    checked = 0
    for _ in range(1000):
        system, _ = random_system(rng)
        k = len(system.camera_order)
        weights = rng.uniform(0.05, 1.0, k)
        matrix = WeightMatrix.from_camera_weights(weights)
        x, _ = wls_solve(system, matrix)
        expected = brute_force_wls(system.a, system.b, matrix.diag)
        assert np.linalg.norm(x - expected) <= 1e-9 * max(1.0, np.linalg.norm(expected))

        # Zero-weight equivalence: a zeroed camera behaves as if deleted.
        drop = int(rng.integers(0, k))
        if k > 2:
            zeroed = weights.copy()
            zeroed[drop] = 0.0
            x_zero, _ = wls_solve(system, WeightMatrix.from_camera_weights(zeroed))
            keep_rows = np.ones(2 * k, dtype=bool)
            keep_rows[2 * drop : 2 * drop + 2] = False
            reduced = wls_solve(
                type(system)(a=system.a[keep_rows], b=system.b[keep_rows], camera_order=[c for i, c in enumerate(system.camera_order) if i != drop]),
                WeightMatrix.from_camera_weights(np.delete(weights, drop)),
            )[0]
            assert np.linalg.norm(x_zero - reduced) <= 1e-12 * max(1.0, np.linalg.norm(reduced))

        # Weight-scale invariance.
        lam = float(rng.uniform(1e-3, 1e3))
        x_scaled, _ = wls_solve(system, WeightMatrix.from_camera_weights(lam * weights))
        assert np.linalg.norm(x_scaled - x) <= 1e-12 * max(1.0, np.linalg.norm(x))
        checked += 1
    assert checked == 1000


@pytest.mark.acceptance("C7 segment frame suite over random poses")
def test_c7_segment_frame_suite():
    rng = np.random.default_rng(777)
    eye = np.eye(3)
    for _ in range(10_000):
        pose = random_pose(rng)
        frames = segment_frames_from_positions(pose)
        assert len(frames) == 10
        rots = np.stack([frame.rotation for frame in frames.values()])
        assert np.abs(np.einsum("sij,skj->sik", rots, rots) - eye).max() < 1e-9
        assert np.abs(np.linalg.det(rots) - 1.0).max() < 1e-9

        q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        if np.linalg.det(q) < 0:
            q[:, 0] = -q[:, 0]
        shift = rng.normal(scale=3.0, size=3)
        moved = segment_frames_from_positions({j: q @ p + shift for j, p in pose.items()})
        scale = float(rng.uniform(0.2, 5.0))
        center = rng.normal(size=3)
        scaled = segment_frames_from_positions({j: center + scale * (p - center) for j, p in pose.items()})
        for seg, frame in frames.items():
            assert np.abs(moved[seg].rotation - q @ frame.rotation).max() < 1e-9
            assert np.abs(moved[seg].origin - (q @ frame.origin + shift)).max() < 1e-9
            assert np.abs(scaled[seg].rotation - frame.rotation).max() < 1e-9

    # Degenerate inputs raise the declared error.
    straight_arm = tpose_positions(elbow_flexion=0.0, knee_flexion=0.3)
    with pytest.raises(DegenerateGeometryError):
        segment_frames_from_positions(straight_arm)
    straight_leg = tpose_positions(elbow_flexion=0.3, knee_flexion=0.0)
    with pytest.raises(DegenerateGeometryError):
        segment_frames_from_positions(straight_leg)


@pytest.mark.acceptance("C8 MPJPE unit vectors")
def test_c8_mpjpe_unit_vectors():
    pose = tpose_positions(elbow_flexion=0.3, knee_flexion=0.2)
    displaced = dict(pose)
    displaced[J.NECK] = pose[J.NECK] + np.array([0.003, 0.004, 0.0])
    report = mpjpe([sk3d(displaced)], [_gt(pose)], matching=0.01)
    assert report.per_joint[J.NECK].mean_mm == pytest.approx(5.0, abs=1e-9)
    assert report.per_joint[J.NECK].std_mm == 0.0

    # Two frames with 10 mm and 20 mm errors: mean 15, population std 5.
    est0, est1 = dict(pose), dict(pose)
    est0[J.NECK] = pose[J.NECK] + np.array([0.010, 0.0, 0.0])
    est1[J.NECK] = pose[J.NECK] + np.array([0.0, 0.020, 0.0])
    report = mpjpe(
        [sk3d(est0, t=0.0), sk3d(est1, t=1.0)],
        [_gt(pose, 0.0), _gt(pose, 1.0)],
        matching=0.01,
    )
    assert report.per_joint[J.NECK].mean_mm == pytest.approx(15.0, abs=1e-9)
    assert report.per_joint[J.NECK].std_mm == pytest.approx(5.0, abs=1e-9)
    hand_mean = (10.0 + 20.0) / 2.0
    hand_std = math.sqrt(((10.0 - hand_mean) ** 2 + (20.0 - hand_mean) ** 2) / 2.0)
    assert report.per_joint[J.NECK].std_mm == pytest.approx(hand_std, abs=1e-12)


def _gt(pose, t=0.0):
    from mcpose.simulator import GroundTruthFrame

    return GroundTruthFrame(timestamp=t, joints=pose)


@pytest.mark.acceptance("C9 command-line determinism")
def test_c9_cli_determinism(tmp_path):
    scene = {
        "seed": 99,
        "fps": 30.0,
        "rig": {"count": 4, "radius": 4.5, "height": 2.2, "target": [0, 0, 1.0]},
        "motion": {"type": "walk", "speed": 1.35, "duration": 2.0, "bounds": 2.0},
        "noise": {"pixel_sigma": 1.5, "score_clean": 0.9, "score_sigma": 0.03},
    }
    scene_path = tmp_path / "scene.json"
    scene_path.write_text(json.dumps(scene))

    missing, mismatch = [], []
    runs = []
    for name in ("run_a", "run_b"):
        base = tmp_path / name
        sim, report = base / "sim", base / "report"
        est = base / "estimate.jsonl"
        assert main(["simulate", "--scene", str(scene_path), "--out", str(sim)]) == 0
        streams = sorted(str(p) for p in sim.glob("detections_cam*.jsonl"))
        assert main(["triangulate", "--rig", str(sim / "rig.json"), "--streams", *streams, "--out", str(est)]) == 0
        assert (
            main(["evaluate", "--estimate", str(est), "--truth", str(sim / "ground_truth.jsonl"), "--out", str(report)])
            == 0
        )
        runs.append(base)

    files = sorted(p.relative_to(runs[0]) for p in runs[0].rglob("*") if p.is_file())
    assert files, "first run produced no artifacts"
    for rel in files:
        a, b = runs[0] / rel, runs[1] / rel
        if not b.exists():
            missing.append(rel)
        elif not filecmp.cmp(a, b, shallow=False):
            mismatch.append(rel)
    assert not missing, f"second run missing artifacts: {missing}"
    assert not mismatch, f"artifacts differ between reruns: {mismatch}"
