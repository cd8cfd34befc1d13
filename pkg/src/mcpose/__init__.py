"""Markerless multi-camera 3D human pose triangulation.

Reconstructs a 14-joint skeleton from per-camera 2D joint detections by
weighted least squares, with a deterministic scene simulator, body
segment frames, position-error evaluation, and a fixed-rate fusion loop.
"""

from .errors import (
    AllWeightsZeroError,
    DegenerateDepthError,
    DegenerateGeometryError,
    EmptyInputError,
    InsufficientCamerasError,
    InsufficientViewsError,
    InvariantViolationError,
    McPoseError,
    MissingJointError,
    NoMatchesError,
    RankDeficientError,
)
from .fusion import FusionConfig, FusionLoop, FusionOutput, LatencyRecord, ViewBuffer, follow, replay
from .geometry import (
    Camera,
    CameraExtrinsics,
    CameraIntrinsics,
    ProjectionMatrix,
    load_rig,
    look_at_extrinsics,
    optical_axis,
    project,
    projection_matrix,
    save_rig,
)
from .metrics import LatencyReport, MpjpeReport, ablation_report, latency_report, mpjpe
from .simulator import (
    BodyDimensions,
    Corrupt,
    Drop,
    GroundTruthFrame,
    NoiseModel,
    OcclusionSpec,
    RigSpec,
    SceneConfig,
    TPose,
    Walk,
    generate_ground_truth,
    place_cameras_on_circle,
    render_detections,
    simulate,
)
from .skeleton import (
    Detection2D,
    JointEstimate,
    JointId,
    SegmentFrame,
    SegmentId,
    Skeleton2D,
    Skeleton3D,
    compute_segment_frames,
    neck_midpoint,
    segment_endpoints,
    segment_plane_angle,
)
from .triangulation import (
    DltSystem,
    WeightMatrix,
    WeightMode,
    WeightParams,
    batch_triangulate,
    build_dlt_system,
    combine_weights,
    distance_weight,
    orthogonality_weight,
    score_weight,
    triangulate_skeleton,
    wls_solve,
)

__version__ = "0.1.0"
