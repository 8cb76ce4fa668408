"""Through-foliage imaging toolkit.

Integrates a 1D camera array onto the ground plane, flags color anomalies
with an RX detector, and tracks the resulting blobs over time.  Ships a
procedural forest simulator with exact per-pixel ground truth so every
stage can be scored against a known answer.
"""

from .anomaly import (
    CONFIDENCE_GRID,
    AnomalyMask,
    BackgroundStats,
    RxField,
    background_stats,
    optimize_threshold,
    rx_scores,
    threshold_by_confidence,
)
from .exceptions import (
    DegenerateGeometry,
    DensityUnreachable,
    EmptyIntegral,
    EmptyTruth,
    LengthMismatch,
    PointBehindCamera,
    RasterMismatch,
    RayParallelToPlane,
    SingularCovariance,
    ThicketError,
    TooFewSamples,
)
from .geometry import (
    ArrayRig,
    CameraModel,
    FocalPlane,
    Pose,
    distort_points,
    focal_from_fov,
    fov_from_focal,
    ground_to_pixel,
    load_rig,
    pixel_to_ground,
    project_points,
    reference_grid_points,
    save_rig,
    undistort,
    undistort_points,
)
from .integrator import (
    FrameSet,
    ImageIntegrator,
    IntegralImage,
    integrate,
    integrate_video,
)
from .metrics import (
    CovarianceReport,
    PrecisionReport,
    covariance_report,
    eigen_symmetric_3x3,
    evaluate_set,
    format_table,
    load_reports,
    pixel_precision,
    save_reports,
    target_recall,
)
from .simulator import (
    Scene,
    SceneRenderer,
    SceneSpec,
    TargetSpec,
    default_plane,
    default_rig,
    default_scene_spec,
    estimate_occlusion,
    generate_scene,
    load_frames,
    load_manifest,
    load_truth_frame,
    simulate_flight,
)
from .tracker import (
    Blob,
    BlobTracker,
    KalmanState,
    Track,
    associate,
    detect_blobs,
    kalman_predict,
    kalman_update,
    load_tracks_csv,
    save_tracks_csv,
    track_sequence,
)

__version__ = "0.1.0"

__all__ = [
    "ThicketError", "RayParallelToPlane", "DegenerateGeometry",
    "PointBehindCamera", "EmptyIntegral", "LengthMismatch", "TooFewSamples",
    "SingularCovariance", "EmptyTruth", "RasterMismatch", "DensityUnreachable",
    "CameraModel", "Pose", "FocalPlane", "ArrayRig",
    "focal_from_fov", "fov_from_focal", "pixel_to_ground", "project_points",
    "ground_to_pixel", "reference_grid_points", "undistort_points",
    "distort_points", "undistort", "save_rig", "load_rig",
    "FrameSet", "IntegralImage", "ImageIntegrator", "integrate",
    "integrate_video",
    "BackgroundStats", "RxField", "AnomalyMask", "CONFIDENCE_GRID",
    "background_stats", "rx_scores", "threshold_by_confidence",
    "optimize_threshold",
    "Blob", "KalmanState", "Track", "BlobTracker", "detect_blobs",
    "associate", "kalman_predict", "kalman_update", "track_sequence",
    "save_tracks_csv", "load_tracks_csv",
    "SceneSpec", "Scene", "TargetSpec", "SceneRenderer", "generate_scene",
    "estimate_occlusion", "default_rig", "default_plane", "default_scene_spec",
    "simulate_flight", "load_manifest", "load_frames", "load_truth_frame",
    "PrecisionReport", "CovarianceReport", "pixel_precision", "target_recall",
    "evaluate_set", "covariance_report", "eigen_symmetric_3x3", "format_table",
    "save_reports", "load_reports",
    "__version__",
]
