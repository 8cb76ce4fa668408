"""Pinhole camera geometry: intrinsics, poses, and ray/plane registration.

Conventions used throughout the library:

* World frame: right-handed, Z up, ground plane at Z = 0.
* Camera frame: X right, Y down (image rows grow downward), Z forward along
  the optical axis. A camera looking straight down therefore has rotation
  ``diag(1, -1, -1)`` (world -> camera).
* ``Pose`` stores the world -> camera map ``x_cam = R @ x_world + t``; the
  camera center in world coordinates is ``-R.T @ t``.
* Pixel coordinates are ``(x, y) = (column, row)`` with integer values at
  pixel centers; the principal point defaults to ``resolution / 2``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .exceptions import DegenerateGeometry, PointBehindCamera, RayParallelToPlane
from .rasters import bilinear_sample

__all__ = [
    "CameraModel",
    "Pose",
    "FocalPlane",
    "ArrayRig",
    "focal_from_fov",
    "fov_from_focal",
    "pixel_to_ground",
    "ground_to_pixel",
    "project_points",
    "reference_grid_points",
    "undistort",
    "undistort_points",
    "distort_points",
    "save_rig",
    "load_rig",
]

# Tolerance of the fov/focal consistency invariant (relative).
_FOV_TOL = 1e-6
_ORTHO_TOL = 1e-9


def _short_side(resolution) -> float:
    if np.ndim(resolution) == 0:
        return float(resolution)
    return float(min(resolution))


def focal_from_fov(fov_deg: float, resolution) -> float:
    """Focal length in pixels for a given field of view over the shorter image side."""
    return float(_short_side(resolution) / 2.0 / np.tan(np.radians(fov_deg) / 2.0))


def fov_from_focal(focal_px: float, resolution) -> float:
    """Field of view in degrees spanned by the shorter image side."""
    return float(np.degrees(2.0 * np.arctan(_short_side(resolution) / 2.0 / focal_px)))


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics with an optional 2-coefficient radial model.

    The radial coefficients define the correction polynomial applied to
    distorted normalized coordinates:
    ``undistorted = distorted * (1 + k1*r**2 + k2*r**4)`` with
    ``r = |distorted|``. Zero coefficients mean an ideal pinhole.
    """

    focal_length_px: float
    resolution: tuple[int, int]  # (width, height)
    principal_point: tuple[float, float] = None  # type: ignore[assignment]
    fov_deg: float = None  # type: ignore[assignment]
    radial_distortion: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        w, h = (int(self.resolution[0]), int(self.resolution[1]))
        if w <= 0 or h <= 0:
            raise ValueError(f"resolution must be positive, got {self.resolution}")
        object.__setattr__(self, "resolution", (w, h))
        if self.focal_length_px <= 0:
            raise ValueError(f"focal_length_px must be > 0, got {self.focal_length_px}")
        if self.principal_point is None:
            object.__setattr__(self, "principal_point", (w / 2.0, h / 2.0))
        else:
            px, py = self.principal_point
            object.__setattr__(self, "principal_point", (float(px), float(py)))
        implied = fov_from_focal(self.focal_length_px, self.resolution)
        if self.fov_deg is None:
            object.__setattr__(self, "fov_deg", implied)
        elif abs(self.fov_deg - implied) > _FOV_TOL * max(1.0, abs(implied)):
            raise ValueError(
                f"fov_deg {self.fov_deg} inconsistent with focal {self.focal_length_px} "
                f"at resolution {self.resolution} (implied {implied})"
            )
        k = self.radial_distortion
        object.__setattr__(self, "radial_distortion", (float(k[0]), float(k[1])))

    @classmethod
    def from_fov(
        cls,
        fov_deg: float,
        resolution: Sequence[int],
        radial_distortion: Sequence[float] = (0.0, 0.0),
    ) -> "CameraModel":
        """Build a model from a field of view, deriving the focal length."""
        return cls(
            focal_length_px=focal_from_fov(fov_deg, resolution),
            resolution=(int(resolution[0]), int(resolution[1])),
            radial_distortion=tuple(radial_distortion),
        )

    @property
    def width(self) -> int:
        return self.resolution[0]

    @property
    def height(self) -> int:
        return self.resolution[1]

    @property
    def has_distortion(self) -> bool:
        return any(k != 0.0 for k in self.radial_distortion)


@dataclass(frozen=True)
class Pose:
    """World placement of a camera as the world -> camera rigid map."""

    rotation: np.ndarray  # (3, 3), world -> camera
    translation: np.ndarray  # (3,), x_cam = R @ x_world + t

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if not np.allclose(R.T @ R, np.eye(3), atol=_ORTHO_TOL):
            raise ValueError("rotation is not orthonormal within 1e-9")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def nadir(cls, center: Sequence[float]) -> "Pose":
        """Camera at ``center`` looking straight down, image x along world +X."""
        R = np.diag([1.0, -1.0, -1.0])
        c = np.asarray(center, dtype=float).reshape(3)
        return cls(rotation=R, translation=-R @ c)

    @property
    def camera_center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    @property
    def optical_axis(self) -> np.ndarray:
        """Viewing direction (camera +Z) expressed in world coordinates."""
        return self.rotation[2, :].copy()


@dataclass(frozen=True)
class FocalPlane:
    """Horizontal plane onto which all views are registered.

    ``extent`` is the axis-aligned rectangle ``(xmin, xmax, ymin, ymax)`` in
    world XY over which the plane is defined; rays landing outside it do not
    contribute to an integral. ``resolution`` is the pixel size of the
    integral raster rendered on this plane.
    """

    height_m: float
    extent: tuple[float, float, float, float]
    resolution: tuple[int, int]  # (width, height)

    def __post_init__(self):
        xmin, xmax, ymin, ymax = (float(v) for v in self.extent)
        if not (xmax > xmin and ymax > ymin):
            raise ValueError(f"extent must have positive area, got {self.extent}")
        w, h = (int(self.resolution[0]), int(self.resolution[1]))
        if w <= 0 or h <= 0:
            raise ValueError(f"resolution must be positive, got {self.resolution}")
        object.__setattr__(self, "height_m", float(self.height_m))
        object.__setattr__(self, "extent", (xmin, xmax, ymin, ymax))
        object.__setattr__(self, "resolution", (w, h))

    def contains(self, xy: np.ndarray) -> np.ndarray:
        """Boolean mask of points (..., 2) inside the extent."""
        xy = np.asarray(xy, dtype=float)
        xmin, xmax, ymin, ymax = self.extent
        return (
            (xy[..., 0] >= xmin)
            & (xy[..., 0] <= xmax)
            & (xy[..., 1] >= ymin)
            & (xy[..., 1] <= ymax)
        )


@dataclass(frozen=True)
class ArrayRig:
    """Ordered collection of cameras forming a 1D synthetic aperture.

    The reference (center) camera index is ``count // 2``; integrals are
    rendered from its perspective.
    """

    cameras: tuple[tuple[CameraModel, Pose], ...]
    baseline_m: float = 0.0
    _DOWN = np.array([0.0, 0.0, -1.0])

    def __post_init__(self):
        cams = tuple((c, p) for c, p in self.cameras)
        if len(cams) < 1:
            raise ValueError("rig needs at least one camera")
        for _, pose in cams:
            if not np.allclose(pose.optical_axis, self._DOWN, atol=_ORTHO_TOL):
                raise ValueError("all optical axes must be parallel and point downward")
        object.__setattr__(self, "cameras", cams)
        object.__setattr__(self, "baseline_m", float(self.baseline_m))

    @classmethod
    def linear_array(
        cls,
        camera: CameraModel,
        count: int = 10,
        baseline_m: float = 1.0,
        altitude_m: float = 35.0,
        center_xy: Sequence[float] = (0.0, 0.0),
    ) -> "ArrayRig":
        """Equidistant nadir cameras along world X, centered on ``center_xy``."""
        if count < 1:
            raise ValueError("count must be >= 1")
        cx, cy = (float(center_xy[0]), float(center_xy[1]))
        offsets = (np.arange(count) - (count - 1) / 2.0) * baseline_m
        cams = tuple(
            (camera, Pose.nadir((cx + dx, cy, altitude_m))) for dx in offsets
        )
        return cls(cameras=cams, baseline_m=baseline_m)

    @property
    def count(self) -> int:
        return len(self.cameras)

    @property
    def center_index(self) -> int:
        return self.count // 2

    @property
    def reference(self) -> tuple[CameraModel, Pose]:
        return self.cameras[self.center_index]

    @property
    def altitude_m(self) -> float:
        return float(self.cameras[0][1].camera_center[2])

    @property
    def aperture_m(self) -> float:
        """Synthetic aperture length: (count - 1) * baseline for a 1D array."""
        return (self.count - 1) * self.baseline_m

    def subset(self, indices: Sequence[int]) -> "ArrayRig":
        """Rig restricted to ``indices`` (order preserved)."""
        return ArrayRig(
            cameras=tuple(self.cameras[i] for i in indices),
            baseline_m=self.baseline_m,
        )

    def centered_window(self, k: int) -> "ArrayRig":
        """Contiguous sub-array of ``k`` cameras whose center camera is the
        rig's reference camera."""
        c = self.center_index
        lo = c - (k - 1 + 1) // 2  # ceil((k-1)/2)
        return self.subset(range(lo, lo + k))


# ---------------------------------------------------------------------------
# Projection and ray casting
# ---------------------------------------------------------------------------

def pixel_to_ground(
    pixel: np.ndarray,
    camera: CameraModel,
    pose: Pose,
    plane: FocalPlane,
) -> np.ndarray:
    """Intersect the view ray through ``pixel`` with the focal plane.

    Accepts a single pixel ``(2,)`` or a batch ``(..., 2)``; returns world
    points of matching shape ``(..., 3)`` whose Z equals the plane height.

    Raises:
        RayParallelToPlane: the ray direction has no vertical component.
        DegenerateGeometry: the intersection lies at or behind the camera
            (e.g. plane height equal to the camera altitude).
    """
    px = np.asarray(pixel, dtype=float)
    cx, cy = camera.principal_point
    f = camera.focal_length_px
    d_cam = np.stack(
        [
            (px[..., 0] - cx) / f,
            (px[..., 1] - cy) / f,
            np.ones(px.shape[:-1]),
        ],
        axis=-1,
    )
    d_world = d_cam @ pose.rotation  # == (R.T @ d_cam.T).T
    center = pose.camera_center
    dz = d_world[..., 2]
    norm = np.linalg.norm(d_world, axis=-1)
    if np.any(np.abs(dz) < 1e-12 * norm):
        raise RayParallelToPlane("view ray has zero Z component")
    s = (plane.height_m - center[2]) / dz
    if np.any(s <= 1e-12):
        raise DegenerateGeometry(
            "ray/plane intersection at or behind the camera center"
        )
    out = np.empty(px.shape[:-1] + (3,), dtype=float)
    out[..., 0] = center[0] + s * d_world[..., 0]
    out[..., 1] = center[1] + s * d_world[..., 1]
    out[..., 2] = plane.height_m
    return out


def project_points(
    points: np.ndarray,
    camera: CameraModel,
    pose: Pose,
) -> tuple[np.ndarray, np.ndarray]:
    """Project world points into the camera without raising.

    Returns ``(pixels, depths)`` of shapes ``(..., 2)`` and ``(...,)``;
    entries with non-positive depth carry meaningless pixel values and must
    be filtered by the caller.
    """
    pts = np.asarray(points, dtype=float)
    p_cam = pts @ pose.rotation.T + pose.translation
    depth = p_cam[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(depth != 0.0, 1.0 / depth, 0.0)
    cx, cy = camera.principal_point
    f = camera.focal_length_px
    pix = np.empty(pts.shape[:-1] + (2,), dtype=float)
    pix[..., 0] = f * p_cam[..., 0] * inv + cx
    pix[..., 1] = f * p_cam[..., 1] * inv + cy
    return pix, depth


def ground_to_pixel(
    point: np.ndarray,
    camera: CameraModel,
    pose: Pose,
) -> tuple[np.ndarray, np.ndarray]:
    """Pinhole projection of world point(s); returns ``(pixel, depth)``.

    The pixel may land outside the raster; the depth is returned for
    visibility checks. Raises PointBehindCamera when any depth is <= 0.
    """
    pix, depth = project_points(point, camera, pose)
    if np.any(depth <= 0.0):
        raise PointBehindCamera("point has non-positive depth in camera frame")
    return pix, depth


def reference_grid_points(rig: ArrayRig, plane: FocalPlane) -> np.ndarray:
    """World points of every integral-grid pixel, via the reference camera.

    Integral pixel (j, i) corresponds to reference-camera pixel coordinates
    scaled center-to-center (identity when the plane resolution equals the
    camera resolution); each is cast through the reference camera onto the
    plane. Returns shape (H, W, 3).
    """
    wp, hp = plane.resolution
    ref_cam, ref_pose = rig.reference
    jj, ii = np.meshgrid(np.arange(wp), np.arange(hp))
    ref_px = np.stack(
        [
            (jj + 0.5) * (ref_cam.width / wp) - 0.5,
            (ii + 0.5) * (ref_cam.height / hp) - 0.5,
        ],
        axis=-1,
    )
    return pixel_to_ground(ref_px, ref_cam, ref_pose, plane)


# ---------------------------------------------------------------------------
# Radial distortion
# ---------------------------------------------------------------------------

def _normalize(pixels: np.ndarray, camera: CameraModel) -> np.ndarray:
    cx, cy = camera.principal_point
    return (pixels - np.array([cx, cy])) / camera.focal_length_px


def _denormalize(norm: np.ndarray, camera: CameraModel) -> np.ndarray:
    cx, cy = camera.principal_point
    return norm * camera.focal_length_px + np.array([cx, cy])


def undistort_points(pixels: np.ndarray, camera: CameraModel) -> np.ndarray:
    """Map observed (distorted) pixel coordinates to ideal pinhole ones."""
    k1, k2 = camera.radial_distortion
    d = _normalize(np.asarray(pixels, dtype=float), camera)
    r2 = np.sum(d * d, axis=-1, keepdims=True)
    return _denormalize(d * (1.0 + k1 * r2 + k2 * r2 * r2), camera)


def distort_points(
    pixels: np.ndarray,
    camera: CameraModel,
    max_iter: int = 10,
    tol_px: float = 1e-8,
) -> np.ndarray:
    """Map ideal pinhole pixel coordinates to observed (distorted) ones.

    Inverts the radial correction by fixed-point iteration (at most
    ``max_iter`` rounds, stopping below ``tol_px`` movement).
    """
    k1, k2 = camera.radial_distortion
    u = _normalize(np.asarray(pixels, dtype=float), camera)
    d = u.copy()
    tol = tol_px / camera.focal_length_px
    for _ in range(max_iter):
        r2 = np.sum(d * d, axis=-1, keepdims=True)
        d_new = u / (1.0 + k1 * r2 + k2 * r2 * r2)
        if np.max(np.abs(d_new - d)) < tol:
            d = d_new
            break
        d = d_new
    return _denormalize(d, camera)


def undistort(image: np.ndarray, camera: CameraModel) -> np.ndarray:
    """Resample an observed image onto the ideal pinhole grid.

    Zero distortion coefficients return an identical copy. Out-of-source
    samples are filled by edge clamping.
    """
    image = np.asarray(image)
    if image.shape[0] != camera.height or image.shape[1] != camera.width:
        raise ValueError(
            f"image shape {image.shape[:2]} does not match camera resolution "
            f"{(camera.height, camera.width)}"
        )
    if not camera.has_distortion:
        return image.copy()
    ys, xs = np.mgrid[0 : camera.height, 0 : camera.width]
    grid = np.stack([xs, ys], axis=-1).astype(float)
    src = distort_points(grid, camera)
    return bilinear_sample(image.astype(float), src[..., 0], src[..., 1])


# ---------------------------------------------------------------------------
# Rig interchange file
# ---------------------------------------------------------------------------

def save_rig(rig: ArrayRig, path: str | Path) -> None:
    """Write a rig to the JSON interchange format (see rig.schema)."""
    payload = {
        "baseline_m": rig.baseline_m,
        "cameras": [
            {
                "rotation": [float(v) for v in pose.rotation.ravel()],
                "translation": [float(v) for v in pose.translation],
                "focal_px": cam.focal_length_px,
                "principal_point": list(cam.principal_point),
                "resolution": list(cam.resolution),
                "distortion": list(cam.radial_distortion),
            }
            for cam, pose in rig.cameras
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def load_rig(path: str | Path) -> ArrayRig:
    """Read a rig from the JSON interchange format (see rig.schema)."""
    payload = json.loads(Path(path).read_text())
    cams = []
    for entry in payload["cameras"]:
        cam = CameraModel(
            focal_length_px=float(entry["focal_px"]),
            resolution=tuple(entry["resolution"]),
            principal_point=tuple(entry["principal_point"]),
            radial_distortion=tuple(entry.get("distortion", (0.0, 0.0))),
        )
        pose = Pose(
            rotation=np.array(entry["rotation"], dtype=float).reshape(3, 3),
            translation=np.array(entry["translation"], dtype=float),
        )
        cams.append((cam, pose))
    return ArrayRig(cameras=tuple(cams), baseline_m=float(payload.get("baseline_m", 0.0)))
