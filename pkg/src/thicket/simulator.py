"""Procedural occlusion-scene generator and renderer with exact ground truth.

A scene is a flat textured ground plane at world Z = 0, a set of opaque
colored disks floating in a horizontal canopy layer above it, and moving
disk targets on the ground. Disk placement is calibrated so that a chosen
fraction D of vertical rays from above hits an occluder before the ground.
Because the occluders are explicit geometry, their images are consistent
across cameras (the same disk hides the same ground region from every
view, shifted by parallax), which is exactly the structure that makes
single-view detection hard and multi-view integration effective.

Ground truth is exact by construction: target membership is a ground-space
point-in-disk test shared between the renderer and the truth rasterizer,
and occluders can simply be toggled off.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import DensityUnreachable
from .geometry import (
    ArrayRig,
    CameraModel,
    FocalPlane,
    Pose,
    pixel_to_ground,
    project_points,
    reference_grid_points,
    save_rig,
)
from .rasters import save_png

__all__ = [
    "TargetSpec",
    "OccluderColorGroup",
    "SceneSpec",
    "Scene",
    "GroundTruthFrame",
    "SceneRenderer",
    "DEFAULT_OCCLUDER_COLORS",
    "TARGET_PALETTE",
    "generate_scene",
    "estimate_occlusion",
    "render_view",
    "render_ground_truth",
    "render_reference",
    "common_footprint",
    "default_plane",
    "default_rig",
    "default_scene_spec",
    "simulate_flight",
    "load_manifest",
    "load_truth_frame",
    "load_frames",
    "manifest_rig",
    "manifest_plane",
    "manifest_spec",
    "union_footprint",
    "frame_name",
]


@dataclass(frozen=True)
class TargetSpec:
    """A colored disk target on the ground following waypoints at fixed speed."""

    color: tuple[float, float, float]
    radius_m: float = 0.35
    waypoints: tuple[tuple[float, float], ...] = ((0.0, 0.0),)
    speed_mps: float = 0.0

    def __post_init__(self):
        if self.radius_m <= 0:
            raise ValueError("target radius must be > 0")
        wp = tuple((float(x), float(y)) for x, y in self.waypoints)
        if not wp:
            raise ValueError("target needs at least one waypoint")
        object.__setattr__(self, "waypoints", wp)
        object.__setattr__(self, "color", tuple(float(c) for c in self.color))

    def position(self, time_s: float) -> np.ndarray:
        """Ground position at ``time_s`` (piecewise-linear, clamped at the end)."""
        wp = np.asarray(self.waypoints, dtype=float)
        if len(wp) == 1 or self.speed_mps <= 0:
            return wp[0].copy()
        seg = np.diff(wp, axis=0)
        seg_len = np.linalg.norm(seg, axis=1)
        cum = np.concatenate([[0.0], np.cumsum(seg_len)])
        s = min(max(self.speed_mps * time_s, 0.0), cum[-1])
        i = min(int(np.searchsorted(cum, s, side="right")) - 1, len(seg) - 1)
        denom = seg_len[i] if seg_len[i] > 0 else 1.0
        t = (s - cum[i]) / denom
        return wp[i] + t * seg[i]


@dataclass(frozen=True)
class OccluderColorGroup:
    """One component of the occluder color mixture."""

    weight: float
    mean: tuple[float, float, float]
    jitter: tuple[float, float, float]


# Foliage greens and branch browns carry most of the canopy, plus two
# minority accent groups (sun-warmed and sky-lit disks) whose jitter ranges
# reach the default target palette. In single views those disks are
# full-strength clutter; in the integral each shrinks to a 1/N residue.
DEFAULT_OCCLUDER_COLORS: tuple[OccluderColorGroup, ...] = (
    OccluderColorGroup(0.53, (0.13, 0.35, 0.12), (0.04, 0.07, 0.03)),
    OccluderColorGroup(0.41, (0.30, 0.22, 0.12), (0.05, 0.04, 0.03)),
    OccluderColorGroup(0.03, (0.25, 0.38, 0.68), (0.10, 0.10, 0.22)),
    OccluderColorGroup(0.03, (0.52, 0.25, 0.50), (0.28, 0.15, 0.28)),
)

# Default target colors (blue, magenta, orange, white), cycled by factories.
# Blue-carrying colors first: foliage greens and branch browns are both
# blue-poor, so those directions survive dilution best.
TARGET_PALETTE: tuple[tuple[float, float, float], ...] = (
    (0.10, 0.15, 0.88),
    (0.82, 0.12, 0.78),
    (0.92, 0.28, 0.06),
    (0.97, 0.97, 0.97),
)

_MC_RAYS = 100_000
_DISK_CAP = 1_000_000
_PLACEMENT_BATCH = 128


@dataclass(frozen=True)
class SceneSpec:
    """Full parameterization of a procedural scene."""

    extent_m: tuple[float, float, float, float]  # (xmin, xmax, ymin, ymax)
    occluder_density: float = 0.5
    occluder_layer: tuple[float, float] = (18.0, 28.0)
    occluder_radius_m: tuple[float, float] = (0.1, 0.28)
    occluder_colors: tuple[OccluderColorGroup, ...] = DEFAULT_OCCLUDER_COLORS
    targets: tuple[TargetSpec, ...] = ()
    background_base: tuple[float, float, float] = (0.21, 0.17, 0.11)
    background_amp: float = 0.05
    texture_cell_m: float = 0.6
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        xmin, xmax, ymin, ymax = (float(v) for v in self.extent_m)
        if not (xmax > xmin and ymax > ymin):
            raise ValueError("extent must have positive area")
        object.__setattr__(self, "extent_m", (xmin, xmax, ymin, ymax))
        d = float(self.occluder_density)
        if not (0.0 <= d < 1.0):
            raise ValueError(f"occluder density must be in [0, 1), got {d}")
        object.__setattr__(self, "occluder_density", d)
        lo, hi = self.occluder_radius_m
        if lo <= 0 or hi < lo:
            raise ValueError("occluder radius range must be 0 < lo <= hi")
        for t in self.targets:
            for x, y in t.waypoints:
                if not (xmin <= x <= xmax and ymin <= y <= ymax):
                    raise ValueError(f"target waypoint ({x}, {y}) outside extent")
        object.__setattr__(self, "targets", tuple(self.targets))
        object.__setattr__(self, "seed", int(self.seed))


@dataclass(frozen=True)
class Scene:
    """A realized scene: spec plus the placed occluder disks.

    Disks are sorted by height ascending so painter-order drawing (last
    wins) renders the topmost, nearest-to-camera disk on top.
    """

    spec: SceneSpec
    disk_xy: np.ndarray  # (N, 2)
    disk_z: np.ndarray  # (N,)
    disk_r: np.ndarray  # (N,)
    disk_color: np.ndarray  # (N, 3)

    @property
    def n_occluders(self) -> int:
        return int(self.disk_z.size)

    def target_position(self, index: int, time_s: float) -> np.ndarray:
        return self.spec.targets[index].position(time_s)


@dataclass(frozen=True)
class GroundTruthFrame:
    """Target truth at one time.

    ``labels`` is the occlusion-free per-target label raster on the
    integral grid; ``visibility``, when populated, holds one label raster
    per camera of the target pixels actually visible in that view.
    """

    labels: np.ndarray  # (H, W) int32; 0 background, 1..T targets
    centroids_world: np.ndarray  # (T, 2) meters
    centroids_px: np.ndarray  # (T, 2) integral-grid pixels
    visibility: tuple[np.ndarray, ...] = None


# ---------------------------------------------------------------------------
# Ground texture: lattice value noise from a counter-based hash
# ---------------------------------------------------------------------------

_U64 = np.uint64
_C1 = _U64(0x9E3779B97F4A7C15)
_C2 = _U64(0xBF58476D1CE4E5B9)
_C3 = _U64(0x94D049BB133111EB)


def _mix64(v: np.ndarray) -> np.ndarray:
    v = (v + _C1) & _U64(0xFFFFFFFFFFFFFFFF)
    v ^= v >> _U64(30)
    v *= _C2
    v ^= v >> _U64(27)
    v *= _C3
    v ^= v >> _U64(31)
    return v


def _lattice_hash(ix: np.ndarray, iy: np.ndarray, salt: int) -> np.ndarray:
    """64-bit hash of integer lattice coordinates."""
    a = ix.astype(np.int64).view(np.uint64) * _C2
    b = iy.astype(np.int64).view(np.uint64) * _C3
    return _mix64(a ^ (b + _U64(salt)))


def ground_texture(x: np.ndarray, y: np.ndarray, spec: SceneSpec) -> np.ndarray:
    """Deterministic colored value noise at world coordinates.

    Pure function of (x, y, seed): every camera sampling the same ground
    point sees the same color.
    """
    cell = spec.texture_cell_m
    gx = np.asarray(x, dtype=float) / cell
    gy = np.asarray(y, dtype=float) / cell
    ix0 = np.floor(gx).astype(np.int64)
    iy0 = np.floor(gy).astype(np.int64)
    fx = (gx - ix0)[..., None]
    fy = (gy - iy0)[..., None]

    def corner(dx, dy):
        h = _lattice_hash(ix0 + dx, iy0 + dy, spec.seed)
        # Split the 64-bit hash into three 21-bit channel values in [0, 1).
        u = np.stack(
            [
                (h & _U64(0x1FFFFF)).astype(float),
                ((h >> _U64(21)) & _U64(0x1FFFFF)).astype(float),
                ((h >> _U64(42)) & _U64(0x1FFFFF)).astype(float),
            ],
            axis=-1,
        )
        return u / float(0x1FFFFF)

    c00 = corner(0, 0)
    c10 = corner(1, 0)
    c01 = corner(0, 1)
    c11 = corner(1, 1)
    top = c00 * (1.0 - fx) + c10 * fx
    bot = c01 * (1.0 - fx) + c11 * fx
    unit = top * (1.0 - fy) + bot * fy
    base = np.asarray(spec.background_base)
    return np.clip(base + spec.background_amp * (2.0 * unit - 1.0), 0.0, 1.0)


# ---------------------------------------------------------------------------
# Scene generation
# ---------------------------------------------------------------------------

def estimate_occlusion(scene: Scene, n_rays: int, rng: np.random.Generator) -> float:
    """Monte-Carlo fraction of vertical rays blocked before the ground."""
    xmin, xmax, ymin, ymax = scene.spec.extent_m
    rx = rng.uniform(xmin, xmax, n_rays)
    ry = rng.uniform(ymin, ymax, n_rays)
    covered = np.zeros(n_rays, dtype=bool)
    # Chunk over disks to bound memory.
    for start in range(0, scene.n_occluders, 1024):
        sl = slice(start, start + 1024)
        dx = rx[:, None] - scene.disk_xy[sl, 0][None, :]
        dy = ry[:, None] - scene.disk_xy[sl, 1][None, :]
        covered |= np.any(dx * dx + dy * dy <= scene.disk_r[sl][None, :] ** 2, axis=1)
    return float(covered.mean())


def generate_scene(spec: SceneSpec) -> Scene:
    """Place occluder disks until the vertical-ray occlusion fraction hits D.

    Disks are drawn one at a time from seeded streams; after each disk the
    occlusion fraction is re-measured on a fixed set of Monte-Carlo rays
    and placement stops at the first crossing of D. Deterministic per seed.

    Raises:
        DensityUnreachable: the disk-count cap is hit before reaching D.
    """
    ss = np.random.SeedSequence(spec.seed)
    child_place, child_rays = ss.spawn(2)
    rng_place = np.random.default_rng(child_place)
    rng_rays = np.random.default_rng(child_rays)

    xmin, xmax, ymin, ymax = spec.extent_m
    rmin, rmax = spec.occluder_radius_m
    zmin, zmax = spec.occluder_layer
    d_goal = spec.occluder_density

    if d_goal == 0.0:
        empty = np.zeros(0)
        return Scene(spec, np.zeros((0, 2)), empty, empty, np.zeros((0, 3)))

    ray_x = rng_rays.uniform(xmin, xmax, _MC_RAYS)
    ray_y = rng_rays.uniform(ymin, ymax, _MC_RAYS)
    covered = np.zeros(_MC_RAYS, dtype=bool)
    n_cov = 0

    weights = np.array([g.weight for g in spec.occluder_colors], dtype=float)
    weights = weights / weights.sum()
    means = np.array([g.mean for g in spec.occluder_colors], dtype=float)
    jitters = np.array([g.jitter for g in spec.occluder_colors], dtype=float)

    xs, ys, zs, rs, colors = [], [], [], [], []
    done = False
    while not done:
        if len(xs) >= _DISK_CAP:
            raise DensityUnreachable(
                f"occlusion fraction {n_cov / _MC_RAYS:.3f} after {_DISK_CAP} disks, "
                f"target {d_goal}"
            )
        bx = rng_place.uniform(xmin - rmax, xmax + rmax, _PLACEMENT_BATCH)
        by = rng_place.uniform(ymin - rmax, ymax + rmax, _PLACEMENT_BATCH)
        bz = rng_place.uniform(zmin, zmax, _PLACEMENT_BATCH)
        br = rng_place.uniform(rmin, rmax, _PLACEMENT_BATCH)
        groups = rng_place.choice(len(weights), size=_PLACEMENT_BATCH, p=weights)
        jit = rng_place.uniform(-1.0, 1.0, (_PLACEMENT_BATCH, 3))
        bc = np.clip(means[groups] + jit * jitters[groups], 0.0, 1.0)
        for i in range(_PLACEMENT_BATCH):
            xs.append(bx[i])
            ys.append(by[i])
            zs.append(bz[i])
            rs.append(br[i])
            colors.append(bc[i])
            hit = (ray_x - bx[i]) ** 2 + (ray_y - by[i]) ** 2 <= br[i] ** 2
            new = hit & ~covered
            if new.any():
                covered |= new
                n_cov = int(covered.sum())
            if n_cov / _MC_RAYS >= d_goal:
                done = True
                break

    order = np.argsort(np.asarray(zs), kind="stable")
    return Scene(
        spec=spec,
        disk_xy=np.column_stack([np.asarray(xs), np.asarray(ys)])[order],
        disk_z=np.asarray(zs)[order],
        disk_r=np.asarray(rs)[order],
        disk_color=np.asarray(colors)[order],
    )


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def _ground_maps(
    scene: Scene, camera: CameraModel, pose: Pose
) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel ground intersection (float64) and ground texture (float32)."""
    ground = FocalPlane(
        height_m=0.0, extent=(-1e12, 1e12, -1e12, 1e12), resolution=(2, 2)
    )
    jj, ii = np.meshgrid(np.arange(camera.width), np.arange(camera.height))
    px = np.stack([jj, ii], axis=-1).astype(float)
    pts = pixel_to_ground(px, camera, pose, ground)
    xy = pts[..., :2]
    rgb = ground_texture(xy[..., 0], xy[..., 1], scene.spec).astype(np.float32)
    return xy, rgb


def _disk_raster_params(
    centers: np.ndarray, heights: np.ndarray, radii: np.ndarray,
    camera: CameraModel, pose: Pose,
) -> tuple[np.ndarray, np.ndarray]:
    """Projected pixel centers and radii of horizontal disks (nadir camera)."""
    pts = np.column_stack([centers, heights])
    pix, depth = project_points(pts, camera, pose)
    return pix, camera.focal_length_px * radii / depth


def _occluder_layer(
    scene: Scene, camera: CameraModel, pose: Pose
) -> tuple[np.ndarray, np.ndarray]:
    """Painted occluder color layer and its coverage mask."""
    h, w = camera.height, camera.width
    img = np.zeros((h, w, 3), dtype=np.float32)
    mask = np.zeros((h, w), dtype=bool)
    if scene.n_occluders == 0:
        return img, mask
    pix, rad = _disk_raster_params(scene.disk_xy, scene.disk_z, scene.disk_r, camera, pose)
    for k in range(scene.n_occluders):
        u0, v0 = pix[k]
        rho = rad[k]
        c0 = max(int(np.ceil(u0 - rho)) - 1, 0)
        c1 = min(int(np.floor(u0 + rho)) + 2, w)
        r0 = max(int(np.ceil(v0 - rho)) - 1, 0)
        r1 = min(int(np.floor(v0 + rho)) + 2, h)
        if c1 <= c0 or r1 <= r0:
            continue
        uu = np.arange(c0, c1, dtype=float) - u0
        vv = np.arange(r0, r1, dtype=float) - v0
        inside = (uu * uu)[None, :] + (vv * vv)[:, None] <= rho * rho
        img[r0:r1, c0:c1][inside] = scene.disk_color[k].astype(np.float32)
        mask[r0:r1, c0:c1][inside] = True
    return img, mask


def _paint_targets(
    img: np.ndarray,
    labels: np.ndarray,
    ground_xy: np.ndarray,
    scene: Scene,
    camera: CameraModel,
    pose: Pose,
    time_s: float,
) -> None:
    """Ground-space disk test for every target; writes colors and labels.

    The same membership rule produces both rendered pixels and truth
    labels, so truth equals the occluder-free rendering by construction.
    """
    h, w = ground_xy.shape[:2]
    for idx, tgt in enumerate(scene.spec.targets):
        pos = tgt.position(time_s)
        pix, depth = project_points(np.array([pos[0], pos[1], 0.0]), camera, pose)
        rho = camera.focal_length_px * tgt.radius_m / depth
        u0, v0 = pix
        c0 = max(int(np.floor(u0 - rho)) - 2, 0)
        c1 = min(int(np.ceil(u0 + rho)) + 3, w)
        r0 = max(int(np.floor(v0 - rho)) - 2, 0)
        r1 = min(int(np.ceil(v0 + rho)) + 3, h)
        if c1 <= c0 or r1 <= r0:
            continue
        patch = ground_xy[r0:r1, c0:c1]
        dx = patch[..., 0] - pos[0]
        dy = patch[..., 1] - pos[1]
        inside = dx * dx + dy * dy <= tgt.radius_m**2
        if img is not None:
            img[r0:r1, c0:c1][inside] = np.asarray(tgt.color, dtype=img.dtype)
        if labels is not None:
            labels[r0:r1, c0:c1][inside] = idx + 1


class SceneRenderer:
    """Renderer with cached static layers for a fixed scene and rig.

    The ground texture and the occluder layer of each camera are static;
    only the targets move. A frame render is therefore a copy of the
    ground layer, a few small target disks, and one masked overlay of the
    occluder layer.
    """

    def __init__(self, scene: Scene, rig: ArrayRig, plane: FocalPlane = None):
        self.scene = scene
        self.rig = rig
        self.plane = plane if plane is not None else default_plane(rig)
        self._cam_cache: dict[int, tuple] = {}
        self._ref_cache = None

    def _camera_layers(self, cam_index: int):
        if cam_index not in self._cam_cache:
            cam, pose = self.rig.cameras[cam_index]
            ground_xy, ground_rgb = _ground_maps(self.scene, cam, pose)
            occ_rgb, occ_mask = _occluder_layer(self.scene, cam, pose)
            self._cam_cache[cam_index] = (ground_xy, ground_rgb, occ_rgb, occ_mask)
        return self._cam_cache[cam_index]

    def _reference_grid(self):
        if self._ref_cache is None:
            pts = reference_grid_points(self.rig, self.plane)
            xy = pts[..., :2]
            rgb = ground_texture(xy[..., 0], xy[..., 1], self.scene.spec).astype(
                np.float32
            )
            self._ref_cache = (xy, rgb)
        return self._ref_cache

    def render(self, cam_index: int, time_s: float) -> np.ndarray:
        """One camera view at one time, float RGB in [0, 1]."""
        cam, pose = self.rig.cameras[cam_index]
        ground_xy, ground_rgb, occ_rgb, occ_mask = self._camera_layers(cam_index)
        img = ground_rgb.copy()
        _paint_targets(img, None, ground_xy, self.scene, cam, pose, time_s)
        img[occ_mask] = occ_rgb[occ_mask]
        out = img.astype(np.float32)
        std = self.scene.spec.noise_std
        if std > 0:
            rng = np.random.default_rng(
                np.random.SeedSequence(
                    [self.scene.spec.seed, 0xBEEF, cam_index, int(round(time_s * 1e6))]
                )
            )
            noisy = out + rng.normal(0.0, std, out.shape)
            out = np.clip(noisy, 0.0, 1.0).astype(np.float32)
        return out

    def visibility(self, cam_index: int, time_s: float) -> np.ndarray:
        """Labels of target pixels actually visible in this camera view."""
        cam, pose = self.rig.cameras[cam_index]
        ground_xy, _, _, occ_mask = self._camera_layers(cam_index)
        labels = np.zeros(ground_xy.shape[:2], dtype=np.int32)
        _paint_targets(None, labels, ground_xy, self.scene, cam, pose, time_s)
        labels[occ_mask] = 0
        return labels

    def reference(self, time_s: float) -> np.ndarray:
        """Occluder-free rendering on the integral grid (the truth image)."""
        xy, rgb = self._reference_grid()
        img = rgb.copy()
        # Reuse the painter with a virtual camera scaled to the plane grid.
        vcam, vpose = self._virtual_reference()
        _paint_targets(img, None, xy, self.scene, vcam, vpose, time_s)
        return img.astype(float)

    def truth(self, time_s: float, with_visibility: bool = False) -> GroundTruthFrame:
        """Per-target labels and centroids on the integral grid."""
        xy, _ = self._reference_grid()
        labels = np.zeros(xy.shape[:2], dtype=np.int32)
        vcam, vpose = self._virtual_reference()
        _paint_targets(None, labels, xy, self.scene, vcam, vpose, time_s)
        n = len(self.scene.spec.targets)
        cw = np.zeros((n, 2))
        cp = np.zeros((n, 2))
        for i, tgt in enumerate(self.scene.spec.targets):
            pos = tgt.position(time_s)
            cw[i] = pos
            ref_px, _ = project_points(np.array([pos[0], pos[1], 0.0]), vcam, vpose)
            cp[i] = ref_px
        vis = None
        if with_visibility:
            vis = tuple(self.visibility(k, time_s) for k in range(self.rig.count))
        return GroundTruthFrame(
            labels=labels, centroids_world=cw, centroids_px=cp, visibility=vis
        )

    def _virtual_reference(self) -> tuple[CameraModel, Pose]:
        """Reference camera rescaled so its full image is the integral grid."""
        ref_cam, ref_pose = self.rig.reference
        wp, hp = self.plane.resolution
        sx = wp / ref_cam.width
        sy = hp / ref_cam.height
        if abs(sx - sy) > 1e-12:
            raise ValueError(
                "integral grid must scale the reference camera isotropically"
            )
        ppx, ppy = ref_cam.principal_point
        vcam = CameraModel(
            focal_length_px=ref_cam.focal_length_px * sx,
            resolution=(wp, hp),
            principal_point=((ppx + 0.5) * sx - 0.5, (ppy + 0.5) * sy - 0.5),
            radial_distortion=ref_cam.radial_distortion,
        )
        return vcam, ref_pose


def render_view(
    scene: Scene, camera: CameraModel, pose: Pose, time_s: float
) -> np.ndarray:
    """Single-shot view render (no caching); see :class:`SceneRenderer`."""
    rig = ArrayRig(cameras=((camera, pose),), baseline_m=0.0)
    return SceneRenderer(scene, rig, _footprint_plane_for(camera, pose)).render(0, time_s)


def render_ground_truth(
    scene: Scene, plane: FocalPlane, rig: ArrayRig, time_s: float
) -> GroundTruthFrame:
    """Occlusion-free target truth on ``plane`` from the rig's reference view."""
    return SceneRenderer(scene, rig, plane).truth(time_s)


def render_reference(
    scene: Scene, plane: FocalPlane, rig: ArrayRig, time_s: float
) -> np.ndarray:
    """Occlusion-free reference image on ``plane`` from the reference view."""
    return SceneRenderer(scene, rig, plane).reference(time_s)


# ---------------------------------------------------------------------------
# Rig/plane factories
# ---------------------------------------------------------------------------

def _footprint_plane_for(camera: CameraModel, pose: Pose) -> FocalPlane:
    rig = ArrayRig(cameras=((camera, pose),), baseline_m=0.0)
    return default_plane(rig)


def common_footprint(rig: ArrayRig) -> tuple[float, float, float, float]:
    """Intersection of all cameras' ground footprints at Z = 0."""
    ground = FocalPlane(
        height_m=0.0, extent=(-1e12, 1e12, -1e12, 1e12), resolution=(2, 2)
    )
    xmin, xmax = -np.inf, np.inf
    ymin, ymax = -np.inf, np.inf
    for cam, pose in rig.cameras:
        corners = np.array(
            [[0.0, 0.0], [cam.width - 1.0, 0.0], [0.0, cam.height - 1.0],
             [cam.width - 1.0, cam.height - 1.0]]
        )
        pts = pixel_to_ground(corners, cam, pose, ground)
        xmin = max(xmin, pts[:, 0].min())
        xmax = min(xmax, pts[:, 0].max())
        ymin = max(ymin, pts[:, 1].min())
        ymax = min(ymax, pts[:, 1].max())
    if not (xmax > xmin and ymax > ymin):
        raise ValueError("cameras share no common ground footprint")
    return (float(xmin), float(xmax), float(ymin), float(ymax))


def union_footprint(rig: ArrayRig) -> tuple[float, float, float, float]:
    """Union of all cameras' ground footprints at Z = 0."""
    ground = FocalPlane(
        height_m=0.0, extent=(-1e12, 1e12, -1e12, 1e12), resolution=(2, 2)
    )
    xmin, xmax = np.inf, -np.inf
    ymin, ymax = np.inf, -np.inf
    for cam, pose in rig.cameras:
        corners = np.array(
            [[0.0, 0.0], [cam.width - 1.0, 0.0], [0.0, cam.height - 1.0],
             [cam.width - 1.0, cam.height - 1.0]]
        )
        pts = pixel_to_ground(corners, cam, pose, ground)
        xmin = min(xmin, pts[:, 0].min())
        xmax = max(xmax, pts[:, 0].max())
        ymin = min(ymin, pts[:, 1].min())
        ymax = max(ymax, pts[:, 1].max())
    return (float(xmin), float(xmax), float(ymin), float(ymax))


def default_plane(rig: ArrayRig, resolution: int = None) -> FocalPlane:
    """Ground plane at Z = 0 cropped to the cameras' common footprint."""
    ref_cam, _ = rig.reference
    if resolution is None:
        res = ref_cam.resolution
    else:
        res = (int(resolution), int(resolution))
    return FocalPlane(height_m=0.0, extent=common_footprint(rig), resolution=res)


def default_rig(
    count: int = 10,
    baseline_m: float = 1.0,
    altitude_m: float = 35.0,
    fov_deg: float = 41.10,
    resolution: int = 1024,
) -> ArrayRig:
    """1D nadir camera array along world X (defaults mirror the CLI's)."""
    cam = CameraModel.from_fov(fov_deg, (resolution, resolution))
    return ArrayRig.linear_array(
        cam, count=count, baseline_m=baseline_m, altitude_m=altitude_m
    )


def default_scene_spec(
    seed: int,
    density: float,
    rig: ArrayRig = None,
    n_targets: int = 2,
    target_radius_m: float = 0.5,
    moving: bool = False,
    target_speed_mps: float = 2.4,
    **overrides,
) -> SceneSpec:
    """Seeded scene with targets placed inside the rig's common footprint.

    Static targets (the default) are dropped at random well-separated spots
    near the center; ``moving=True`` instead puts them on straight
    crossing lanes, one per target, alternating direction.
    """
    if rig is None:
        rig = default_rig()
    xmin, xmax, ymin, ymax = union_footprint(rig)
    margin = 1.0
    extent = (xmin - margin, xmax + margin, ymin - margin, ymax + margin)
    cxmin, cxmax, cymin, cymax = common_footprint(rig)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xA11CE]))
    targets = []
    if moving:
        lane_half = min(6.0, (cxmax - cxmin) / 2 - 2.0)
        n_lanes = max(n_targets, 1)
        span = (cymax - cymin) - 4.0
        for i in range(n_targets):
            lane_y = cymin + 2.0 + span * (i + 0.5) / n_lanes
            x0, x1 = (-lane_half, lane_half) if i % 2 == 0 else (lane_half, -lane_half)
            targets.append(
                TargetSpec(
                    color=TARGET_PALETTE[i % len(TARGET_PALETTE)],
                    radius_m=target_radius_m,
                    waypoints=((x0, lane_y), (x1, lane_y)),
                    speed_mps=target_speed_mps,
                )
            )
    else:
        placed = []
        inner = 2.0
        tries = 0
        while len(placed) < n_targets and tries < 1000:
            tries += 1
            x = rng.uniform(cxmin + inner, cxmax - inner)
            y = rng.uniform(cymin + inner, cymax - inner)
            if all((x - px) ** 2 + (y - py) ** 2 >= 3.0**2 for px, py in placed):
                placed.append((x, y))
        for i, (x, y) in enumerate(placed):
            targets.append(
                TargetSpec(
                    color=TARGET_PALETTE[i % len(TARGET_PALETTE)],
                    radius_m=target_radius_m,
                    waypoints=((x, y),),
                )
            )
    kwargs = dict(
        extent_m=extent,
        occluder_density=density,
        targets=tuple(targets),
        seed=int(seed),
    )
    kwargs.update(overrides)
    return SceneSpec(**kwargs)


# ---------------------------------------------------------------------------
# Dataset writer / reader
# ---------------------------------------------------------------------------

def _spec_to_dict(spec: SceneSpec) -> dict:
    return {
        "extent_m": list(spec.extent_m),
        "occluder_density": spec.occluder_density,
        "occluder_layer": list(spec.occluder_layer),
        "occluder_radius_m": list(spec.occluder_radius_m),
        "occluder_colors": [
            {"weight": g.weight, "mean": list(g.mean), "jitter": list(g.jitter)}
            for g in spec.occluder_colors
        ],
        "targets": [
            {
                "color": list(t.color),
                "radius_m": t.radius_m,
                "waypoints": [list(w) for w in t.waypoints],
                "speed_mps": t.speed_mps,
            }
            for t in spec.targets
        ],
        "background_base": list(spec.background_base),
        "background_amp": spec.background_amp,
        "texture_cell_m": spec.texture_cell_m,
        "noise_std": spec.noise_std,
        "seed": spec.seed,
    }


def _spec_from_dict(d: dict) -> SceneSpec:
    return SceneSpec(
        extent_m=tuple(d["extent_m"]),
        occluder_density=d["occluder_density"],
        occluder_layer=tuple(d["occluder_layer"]),
        occluder_radius_m=tuple(d["occluder_radius_m"]),
        occluder_colors=tuple(
            OccluderColorGroup(g["weight"], tuple(g["mean"]), tuple(g["jitter"]))
            for g in d["occluder_colors"]
        ),
        targets=tuple(
            TargetSpec(
                color=tuple(t["color"]),
                radius_m=t["radius_m"],
                waypoints=tuple(tuple(w) for w in t["waypoints"]),
                speed_mps=t["speed_mps"],
            )
            for t in d["targets"]
        ),
        background_base=tuple(d["background_base"]),
        background_amp=d["background_amp"],
        texture_cell_m=d["texture_cell_m"],
        noise_std=d["noise_std"],
        seed=d["seed"],
    )


def frame_name(n: int) -> str:
    return f"frame_{n:04d}.png"


def simulate_flight(
    spec: SceneSpec,
    rig: ArrayRig,
    frames: int,
    fps: float,
    out_dir: str | Path,
    plane: FocalPlane = None,
    write_visibility: bool = True,
) -> Path:
    """Render and write a full dataset: views, truth, rig, manifest.

    Layout under ``out_dir``: ``manifest.json``, ``rig.json``,
    ``cam<k>/frame_<n>.png``, ``truth/frame_<n>.png`` (label raster),
    ``truth/centroids.csv``, and per-camera visibility label rasters
    ``truth/vis_cam<k>_frame_<n>.png``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scene = generate_scene(spec)
    if plane is None:
        plane = default_plane(rig)
    renderer = SceneRenderer(scene, rig, plane)

    save_rig(rig, out / "rig.json")
    rows = []
    for n in range(frames):
        t = n / fps
        for k in range(rig.count):
            save_png(renderer.render(k, t), out / f"cam{k}" / frame_name(n))
            if write_visibility:
                vis = renderer.visibility(k, t)
                save_png(vis.astype(np.uint8), out / "truth" / f"vis_cam{k}_{frame_name(n)}")
        truth = renderer.truth(t)
        save_png(truth.labels.astype(np.uint8), out / "truth" / frame_name(n))
        for i in range(len(spec.targets)):
            rows.append(
                (
                    n,
                    i + 1,
                    truth.centroids_world[i, 0],
                    truth.centroids_world[i, 1],
                    truth.centroids_px[i, 0],
                    truth.centroids_px[i, 1],
                )
            )
    with open(out / "truth" / "centroids.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "target_id", "world_x", "world_y", "px_x", "px_y"])
        for r in rows:
            writer.writerow([r[0], r[1]] + [f"{v:.6f}" for v in r[2:]])

    manifest = {
        "seed": spec.seed,
        "frames": frames,
        "fps": fps,
        "camera_count": rig.count,
        "baseline_m": rig.baseline_m,
        "altitude_m": rig.altitude_m,
        "aperture_m": rig.aperture_m,
        "rig_file": "rig.json",
        "plane": {
            "height_m": plane.height_m,
            "extent": list(plane.extent),
            "resolution": list(plane.resolution),
        },
        "scene_spec": _spec_to_dict(spec),
        "occluder_disks": scene.n_occluders,
        "visibility_masks": bool(write_visibility),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return out


def load_manifest(dataset_dir: str | Path) -> dict:
    return json.loads((Path(dataset_dir) / "manifest.json").read_text())


def load_truth_frame(
    dataset_dir: str | Path, frame: int, manifest: dict = None
) -> GroundTruthFrame:
    """Reconstruct one frame's GroundTruthFrame from dataset files."""
    from .rasters import load_png

    root = Path(dataset_dir)
    manifest = manifest or load_manifest(root)
    labels = load_png(root / "truth" / frame_name(frame)).astype(np.int32)
    vis = None
    if manifest.get("visibility_masks"):
        vis = tuple(
            load_png(root / "truth" / f"vis_cam{k}_{frame_name(frame)}").astype(np.int32)
            for k in range(manifest["camera_count"])
        )
    cw, cp = [], []
    with open(root / "truth" / "centroids.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            if int(row["frame"]) == frame:
                cw.append((float(row["world_x"]), float(row["world_y"])))
                cp.append((float(row["px_x"]), float(row["px_y"])))
    return GroundTruthFrame(
        labels=labels,
        centroids_world=np.array(cw).reshape(-1, 2),
        centroids_px=np.array(cp).reshape(-1, 2),
        visibility=vis,
    )


def load_frames(
    dataset_dir: str | Path, frame: int, manifest: dict = None
) -> list[np.ndarray]:
    """Load one synchronized uint8 frame per camera from a dataset."""
    from .rasters import load_png

    root = Path(dataset_dir)
    manifest = manifest or load_manifest(root)
    out = []
    for k in range(manifest["camera_count"]):
        path = root / f"cam{k}" / frame_name(frame)
        if not path.exists():
            raise FileNotFoundError(str(path))
        out.append(load_png(path))
    return out


def manifest_rig(dataset_dir: str | Path, manifest: dict = None) -> ArrayRig:
    from .geometry import load_rig

    manifest = manifest or load_manifest(dataset_dir)
    return load_rig(Path(dataset_dir) / manifest.get("rig_file", "rig.json"))


def manifest_plane(manifest: dict) -> FocalPlane:
    p = manifest["plane"]
    return FocalPlane(
        height_m=p["height_m"],
        extent=tuple(p["extent"]),
        resolution=tuple(p["resolution"]),
    )


def manifest_spec(manifest: dict) -> SceneSpec:
    return _spec_from_dict(manifest["scene_spec"])
