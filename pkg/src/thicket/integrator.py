"""Ground-plane image integration for a multi-camera array.

Every view is back-projected onto the focal plane and averaged. Points on
the plane (targets on the ground) re-align across views and stay sharp;
objects above the plane (occluders) project to different ground positions
per camera and blur away. The integral raster is rendered from the center
camera's perspective: each integral pixel corresponds to a ray of the
reference camera intersected with the plane.

The heavy lifting happens once in :meth:`ImageIntegrator.fit`, which
precomputes per-camera bilinear gather indices and weights; each call to
:meth:`ImageIntegrator.transform` is then a handful of vectorized gathers
per camera, fast enough to integrate ten 1024x1024 views in well under a
second on one CPU core.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import EmptyIntegral, LengthMismatch
from .geometry import (
    ArrayRig,
    FocalPlane,
    distort_points,
    project_points,
    reference_grid_points,
)
from .validation import check_frames

__all__ = ["FrameSet", "IntegralImage", "ImageIntegrator", "integrate", "integrate_video"]


@dataclass(frozen=True)
class FrameSet:
    """One synchronized image per camera of a rig."""

    images: tuple[np.ndarray, ...]
    rig: ArrayRig
    frame_index: int = 0

    def __post_init__(self):
        images = tuple(check_frames(list(self.images), self.rig.count))
        object.__setattr__(self, "images", images)


@dataclass(frozen=True)
class IntegralImage:
    """Average of all views back-projected onto the focal plane.

    ``raster`` is float RGB in [0, 1]; ``count_map`` holds the number of
    cameras contributing to each pixel. Pixels with count 0 are invalid and
    must be excluded from downstream statistics.
    """

    raster: np.ndarray
    count_map: np.ndarray
    reference_view: int

    @property
    def valid_mask(self) -> np.ndarray:
        return self.count_map > 0


class ImageIntegrator(TransformerMixin, BaseEstimator):
    """Estimator that turns per-camera frame lists into integral images.

    Parameters
    ----------
    plane:
        FocalPlane defining the integration surface, its world extent, and
        the integral raster resolution.

    Attributes (after fit)
    ----------------------
    rig_: the fitted ArrayRig.
    count_map_: (H, W) int array of contributing cameras per pixel.
    world_points_: (H, W, 3) world coordinates of each integral pixel.
    """

    def __init__(self, plane: FocalPlane = None):
        self.plane = plane

    def fit(self, rig: ArrayRig, y=None):
        """Precompute the per-camera resampling maps for ``rig``."""
        if self.plane is None:
            raise ValueError("ImageIntegrator requires a plane")
        plane = self.plane
        wp, hp = plane.resolution
        world = reference_grid_points(rig, plane)
        in_extent = plane.contains(world[..., :2]).ravel()

        maps = []
        count = np.zeros(hp * wp, dtype=np.int32)
        for cam, pose in rig.cameras:
            pix, depth = project_points(world, cam, pose)
            if cam.has_distortion:
                pix = distort_points(pix, cam)
            x = pix[..., 0].ravel()
            y = pix[..., 1].ravel()
            w, h = cam.width, cam.height
            valid = (
                in_extent
                & (depth.ravel() > 0.0)
                & (x >= 0.0)
                & (x <= w - 1.0)
                & (y >= 0.0)
                & (y <= h - 1.0)
            )
            x0 = np.clip(np.floor(x), 0, w - 2).astype(np.int64)
            y0 = np.clip(np.floor(y), 0, h - 2).astype(np.int64)
            fx = (x - x0).astype(np.float32)
            fy = (y - y0).astype(np.float32)
            flat = (y0 * w + x0).astype(np.int32)
            weights = np.stack(
                [
                    (1.0 - fx) * (1.0 - fy),
                    fx * (1.0 - fy),
                    (1.0 - fx) * fy,
                    fx * fy,
                ]
            )
            weights[:, ~valid] = 0.0
            flats = np.stack([flat, flat + 1, flat + w, flat + w + 1])
            flats[:, ~valid] = 0
            maps.append((flats, weights))
            count += valid.astype(np.int32)

        if count.max() == 0:
            raise EmptyIntegral("plane extent receives no contribution from any camera")
        self.rig_ = rig
        self.world_points_ = world
        self.count_map_ = count.reshape(hp, wp)
        self._maps = maps
        self._count_flat = count
        return self

    def transform(self, frames: Sequence[np.ndarray]) -> IntegralImage:
        """Integrate one synchronized frame per camera.

        Accepts uint8 or float RGB images matching the fitted cameras'
        resolutions; returns an :class:`IntegralImage`.
        """
        if not hasattr(self, "rig_"):
            raise RuntimeError("ImageIntegrator must be fitted before transform")
        if isinstance(frames, FrameSet):
            frames = frames.images
        frames = check_frames(list(frames), self.rig_.count, dtype=np.float32)
        wp, hp = self.plane.resolution
        npx = hp * wp
        accum = np.zeros((npx, 3), dtype=np.float64)
        # scratch is per call, not per instance: transform must stay safe to
        # run from several threads on one fitted integrator
        gather = np.empty((npx, 3), dtype=np.float32)
        vals = np.empty((npx, 3), dtype=np.float32)
        for (flats, weights), frame in zip(self._maps, frames):
            src = frame.reshape(-1, 3)
            for j in range(4):
                np.take(src, flats[j], axis=0, out=gather)
                gather *= weights[j, :, None]
                if j == 0:
                    vals, gather = gather, vals
                else:
                    vals += gather
            accum += vals
        divisor = np.maximum(self._count_flat, 1)[:, None]
        raster = np.clip(accum / divisor, 0.0, 1.0).reshape(hp, wp, 3)
        raster[self.count_map_ == 0] = 0.0
        return IntegralImage(
            raster=raster,
            count_map=self.count_map_.copy(),
            reference_view=self.rig_.center_index,
        )


def integrate(frames: FrameSet, plane: FocalPlane) -> IntegralImage:
    """One-shot integration of a FrameSet onto ``plane``."""
    return ImageIntegrator(plane).fit(frames.rig).transform(frames.images)


def integrate_video(
    sequences: Sequence[Sequence[np.ndarray]],
    rig: ArrayRig,
    plane: FocalPlane,
) -> list[IntegralImage]:
    """Frame-wise integration of synchronized per-camera sequences.

    ``sequences[k][n]`` is camera k's frame n. Raises LengthMismatch when
    the per-camera sequences differ in length.
    """
    lengths = {len(s) for s in sequences}
    if len(lengths) > 1:
        raise LengthMismatch(f"per-camera sequences differ in length: {sorted(lengths)}")
    integ = ImageIntegrator(plane).fit(rig)
    n_frames = lengths.pop() if lengths else 0
    return [
        integ.transform([sequences[k][n] for k in range(rig.count)])
        for n in range(n_frames)
    ]
