"""Multi-object tracking over binary anomaly-mask time series.

Detections are 8-connected blobs of the mask; each target hypothesis is a
constant-velocity Kalman filter updated with position-only measurements.
Per frame, predicted tracks and detected blobs are matched by a gated,
globally optimal one-to-one assignment; tracks are confirmed after enough
consecutive-ish hits and dropped after too many misses.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.ndimage import find_objects, label
from scipy.optimize import linear_sum_assignment
from sklearn.base import BaseEstimator

from .anomaly import AnomalyMask

__all__ = [
    "Blob",
    "KalmanState",
    "Track",
    "TrackObservation",
    "BlobTracker",
    "detect_blobs",
    "kalman_predict",
    "kalman_update",
    "associate",
    "track_sequence",
    "save_tracks_csv",
    "load_tracks_csv",
]

_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)

# Constant-velocity transition for a unit frame step, state (x, y, vx, vy).
_F = np.array(
    [[1.0, 0, 1, 0], [0, 1, 0, 1], [0, 0, 1, 0], [0, 0, 0, 1]]
)
# Piecewise-constant acceleration noise loading (dt = 1).
_G = np.array([[0.5, 0.0], [0.0, 0.5], [1.0, 0.0], [0.0, 1.0]])
_GGT = _G @ _G.T
_H = np.array([[1.0, 0, 0, 0], [0, 1, 0, 0]])

TENTATIVE = "tentative"
CONFIRMED = "confirmed"
LOST = "lost"


@dataclass(frozen=True)
class Blob:
    """One connected component of a detection mask."""

    centroid: tuple[float, float]  # (x, y) pixels
    area: int
    bounding_box: tuple[int, int, int, int]  # (row_min, col_min, row_max, col_max) inclusive


@dataclass(frozen=True)
class KalmanState:
    """Constant-velocity filter state (x, y, vx, vy) with covariance."""

    state: np.ndarray  # (4,)
    covariance: np.ndarray  # (4, 4) symmetric PSD

    def __post_init__(self):
        x = np.asarray(self.state, dtype=float).reshape(4)
        p = np.asarray(self.covariance, dtype=float).reshape(4, 4)
        if np.max(np.abs(p - p.T)) > 1e-9:
            raise ValueError("covariance must be symmetric within 1e-9")
        if np.linalg.eigvalsh(p).min() < -1e-9:
            raise ValueError("covariance must be PSD within 1e-9")
        object.__setattr__(self, "state", x)
        object.__setattr__(self, "covariance", (p + p.T) / 2.0)

    @property
    def position(self) -> np.ndarray:
        return self.state[:2].copy()

    @property
    def velocity(self) -> np.ndarray:
        return self.state[2:].copy()


@dataclass(frozen=True)
class TrackObservation:
    """One frame of a track's history."""

    frame: int
    x: float
    y: float
    area: int  # matched blob area; 0 on miss frames (predicted position)
    status: str
    observed: bool


@dataclass
class Track:
    """A target hypothesis maintained over frames."""

    id: int
    kalman: KalmanState
    status: str = TENTATIVE
    hits: int = 1
    misses: int = 0
    history: list[TrackObservation] = field(default_factory=list)

    @property
    def birth_frame(self) -> int:
        return self.history[0].frame

    @property
    def last_frame(self) -> int:
        return self.history[-1].frame

    def was_confirmed(self) -> bool:
        return any(obs.status == CONFIRMED for obs in self.history)


def detect_blobs(mask: np.ndarray | AnomalyMask, min_area: int = 4) -> list[Blob]:
    """8-connected components of a binary mask, small ones discarded.

    Centroids are unweighted means of member pixel coordinates in (x, y)
    order. Output is sorted by area descending, ties by bounding-box
    origin (row, then column).
    """
    if isinstance(mask, AnomalyMask):
        mask = mask.mask
    mask = np.asarray(mask, dtype=bool)
    labeled, n = label(mask, structure=_EIGHT_CONNECTED)
    if n == 0:
        return []
    areas = np.bincount(labeled.ravel(), minlength=n + 1)
    rows, cols = np.nonzero(mask)
    ids = labeled[rows, cols]
    sum_r = np.bincount(ids, weights=rows, minlength=n + 1)
    sum_c = np.bincount(ids, weights=cols, minlength=n + 1)
    slices = find_objects(labeled)
    blobs = []
    for k in range(1, n + 1):
        area = int(areas[k])
        if area < min_area:
            continue
        sl = slices[k - 1]
        blobs.append(
            Blob(
                centroid=(sum_c[k] / area, sum_r[k] / area),
                area=area,
                bounding_box=(
                    sl[0].start,
                    sl[1].start,
                    sl[0].stop - 1,
                    sl[1].stop - 1,
                ),
            )
        )
    blobs.sort(key=lambda b: (-b.area, b.bounding_box[0], b.bounding_box[1]))
    return blobs


def kalman_predict(state: KalmanState, process_noise: float) -> KalmanState:
    """Advance the filter one frame under the constant-velocity model."""
    x = _F @ state.state
    p = _F @ state.covariance @ _F.T + process_noise * _GGT
    return KalmanState(state=x, covariance=p)


def kalman_update(
    state: KalmanState,
    measurement: Sequence[float],
    measurement_noise: float,
) -> KalmanState:
    """Fold a position measurement into the state.

    Uses the Joseph-form covariance update, which stays PSD for any gain.
    """
    z = np.asarray(measurement, dtype=float).reshape(2)
    p = state.covariance
    r = measurement_noise * np.eye(2)
    s = _H @ p @ _H.T + r
    k = np.linalg.solve(s.T, (_H @ p.T)).T  # == P H^T S^-1
    x = state.state + k @ (z - _H @ state.state)
    ikh = np.eye(4) - k @ _H
    p_new = ikh @ p @ ikh.T + k @ r @ k.T
    return KalmanState(state=x, covariance=(p_new + p_new.T) / 2.0)


def associate(
    tracks: Sequence[Track],
    blobs: Sequence[Blob],
    gate_px: float,
) -> tuple[list[tuple[int, int]], list[int], list[int]]:
    """Gated, globally optimal one-to-one matching of tracks to blobs.

    Minimizes total Euclidean distance between predicted track positions
    and blob centroids; pairs farther apart than ``gate_px`` are

    infeasible. Returns (matches as (track_idx, blob_idx) pairs, unmatched
    track indices, unmatched blob indices).
    """
    if not tracks or not blobs:
        return [], list(range(len(tracks))), list(range(len(blobs)))
    pred = np.array([t.kalman.position for t in tracks])
    cent = np.array([b.centroid for b in blobs])
    dist = np.linalg.norm(pred[:, None, :] - cent[None, :, :], axis=-1)
    big = 1e9
    cost = np.where(dist <= gate_px, dist, big)
    rows, cols = linear_sum_assignment(cost)
    matches = [(int(i), int(j)) for i, j in zip(rows, cols) if cost[i, j] < big]
    matched_t = {i for i, _ in matches}
    matched_b = {j for _, j in matches}
    unmatched_t = [i for i in range(len(tracks)) if i not in matched_t]
    unmatched_b = [j for j in range(len(blobs)) if j not in matched_b]
    return matches, unmatched_t, unmatched_b


class BlobTracker(BaseEstimator):
    """Estimator running the full detect/predict/associate/update loop.

    Parameters hold the lifecycle and filter settings; :meth:`fit` consumes
    a sequence of binary masks and leaves the finished track list in
    ``tracks_``.
    """

    def __init__(
        self,
        confirm_hits: int = 3,
        max_misses: int = 5,
        gate_px: float = 30.0,
        min_area: int = 4,
        process_noise: float = 1.0,
        measurement_noise: float = 1.0,
        initial_velocity_var: float = 100.0,
        initial_position_var: float = 1.0,
    ):
        self.confirm_hits = confirm_hits
        self.max_misses = max_misses
        self.gate_px = gate_px
        self.min_area = min_area
        self.process_noise = process_noise
        self.measurement_noise = measurement_noise
        self.initial_velocity_var = initial_velocity_var
        self.initial_position_var = initial_position_var

    def fit(self, masks: Sequence[np.ndarray | AnomalyMask], y=None):
        """Track through ``masks``; results land in ``self.tracks_``."""
        if len(masks) == 0:
            raise ValueError("mask sequence is empty")
        active: list[Track] = []
        finished: list[Track] = []
        next_id = 1
        for frame, mask in enumerate(masks):
            blobs = detect_blobs(mask, min_area=self.min_area)
            for t in active:
                t.kalman = kalman_predict(t.kalman, self.process_noise)
            matches, unmatched_t, unmatched_b = associate(active, blobs, self.gate_px)
            for ti, bi in matches:
                t = active[ti]
                t.kalman = kalman_update(
                    t.kalman, blobs[bi].centroid, self.measurement_noise
                )
                t.hits += 1
                t.misses = 0
                if t.status == TENTATIVE and t.hits >= self.confirm_hits:
                    t.status = CONFIRMED
                t.history.append(
                    TrackObservation(
                        frame=frame,
                        x=float(t.kalman.state[0]),
                        y=float(t.kalman.state[1]),
                        area=blobs[bi].area,
                        status=t.status,
                        observed=True,
                    )
                )
            dropped = []
            for ti in unmatched_t:
                t = active[ti]
                t.misses += 1
                if t.misses > self.max_misses:
                    t.status = LOST
                    dropped.append(ti)
                else:
                    t.history.append(
                        TrackObservation(
                            frame=frame,
                            x=float(t.kalman.state[0]),
                            y=float(t.kalman.state[1]),
                            area=0,
                            status=t.status,
                            observed=False,
                        )
                    )
            for ti in sorted(dropped, reverse=True):
                finished.append(active.pop(ti))
            for bi in unmatched_b:
                cx, cy = blobs[bi].centroid
                state = KalmanState(
                    state=np.array([cx, cy, 0.0, 0.0]),
                    covariance=np.diag(
                        [
                            self.initial_position_var,
                            self.initial_position_var,
                            self.initial_velocity_var,
                            self.initial_velocity_var,
                        ]
                    ),
                )
                status = CONFIRMED if self.confirm_hits <= 1 else TENTATIVE
                t = Track(id=next_id, kalman=state, status=status)
                next_id += 1
                t.history.append(
                    TrackObservation(
                        frame=frame,
                        x=cx,
                        y=cy,
                        area=blobs[bi].area,
                        status=t.status,
                        observed=True,
                    )
                )
                active.append(t)
        self.tracks_ = sorted(finished + active, key=lambda t: t.id)
        return self


def track_sequence(
    masks: Sequence[np.ndarray | AnomalyMask],
    **params,
) -> list[Track]:
    """Functional front end to :class:`BlobTracker`."""
    return BlobTracker(**params).fit(masks).tracks_


def save_tracks_csv(tracks: Sequence[Track], path: str | Path) -> None:
    """Write one row per confirmed-track observation.

    Columns: frame, track_id, x, y, area, status. Rows are sorted by frame
    then track id; coordinates are integral-image pixels.
    """
    rows = []
    for t in tracks:
        for obs in t.history:
            if obs.observed and obs.status == CONFIRMED:
                rows.append((obs.frame, t.id, obs.x, obs.y, obs.area, obs.status))
    rows.sort(key=lambda r: (r[0], r[1]))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "track_id", "x", "y", "area", "status"])
        for r in rows:
            writer.writerow([r[0], r[1], f"{r[2]:.6f}", f"{r[3]:.6f}", r[4], r[5]])


def load_tracks_csv(path: str | Path) -> list[dict]:
    """Read rows written by :func:`save_tracks_csv` as dicts."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        out = []
        for row in reader:
            out.append(
                {
                    "frame": int(row["frame"]),
                    "track_id": int(row["track_id"]),
                    "x": float(row["x"]),
                    "y": float(row["y"]),
                    "area": int(row["area"]),
                    "status": row["status"],
                }
            )
    return out
