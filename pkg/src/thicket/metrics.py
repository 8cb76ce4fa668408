"""Evaluation protocol: pixel precision, per-target recall, raw-vs-integral
precision tables, and covariance shrinkage analysis.

Pixel precision is the sole quality number: 100 * TP / (TP + FP) of a
binary mask against a label raster, with the corner conventions 0% when
nothing true is hit and 100% when nothing false is. A target counts as
recalled when at least one mask pixel overlaps its label region. Raw
images are scored against per-view visibility labels (what the camera can
actually see); integrals against the occlusion-free labels on the
integral grid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .anomaly import AnomalyMask, background_stats, optimize_threshold, rx_scores
from .exceptions import RasterMismatch
from .integrator import FrameSet, IntegralImage
from .simulator import GroundTruthFrame

__all__ = [
    "PrecisionReport",
    "CovarianceReport",
    "pixel_precision",
    "target_recall",
    "evaluate_set",
    "covariance_report",
    "eigen_symmetric_3x3",
    "format_table",
    "save_reports",
    "load_reports",
]


@dataclass(frozen=True)
class PrecisionReport:
    """Per-set detection precisions: one per raw camera, their mean, and
    the integral's. A None entry means the optimizer produced an empty
    mask (no detections), which is excluded from the mean rather than
    counted as 0 or 100."""

    per_camera_precision: tuple[Optional[float], ...]
    average: Optional[float]  # mean of the defined per-camera values
    integral_precision: Optional[float]
    set_id: str = ""
    light_condition: str = ""
    mean_raw_confidence: Optional[float] = None
    integral_confidence: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "set_id": self.set_id,
            "light_condition": self.light_condition,
            "per_camera_precision": list(self.per_camera_precision),
            "average": self.average,
            "integral_precision": self.integral_precision,
            "mean_raw_confidence": self.mean_raw_confidence,
            "integral_confidence": self.integral_confidence,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PrecisionReport":
        return cls(
            per_camera_precision=tuple(d["per_camera_precision"]),
            average=d["average"],
            integral_precision=d["integral_precision"],
            set_id=d.get("set_id", ""),
            light_condition=d.get("light_condition", ""),
            mean_raw_confidence=d.get("mean_raw_confidence"),
            integral_confidence=d.get("integral_confidence"),
        )


@dataclass(frozen=True)
class CovarianceReport:
    """Color-covariance comparison between raw views and their integral."""

    raw_mean_covariance: np.ndarray  # (3, 3)
    integral_covariance: np.ndarray  # (3, 3)
    raw_eigenvalues: np.ndarray  # (3,) descending
    integral_eigenvalues: np.ndarray  # (3,)
    raw_ellipse_axes: np.ndarray  # (3,) 2-sigma axis lengths
    integral_ellipse_axes: np.ndarray  # (3,)
    shrink_factors: np.ndarray  # (3, 3) |raw| / max(|integral|, eps)

    @property
    def diagonal_shrink_mean(self) -> float:
        return float(np.mean(np.diag(self.shrink_factors)))

    def to_dict(self) -> dict:
        return {
            "raw_mean_covariance": self.raw_mean_covariance.tolist(),
            "integral_covariance": self.integral_covariance.tolist(),
            "raw_eigenvalues": self.raw_eigenvalues.tolist(),
            "integral_eigenvalues": self.integral_eigenvalues.tolist(),
            "raw_ellipse_axes": self.raw_ellipse_axes.tolist(),
            "integral_ellipse_axes": self.integral_ellipse_axes.tolist(),
            "shrink_factors": self.shrink_factors.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CovarianceReport":
        return cls(*(np.array(d[k]) for k in (
            "raw_mean_covariance", "integral_covariance", "raw_eigenvalues",
            "integral_eigenvalues", "raw_ellipse_axes", "integral_ellipse_axes",
            "shrink_factors",
        )))


def _as_mask_array(mask: np.ndarray | AnomalyMask) -> np.ndarray:
    if isinstance(mask, AnomalyMask):
        mask = mask.mask
    return np.asarray(mask, dtype=bool)


def pixel_precision(
    mask: np.ndarray | AnomalyMask, truth_labels: np.ndarray
) -> Optional[float]:
    """Percentage of mask pixels that hit labeled target pixels.

    Returns None (no detections) for an empty mask; 0.0 when the mask hits
    nothing true; 100.0 when it hits nothing false.
    """
    m = _as_mask_array(mask)
    labels = np.asarray(truth_labels)
    if m.shape != labels.shape:
        raise RasterMismatch(f"mask {m.shape} vs truth {labels.shape}")
    n = int(m.sum())
    if n == 0:
        return None
    tp = int(np.sum(m & (labels > 0)))
    return 100.0 * tp / n


def target_recall(
    mask: np.ndarray | AnomalyMask,
    truth_labels: np.ndarray,
    n_targets: int = None,
) -> list[bool]:
    """Whether each target overlaps at least one mask pixel, in label order."""
    m = _as_mask_array(mask)
    labels = np.asarray(truth_labels)
    if m.shape != labels.shape:
        raise RasterMismatch(f"mask {m.shape} vs truth {labels.shape}")
    if n_targets is None:
        n_targets = int(labels.max())
    return [bool(np.any(m & (labels == t))) for t in range(1, n_targets + 1)]


def evaluate_set(
    frames: FrameSet,
    integral: IntegralImage,
    truth: GroundTruthFrame,
    set_id: str = "",
    light_condition: str = "",
) -> PrecisionReport:
    """Supervised-threshold detection on every raw view and the integral.

    Each raw view is optimized against its own visibility labels (targets
    as that camera sees them); the integral against the occlusion-free
    labels. ``truth.visibility`` must be populated.
    """
    if truth.visibility is None:
        raise ValueError("truth carries no per-camera visibility labels")
    n_targets = truth.centroids_world.shape[0]
    ps: list[Optional[float]] = []
    confs: list[float] = []
    for img, vis in zip(frames.images, truth.visibility):
        stats = background_stats(img)
        rx = rx_scores(img, stats)
        conf, _, prec = optimize_threshold(rx, vis, n_targets=n_targets)
        ps.append(prec)
        confs.append(conf)
    valid = integral.valid_mask
    stats_i = background_stats(integral.raster, valid=valid)
    rx_i = rx_scores(integral.raster, stats_i, valid=valid)
    conf_i, _, pi = optimize_threshold(rx_i, truth.labels, n_targets=n_targets)
    defined = [p for p in ps if p is not None]
    return PrecisionReport(
        per_camera_precision=tuple(ps),
        average=(sum(defined) / len(defined)) if defined else None,
        integral_precision=pi,
        set_id=set_id,
        light_condition=light_condition,
        mean_raw_confidence=sum(confs) / len(confs),
        integral_confidence=conf_i,
    )


def covariance_report(frames: FrameSet, integral: IntegralImage) -> CovarianceReport:
    """Average raw-view color covariance vs the integral's.

    Integral statistics run over valid (contributing) pixels only; ellipse
    axes are 2*sqrt(eigenvalue), the 2-sigma extents along the principal
    color directions.
    """
    raw_ks = [background_stats(img).covariance for img in frames.images]
    raw_k = np.mean(raw_ks, axis=0)
    int_k = background_stats(integral.raster, valid=integral.valid_mask).covariance
    raw_eval, _ = eigen_symmetric_3x3(raw_k)
    int_eval, _ = eigen_symmetric_3x3(int_k)
    shrink = np.abs(raw_k) / np.maximum(np.abs(int_k), 1e-12)
    return CovarianceReport(
        raw_mean_covariance=raw_k,
        integral_covariance=int_k,
        raw_eigenvalues=raw_eval,
        integral_eigenvalues=int_eval,
        raw_ellipse_axes=2.0 * np.sqrt(np.maximum(raw_eval, 0.0)),
        integral_ellipse_axes=2.0 * np.sqrt(np.maximum(int_eval, 0.0)),
        shrink_factors=shrink,
    )


# ---------------------------------------------------------------------------
# Closed-form symmetric 3x3 eigendecomposition
# ---------------------------------------------------------------------------

def _projector_column(a: np.ndarray, l1: float, l2: float) -> np.ndarray:
    """Unit eigenvector for the remaining eigenvalue of symmetric ``a``.

    By Cayley-Hamilton, (A - l1*I)(A - l2*I) maps everything onto the
    eigenspace of the third eigenvalue; any nonzero column works.
    """
    m = (a - l1 * np.eye(3)) @ (a - l2 * np.eye(3))
    norms = np.linalg.norm(m, axis=0)
    k = int(np.argmax(norms))
    if norms[k] < 1e-300:
        return np.eye(3)[:, k]
    return m[:, k] / norms[k]


def _complete_basis(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two unit vectors completing ``v`` to an orthonormal basis."""
    e = np.eye(3)[int(np.argmin(np.abs(v)))]
    u = e - np.dot(e, v) * v
    u = u / np.linalg.norm(u)
    return u, np.cross(v, u)


def eigen_symmetric_3x3(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and eigenvectors of a symmetric 3x3 matrix.

    Uses the trigonometric solution of the characteristic cubic plus
    spectral-projector eigenvectors; repeated eigenvalues fall back to an
    orthonormal completion of the distinct eigenvector. Returns
    ``(eigenvalues, V)`` with eigenvectors in the columns of V.
    """
    a = np.asarray(mat, dtype=float).reshape(3, 3)
    a = (a + a.T) / 2.0
    q = np.trace(a) / 3.0
    b = a - q * np.eye(3)
    p1 = a[0, 1] ** 2 + a[0, 2] ** 2 + a[1, 2] ** 2
    p2 = b[0, 0] ** 2 + b[1, 1] ** 2 + b[2, 2] ** 2 + 2.0 * p1
    if p2 <= 1e-30:
        return np.array([q, q, q]), np.eye(3)
    p = np.sqrt(p2 / 6.0)
    c = b / p
    det_c = (
        c[0, 0] * (c[1, 1] * c[2, 2] - c[1, 2] * c[2, 1])
        - c[0, 1] * (c[1, 0] * c[2, 2] - c[1, 2] * c[2, 0])
        + c[0, 2] * (c[1, 0] * c[2, 1] - c[1, 1] * c[2, 0])
    )
    r = min(max(det_c / 2.0, -1.0), 1.0)
    phi = np.arccos(r) / 3.0
    lam0 = q + 2.0 * p * np.cos(phi)
    lam2 = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    lam1 = 3.0 * q - lam0 - lam2
    lam = np.array([lam0, lam1, lam2])

    # relative tolerance: lam0 - lam2 >= 3p > 0 here, so scale > 0
    scale = max(abs(lam0), abs(lam2))
    gap_tol = 1e-7 * scale
    g01 = lam0 - lam1
    g12 = lam1 - lam2
    if g01 <= gap_tol and g12 <= gap_tol:
        vecs = np.eye(3)
    elif g01 <= gap_tol:
        v2 = _projector_column(a, lam0, lam1)
        u, w = _complete_basis(v2)
        vecs = np.column_stack([u, w, v2])
    elif g12 <= gap_tol:
        v0 = _projector_column(a, lam1, lam2)
        u, w = _complete_basis(v0)
        vecs = np.column_stack([v0, u, w])
    else:
        v0 = _projector_column(a, lam1, lam2)
        v2 = _projector_column(a, lam0, lam1)
        v1 = np.cross(v2, v0)
        v1 = v1 / np.linalg.norm(v1)
        vecs = np.column_stack([v0, v1, v2])
    # The trigonometric roots lose about sqrt(eps) of accuracy when two of
    # them nearly coincide (arccos argument at +-1). Rayleigh quotients of
    # the recovered vectors do not, so re-derive the values from them.
    lam = np.array([vecs[:, i] @ a @ vecs[:, i] for i in range(3)])
    order = np.argsort(-lam, kind="stable")
    return lam[order], vecs[:, order]


# ---------------------------------------------------------------------------
# Report rendering and serialization
# ---------------------------------------------------------------------------

def _fmt(v: Optional[float]) -> str:
    return "NoDet" if v is None else f"{v:.1f}"


def format_table(reports: Sequence[PrecisionReport]) -> str:
    """Aligned plain-text table: one row per set plus an averages row."""
    if not reports:
        return "(no sets)\n"
    n_cams = len(reports[0].per_camera_precision)
    header = ["set", "light"] + [f"C{i}" for i in range(n_cams)] + ["PAs", "Pi"]
    rows = []
    for rep in reports:
        rows.append(
            [rep.set_id or "-", rep.light_condition or "-"]
            + [_fmt(p) for p in rep.per_camera_precision]
            + [_fmt(rep.average), _fmt(rep.integral_precision)]
        )
    def col_mean(values):
        nums = [v for v in values if v is not None]
        return sum(nums) / len(nums) if nums else None
    avg_cells = ["avg", "-"]
    for i in range(n_cams):
        avg_cells.append(_fmt(col_mean([r.per_camera_precision[i] for r in reports])))
    avg_cells.append(_fmt(col_mean([r.average for r in reports])))
    avg_cells.append(_fmt(col_mean([r.integral_precision for r in reports])))
    rows.append(avg_cells)
    widths = [
        max(len(header[c]), *(len(r[c]) for r in rows)) for c in range(len(header))
    ]
    lines = ["  ".join(h.rjust(w) for h, w in zip(header, widths))]
    for r in rows:
        lines.append("  ".join(cell.rjust(w) for cell, w in zip(r, widths)))
    return "\n".join(lines) + "\n"


def save_reports(
    reports: Sequence[PrecisionReport],
    path: str | Path,
    covariance: Sequence[CovarianceReport] = (),
) -> None:
    payload = {
        "precision": [r.to_dict() for r in reports],
        "covariance": [c.to_dict() for c in covariance],
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def load_reports(path: str | Path) -> tuple[list[PrecisionReport], list[CovarianceReport]]:
    payload = json.loads(Path(path).read_text())
    return (
        [PrecisionReport.from_dict(d) for d in payload["precision"]],
        [CovarianceReport.from_dict(d) for d in payload["covariance"]],
    )
