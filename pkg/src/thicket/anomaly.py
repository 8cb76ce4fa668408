"""Color anomaly detection against global background statistics.

Each pixel r of an RGB image is scored by its Mahalanobis distance to the
image's own background model (mean color delta, 3x3 color covariance K):

    score(r) = (r - delta)^T (K + eps*I)^(-1) (r - delta)

Pixels whose color is consistent with the bulk of the image score low;
rare colors score high regardless of where they sit spatially. Masks are
produced by thresholding scores at an empirical quantile ("confidence"),
and a supervised search picks the confidence that best separates known
targets from clutter.

All reductions are computed with deterministic single-threaded numpy
kernels so results are independent of BLAS thread counts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import EmptyTruth, RasterMismatch, SingularCovariance, TooFewSamples
from .validation import check_rgb_image

__all__ = [
    "BackgroundStats",
    "RxField",
    "AnomalyMask",
    "CONFIDENCE_GRID",
    "background_stats",
    "rx_scores",
    "threshold_by_confidence",
    "optimize_threshold",
]

# Ridge added to the covariance before inversion; keeps constant-color
# images (K = 0) well defined.
EPSILON = 1e-8

# Quantile grid searched by optimize_threshold: 0.900..0.999 by 1e-3,
# 0.9991..0.9999 by 1e-4, 0.99991..0.99999 by 1e-5 (118 values).
CONFIDENCE_GRID: tuple[float, ...] = tuple(
    [i / 1000.0 for i in range(900, 1000)]
    + [i / 10000.0 for i in range(9991, 10000)]
    + [i / 100000.0 for i in range(99991, 100000)]
)


@dataclass(frozen=True)
class BackgroundStats:
    """Global color statistics of an image's background."""

    mean: np.ndarray  # (3,)
    covariance: np.ndarray  # (3, 3), population (1/N) normalization
    sample_count: int

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(3)
        cov = np.asarray(self.covariance, dtype=float).reshape(3, 3)
        if np.max(np.abs(cov - cov.T)) > 1e-12:
            raise ValueError("covariance must be symmetric within 1e-12")
        if np.linalg.eigvalsh(cov).min() < -1e-12:
            raise ValueError("covariance must be positive semi-definite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)


@dataclass(frozen=True)
class RxField:
    """Per-pixel anomaly scores plus the mask of pixels that carry one."""

    scores: np.ndarray  # (H, W) float, >= 0
    valid_mask: np.ndarray  # (H, W) bool

    def __post_init__(self):
        if self.scores.shape != self.valid_mask.shape:
            raise ValueError("scores and valid_mask shapes differ")


@dataclass(frozen=True)
class AnomalyMask:
    """Binary detection raster with the threshold that produced it."""

    mask: np.ndarray  # (H, W) bool
    threshold_used: float
    confidence_used: float


def background_stats(image: np.ndarray, valid: np.ndarray = None) -> BackgroundStats:
    """Mean and covariance of an image's colors over the valid pixels.

    Covariance uses the population (1/N) convention and is returned
    unregularized; scoring adds the ridge itself.

    Raises:
        TooFewSamples: fewer than 4 valid pixels.
    """
    img = check_rgb_image(image)
    if valid is None:
        pixels = img.reshape(-1, 3)
    else:
        pixels = img[np.asarray(valid, dtype=bool)]
    n = pixels.shape[0]
    if n < 4:
        raise TooFewSamples(f"need >= 4 valid pixels, got {n}")
    mean = pixels.mean(axis=0)
    d = pixels - mean
    # einsum without optimize stays on numpy's deterministic kernel instead
    # of a thread-count-dependent BLAS gemm.
    cov = np.einsum("ni,nj->ij", d, d, optimize=False) / n
    cov = (cov + cov.T) / 2.0
    return BackgroundStats(mean=mean, covariance=cov, sample_count=n)


def rx_scores(
    image: np.ndarray,
    stats: BackgroundStats,
    valid: np.ndarray = None,
) -> RxField:
    """Mahalanobis score of every pixel against the background statistics.

    Invalid pixels (e.g. integral pixels with zero contributing cameras)
    receive score 0 and are flagged out in the returned field.

    Raises:
        SingularCovariance: the ridge-regularized covariance still fails to
            invert (cannot happen for PSD input; guarded anyway).
    """
    img = check_rgb_image(image)
    h, w = img.shape[:2]
    if valid is None:
        valid = np.ones((h, w), dtype=bool)
    else:
        valid = np.asarray(valid, dtype=bool)
        if valid.shape != (h, w):
            raise RasterMismatch(f"valid mask {valid.shape} vs image {(h, w)}")
    k_reg = stats.covariance + EPSILON * np.eye(3)
    try:
        inv = np.linalg.inv(k_reg)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance(str(exc)) from exc
    inv = (inv + inv.T) / 2.0
    dx = img[..., 0] - stats.mean[0]
    dy = img[..., 1] - stats.mean[1]
    dz = img[..., 2] - stats.mean[2]
    scores = (
        inv[0, 0] * dx * dx
        + inv[1, 1] * dy * dy
        + inv[2, 2] * dz * dz
        + 2.0 * (inv[0, 1] * dx * dy + inv[0, 2] * dx * dz + inv[1, 2] * dy * dz)
    )
    scores = np.maximum(scores, 0.0)
    scores[~valid] = 0.0
    return RxField(scores=scores, valid_mask=valid)


def _quantile_sorted(sorted_vals: np.ndarray, q: float) -> float:
    """Linear-interpolation quantile of an ascending-sorted array."""
    n = sorted_vals.size
    pos = (n - 1) * q
    lo = int(np.floor(pos))
    hi = min(lo + 1, n - 1)
    frac = pos - lo
    return float(sorted_vals[lo] * (1.0 - frac) + sorted_vals[hi] * frac)


def threshold_by_confidence(field: RxField, confidence: float) -> AnomalyMask:
    """Mask the pixels whose score exceeds the given score quantile.

    The threshold is the empirical quantile of the valid scores at
    ``confidence`` (sorting with linear interpolation between order
    statistics); the mask uses a strict inequality, so confidence 0 masks
    every valid pixel and a constant field with confidence > 0 masks none.
    """
    vals = field.scores[field.valid_mask]
    if vals.size == 0:
        raise ValueError("score field has no valid pixels")
    if confidence <= 0.0:
        thr = -np.inf
    else:
        thr = _quantile_sorted(np.sort(vals), confidence)
    mask = field.valid_mask & (field.scores > thr)
    return AnomalyMask(mask=mask, threshold_used=float(thr), confidence_used=float(confidence))


def optimize_threshold(
    field: RxField,
    truth_labels: np.ndarray,
    n_targets: int = None,
) -> tuple[float, AnomalyMask, float]:
    """Search the confidence grid for the best supervised threshold.

    Args:
        field: scores to threshold.
        truth_labels: integer raster aligned with the field; 0 is
            background, values 1..T label target pixels.
        n_targets: number of targets the truth describes. Defaults to the
            number of distinct labels present in the raster; pass it
            explicitly when targets may be entirely absent (e.g. fully
            occluded in this view) so an all-background raster is not
            mistaken for an empty truth.

    Returns:
        (confidence, mask, precision_percent). Candidates are ranked by
        (number of targets containing at least one detected pixel, then
        pixel precision); ties resolve to the lowest confidence. The
        precision is None when the chosen mask is empty.

    Raises:
        EmptyTruth: the truth describes zero targets.
        RasterMismatch: label raster shape differs from the field.
    """
    labels = np.asarray(truth_labels)
    if labels.shape != field.scores.shape:
        raise RasterMismatch(f"labels {labels.shape} vs field {field.scores.shape}")
    present = np.unique(labels[(labels > 0)])
    if n_targets is None:
        n_targets = present.size
    if n_targets == 0:
        raise EmptyTruth("truth describes zero targets")

    valid = field.valid_mask
    vals = field.scores[valid]
    if vals.size == 0:
        raise ValueError("score field has no valid pixels")
    lab_valid = labels[valid]
    order = np.argsort(vals, kind="stable")
    sorted_vals = vals[order]
    is_target = lab_valid[order] > 0
    # Cumulative target/background counts from the top score downwards.
    tp_from_top = np.cumsum(is_target[::-1])[::-1]
    total = vals.size
    # Highest score inside each present target: a target is covered by a
    # threshold iff its best pixel clears it.
    target_max = np.array(
        [vals[lab_valid == t].max() if np.any(lab_valid == t) else -np.inf for t in present]
    )

    best = None  # (covered, precision_key, -confidence) maximized
    for conf in CONFIDENCE_GRID:
        thr = _quantile_sorted(sorted_vals, conf)
        start = np.searchsorted(sorted_vals, thr, side="right")
        n_mask = total - start
        tp = int(tp_from_top[start]) if start < total else 0
        fp = n_mask - tp
        covered = int(np.sum(target_max > thr))
        if n_mask == 0:
            prec_key = -1.0
        elif tp == 0:
            prec_key = 0.0
        else:
            prec_key = tp / (tp + fp)
        key = (covered, prec_key)
        if best is None or key > best[0]:
            best = (key, conf)
    best_conf = best[1]
    mask = threshold_by_confidence(field, best_conf)
    n_mask = int(mask.mask.sum())
    if n_mask == 0:
        precision = None
    else:
        tp = int(np.sum((labels > 0) & mask.mask))
        precision = 100.0 * tp / n_mask
    return best_conf, mask, precision
