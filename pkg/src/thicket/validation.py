"""Input validation helpers shared by the estimators and the CLI."""

from __future__ import annotations

from typing import Sequence

import numpy as np

__all__ = ["check_rgb_image", "check_frames", "check_rng"]


def check_rgb_image(
    image: np.ndarray, name: str = "image", dtype=np.float64
) -> np.ndarray:
    """Coerce an RGB image to float in [0, 1].

    Accepts uint8 (H, W, 3) or float (H, W, 3); rejects anything else.
    """
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"{name} must have shape (H, W, 3), got {arr.shape}")
    if arr.dtype == np.uint8:
        return arr.astype(dtype) / dtype(255.0)
    if arr.size and (arr.min() < -1e-9 or arr.max() > 1.0 + 1e-9):
        raise ValueError(f"float {name} must lie in [0, 1]")
    arr = arr.astype(dtype)  # always copies; clip below must not touch the input
    return np.clip(arr, 0.0, 1.0, out=arr)


def check_frames(
    frames: Sequence[np.ndarray], expected: int, dtype=np.float64
) -> list[np.ndarray]:
    """Validate one RGB frame per camera, all with a common shape."""
    if len(frames) != expected:
        raise ValueError(f"expected {expected} frames, got {len(frames)}")
    out = [
        check_rgb_image(f, name=f"frames[{i}]", dtype=dtype)
        for i, f in enumerate(frames)
    ]
    shapes = {f.shape for f in out}
    if len(shapes) > 1:
        raise ValueError(f"frames disagree on shape: {sorted(shapes)}")
    return out


def check_rng(seed) -> np.random.Generator:
    """Return a Generator from a seed, a Generator, or None."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
