"""Raster utilities: interpolation, image/mask/score-field file formats.

All images are numpy arrays in row-major (height, width[, channels]) layout.
Float images use the range [0, 1]; stored PNGs are 8-bit. Score fields use a
small binary format: an 8-byte header of width then height as little-endian
uint32, followed by row-major float32 samples.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

__all__ = [
    "bilinear_sample",
    "to_uint8",
    "to_float",
    "save_png",
    "load_png",
    "save_mask",
    "load_mask",
    "save_score_field",
    "load_score_field",
]


def bilinear_sample(image: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Sample ``image`` at fractional pixel coordinates with edge clamping.

    Args:
        image: array of shape (H, W) or (H, W, C), any float/int dtype.
        x, y: coordinate arrays of a common shape S; integer coordinates hit
            pixel centers.

    Returns:
        float array of shape S (or S + (C,)) of interpolated values.
    """
    img = np.asarray(image, dtype=float)
    h, w = img.shape[:2]
    x = np.clip(np.asarray(x, dtype=float), 0.0, w - 1.0)
    y = np.clip(np.asarray(y, dtype=float), 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    if img.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def to_uint8(image: np.ndarray) -> np.ndarray:
    """Quantize a float image in [0, 1] to uint8 with round-half-to-even."""
    return np.clip(np.rint(np.asarray(image, dtype=float) * 255.0), 0, 255).astype(
        np.uint8
    )


def to_float(image: np.ndarray) -> np.ndarray:
    """Promote a uint8 image to float in [0, 1]."""
    return np.asarray(image, dtype=float) / 255.0


def save_png(image: np.ndarray, path: str | Path) -> None:
    """Write an image as PNG; float inputs are quantized from [0, 1]."""
    arr = np.asarray(image)
    if arr.dtype != np.uint8:
        arr = to_uint8(arr)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr).save(str(path), format="PNG")


def load_png(path: str | Path) -> np.ndarray:
    """Read a PNG into a uint8 array (H, W) or (H, W, 3)."""
    with Image.open(str(path)) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB" if im.mode in ("RGBA", "P", "CMYK") else "L")
        return np.asarray(im)


def save_mask(mask: np.ndarray, path: str | Path) -> None:
    """Write a boolean mask as a single-channel PNG with values 0 and 255."""
    arr = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    save_png(arr, path)


def load_mask(path: str | Path) -> np.ndarray:
    """Read a 0/255 mask PNG back to a boolean array."""
    return load_png(path) > 127


def save_score_field(scores: np.ndarray, path: str | Path) -> None:
    """Write a 2D float score field (header: width, height as LE uint32)."""
    arr = np.ascontiguousarray(scores, dtype=np.float32)
    if arr.ndim != 2:
        raise ValueError(f"score field must be 2D, got shape {arr.shape}")
    h, w = arr.shape
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", w, h))
        fh.write(arr.tobytes())


def load_score_field(path: str | Path) -> np.ndarray:
    """Read a score field written by :func:`save_score_field`."""
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise ValueError(f"score field file too short: {path}")
    w, h = struct.unpack("<II", raw[:8])
    data = np.frombuffer(raw[8:], dtype=np.float32)
    if data.size != w * h:
        raise ValueError(
            f"score field payload has {data.size} samples, header says {w}x{h}"
        )
    return data.reshape(h, w).astype(np.float32)
