"""Deterministic resampling to the common output grid."""

from __future__ import annotations

import numpy as np


def _source_coords(target: int, source: int) -> np.ndarray:
    # half-pixel centers, the usual align_corners=False convention
    scale = source / target
    return (np.arange(target) + 0.5) * scale - 0.5


def resize_bilinear(arr: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resize of an H x W or H x W x C float array."""
    arr = np.asarray(arr, dtype=np.float64)
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[:, :, None]
    sh, sw, _ = arr.shape
    ys = np.clip(_source_coords(height, sh), 0, sh - 1)
    xs = np.clip(_source_coords(width, sw), 0, sw - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, sh - 1)
    x1 = np.minimum(x0 + 1, sw - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]
    top = arr[y0][:, x0] * (1 - wx) + arr[y0][:, x1] * wx
    bottom = arr[y1][:, x0] * (1 - wx) + arr[y1][:, x1] * wx
    out = top * (1 - wy) + bottom * wy
    return out[:, :, 0] if squeeze else out


def resize_nearest(arr: np.ndarray, height: int, width: int) -> np.ndarray:
    """Nearest-neighbor resize; the only safe choice for label masks."""
    arr = np.asarray(arr)
    sh, sw = arr.shape[:2]
    ys = np.clip(np.round(_source_coords(height, sh)).astype(int), 0, sh - 1)
    xs = np.clip(np.round(_source_coords(width, sw)).astype(int), 0, sw - 1)
    return arr[ys][:, xs]
