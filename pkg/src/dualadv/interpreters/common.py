"""Shared attribution-map machinery: the map type, normalization, masks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from scipy.ndimage import gaussian_filter

from ..core import Image
from ..errors import ShapeError


@dataclass
class AttributionMap:
    """H×W per-pixel importance scores in [0, 1]."""

    values: np.ndarray
    interpreter: str = ""
    source_image_id: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise ShapeError(f"attribution map must be H×W, got {self.values.shape}")


def minmax_normalize_t(m: torch.Tensor) -> torch.Tensor:
    """Per-sample min-max normalization of N×H×W maps; constant maps → 0."""
    flat = m.flatten(1)
    lo = flat.min(dim=1).values.view(-1, 1, 1)
    hi = flat.max(dim=1).values.view(-1, 1, 1)
    return (m - lo) / torch.clamp(hi - lo, min=1e-12)


def minmax_normalize(m: np.ndarray) -> np.ndarray:
    lo, hi = float(np.min(m)), float(np.max(m))
    if hi - lo <= 0:
        return np.zeros_like(m, dtype=np.float32)
    return ((m - lo) / (hi - lo)).astype(np.float32)


def total_variation(m: np.ndarray) -> float:
    """Σ(m[i,j]−m[i,j+1])² + Σ(m[i,j]−m[i+1,j])² over all valid index pairs."""
    m = np.asarray(m, dtype=np.float64)
    horiz = np.sum((m[:, :-1] - m[:, 1:]) ** 2)
    vert = np.sum((m[:-1, :] - m[1:, :]) ** 2)
    return float(horiz + vert)


def total_variation_t(m: torch.Tensor) -> torch.Tensor:
    """Torch twin of :func:`total_variation`, per-sample over N×H×W."""
    horiz = ((m[:, :, :-1] - m[:, :, 1:]) ** 2).flatten(1).sum(dim=1)
    vert = ((m[:, :-1, :] - m[:, 1:, :]) ** 2).flatten(1).sum(dim=1)
    return horiz + vert


def blend(x: Image | np.ndarray, m: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Φ(x, m) = x⊗m + r⊗(1−m); masks broadcast across channels."""
    px = x.pixels if isinstance(x, Image) else np.asarray(x)
    r = np.asarray(r)
    m = np.asarray(m)
    if m.ndim == 2 and px.ndim == 3:
        m = m[:, :, None]
    if px.shape != r.shape:
        raise ShapeError(f"image {px.shape} vs reference {r.shape}")
    return px * m + r * (1.0 - m)


def blur_reference(x: np.ndarray, sigma: float | None = None) -> np.ndarray:
    """Gaussian-blurred copy of the image, the deletion reference for Φ.

    Default σ follows 10 px at 224-pixel inputs, scaled with image size.
    """
    x = np.asarray(x, dtype=np.float32)
    if sigma is None:
        sigma = max(1.0, 10.0 * min(x.shape[0], x.shape[1]) / 224.0)
    out = np.empty_like(x)
    for c in range(x.shape[2]):
        out[:, :, c] = gaussian_filter(x[:, :, c], sigma=sigma, mode="nearest")
    return out
