"""Sobel edge-weight matrices that gate where attack perturbation lands.

The edge map is computed once from the benign image and stays fixed for the
whole attack; gating uses either the continuous normalized magnitude or its
binarized form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Image
from .errors import InvalidThreshold

# 3×3 Sobel kernels, row-major. Responses are accumulated tap by tap in this
# exact order so the result is bit-identical to a scalar-loop convolution.
SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = np.array([[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]])

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass
class EdgeWeightMatrix:
    """H×W edge weights; ``continuous`` in [0,1] or ``binary`` in {0,1}."""

    weights: np.ndarray
    mode: str = "continuous"
    delta: float | None = None


def _to_luminance(pixels: np.ndarray) -> np.ndarray:
    px = np.asarray(pixels, dtype=np.float64)
    if px.ndim == 2:
        return px
    if px.shape[2] == 1:
        return px[:, :, 0]
    r, g, b = LUMA_WEIGHTS
    return r * px[:, :, 0] + g * px[:, :, 1] + b * px[:, :, 2]


def _conv3x3_replicate(plane: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    padded = np.pad(plane, 1, mode="edge")
    acc = np.zeros((h, w), dtype=np.float64)
    for di in range(3):
        for dj in range(3):
            acc = acc + kernel[di, dj] * padded[di : di + h, dj : dj + w]
    return acc


def sobel_edge_weights(x: Image | np.ndarray) -> EdgeWeightMatrix:
    """Normalized Sobel gradient magnitude of the image's luminance.

    Replicate padding at the borders; the magnitude is divided by its
    maximum so the strongest edge has weight 1 (an all-uniform image maps
    to all zeros).
    """
    pixels = x.pixels if isinstance(x, Image) else np.asarray(x)
    plane = _to_luminance(pixels)
    gx = _conv3x3_replicate(plane, SOBEL_X)
    gy = _conv3x3_replicate(plane, SOBEL_Y)
    mag = np.sqrt(gx * gx + gy * gy)
    peak = mag.max()
    if peak > 0:
        mag = mag / peak
    return EdgeWeightMatrix(weights=mag, mode="continuous")


def binarize_edges(edge: EdgeWeightMatrix, delta: float) -> EdgeWeightMatrix:
    """Threshold continuous weights: e ≤ delta → 0, else 1."""
    if not 0.0 <= delta <= 1.0:
        raise InvalidThreshold(f"delta must be in [0, 1], got {delta}")
    binary = np.where(edge.weights <= delta, 0.0, 1.0)
    return EdgeWeightMatrix(weights=binary, mode="binary", delta=delta)


def broadcast_to_channels(edge: EdgeWeightMatrix, channels: int) -> np.ndarray:
    """Repeat the H×W weights across C channels (H×W×C)."""
    return np.repeat(edge.weights[:, :, None], channels, axis=2)
