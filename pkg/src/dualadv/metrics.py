"""Quantitative evaluation: success rates, map distances, image quality, timing."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.stats import kendalltau

from .core import Image
from .errors import EmptyInput, ShapeError
from .interpreters.common import AttributionMap

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


def _values(m) -> np.ndarray:
    return m.values if isinstance(m, AttributionMap) else np.asarray(m)


def _pixels(x) -> np.ndarray:
    return x.pixels if isinstance(x, Image) else np.atleast_3d(np.asarray(x))


def attack_success_rate(results) -> float:
    if len(results) == 0:
        raise EmptyInput("no attack results")
    return sum(1 for r in results if r.success) / len(results)


def misclassification_confidence(results):
    """Mean target-class probability over successful attacks; None if none."""
    confs = [r.confidence for r in results if r.success]
    if not confs:
        return None
    return float(np.mean(confs))


def l1_map_distance(m, m0) -> float:
    """Mean absolute difference between two [0,1]-normalized maps."""
    a, b = _values(m).astype(np.float64), _values(m0).astype(np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"map shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a - b)))


def iou(m, m0, bin_threshold: float = 0.5) -> float:
    """Jaccard index of the supports after binarizing at the threshold.

    Both supports empty counts as identical (1.0).
    """
    a = _values(m) > bin_threshold
    b = _values(m0) > bin_threshold
    if a.shape != b.shape:
        raise ShapeError(f"map shapes differ: {a.shape} vs {b.shape}")
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size, dtype=np.float64) - half
    g1 = np.exp(-(coords**2) / (2.0 * sigma**2))
    w = np.outer(g1, g1)
    return w / w.sum()


def _ssim_channel(a: np.ndarray, b: np.ndarray, window: np.ndarray) -> float:
    k = window.shape[0]
    wa = sliding_window_view(a, (k, k))
    wb = sliding_window_view(b, (k, k))
    mu_a = np.einsum("ijkl,kl->ij", wa, window)
    mu_b = np.einsum("ijkl,kl->ij", wb, window)
    ex_aa = np.einsum("ijkl,kl->ij", wa * wa, window)
    ex_bb = np.einsum("ijkl,kl->ij", wb * wb, window)
    ex_ab = np.einsum("ijkl,kl->ij", wa * wb, window)
    var_a = ex_aa - mu_a**2
    var_b = ex_bb - mu_b**2
    cov = ex_ab - mu_a * mu_b
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_a**2 + mu_b**2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return float(np.mean(num / den))


def _ssim_global(a: np.ndarray, b: np.ndarray) -> float:
    mu_a, mu_b = a.mean(), b.mean()
    var_a, var_b = a.var(), b.var()
    cov = ((a - mu_a) * (b - mu_b)).mean()
    return float(
        ((2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2))
        / ((mu_a**2 + mu_b**2 + SSIM_C1) * (var_a + var_b + SSIM_C2))
    )


def ssim(x, x_hat) -> float:
    """Mean structural similarity for unit-range images.

    11×11 Gaussian-weighted local statistics (σ=1.5) averaged over all fully
    interior window positions and channels; images smaller than the window
    fall back to the global-statistics formula.
    """
    a, b = _pixels(x).astype(np.float64), _pixels(x_hat).astype(np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"image shapes differ: {a.shape} vs {b.shape}")
    if min(a.shape[0], a.shape[1]) < SSIM_WINDOW:
        return float(np.mean([_ssim_global(a[:, :, c], b[:, :, c]) for c in range(a.shape[2])]))
    window = gaussian_window()
    return float(np.mean([_ssim_channel(a[:, :, c], b[:, :, c], window) for c in range(a.shape[2])]))


def noise_rate(x, x_hat) -> float:
    """1 − SSIM, with SSIM clamped to [0, 1] so the result stays a rate."""
    return 1.0 - min(1.0, max(0.0, ssim(x, x_hat)))


def kendall_tau(m, m0):
    """Kendall tau-b over flattened pixel ranks; None for a constant map."""
    a, b = _values(m).ravel(), _values(m0).ravel()
    if a.shape != b.shape:
        raise ShapeError("maps must have equal length")
    if np.all(a == a.flat[0]) or np.all(b == b.flat[0]):
        return None
    tau = kendalltau(a, b).statistic
    return None if np.isnan(tau) else float(tau)


def timing(results) -> float:
    if len(results) == 0:
        raise EmptyInput("no attack results")
    return float(np.mean([r.wall_time_s for r in results]))


@dataclass
class MetricReport:
    """Aggregates plus one row of per-image metrics."""

    attack_success_rate: float
    mean_misclassification_confidence: float | None
    mean_l1_map_distance: float | None
    mean_iou: float | None
    mean_noise_rate: float
    mean_wall_time_s: float
    rows: list[dict] = field(default_factory=list)


def build_report(
    images: list[Image],
    benign_maps: list[AttributionMap | None],
    results,
    iou_threshold: float = 0.5,
) -> MetricReport:
    rows = []
    for im, m0, r in zip(images, benign_maps, results):
        has_maps = m0 is not None and r.m_adv is not None
        rows.append(
            {
                "id": im.id,
                "framework": r.framework,
                "method": r.method,
                "interpreter": r.interpreter,
                "success": r.success,
                "y_t": r.target_class,
                "confidence": r.confidence,
                "l1": l1_map_distance(r.m_adv, m0) if has_maps else None,
                "iou": iou(r.m_adv, m0, iou_threshold) if has_maps else None,
                "ssim": ssim(im, r.x_adv),
                "noise_rate": noise_rate(im, r.x_adv),
                "time_s": r.wall_time_s,
            }
        )
    l1s = [row["l1"] for row in rows if row["l1"] is not None]
    ious = [row["iou"] for row in rows if row["iou"] is not None]
    return MetricReport(
        attack_success_rate=attack_success_rate(results),
        mean_misclassification_confidence=misclassification_confidence(results),
        mean_l1_map_distance=float(np.mean(l1s)) if l1s else None,
        mean_iou=float(np.mean(ious)) if ious else None,
        mean_noise_rate=float(np.mean([row["noise_rate"] for row in rows])),
        mean_wall_time_s=timing(results),
        rows=rows,
    )
