"""Independent brute-force reference implementations used by the tests.

Everything here is deliberately written as plain scalar loops over the
mathematical definitions, independent of the library's vectorized paths.
"""

import numpy as np

SOBEL_X = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]]
SOBEL_Y = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]]


def sobel_weights_oracle(plane: np.ndarray) -> np.ndarray:
    """Direct 3×3 convolution with replicate padding, scalar accumulation."""
    plane = np.asarray(plane, dtype=np.float64)
    h, w = plane.shape
    padded = np.pad(plane, 1, mode="edge")
    mag = np.zeros((h, w), dtype=np.float64)
    for i in range(h):
        for j in range(w):
            gx = 0.0
            gy = 0.0
            for di in range(3):
                for dj in range(3):
                    gx = gx + SOBEL_X[di][dj] * padded[i + di, j + dj]
                    gy = gy + SOBEL_Y[di][dj] * padded[i + di, j + dj]
            mag[i, j] = np.sqrt(gx * gx + gy * gy)
    peak = mag.max()
    if peak > 0:
        mag = mag / peak
    return mag


def luminance_oracle(pixels: np.ndarray) -> np.ndarray:
    pixels = np.asarray(pixels, dtype=np.float64)
    if pixels.ndim == 2:
        return pixels
    if pixels.shape[2] == 1:
        return pixels[:, :, 0]
    return 0.299 * pixels[:, :, 0] + 0.587 * pixels[:, :, 1] + 0.114 * pixels[:, :, 2]


def warp_oracle(pixels: np.ndarray, du: np.ndarray, dv: np.ndarray) -> np.ndarray:
    """Per-pixel four-neighbor bilinear summation with border clamping."""
    pixels = np.atleast_3d(np.asarray(pixels, dtype=np.float64))
    h, w, c = pixels.shape
    out = np.zeros_like(pixels)
    for i in range(h):
        for j in range(w):
            su = min(max(i + du[i, j], 0.0), h - 1.0)
            sv = min(max(j + dv[i, j], 0.0), w - 1.0)
            u0, v0 = int(np.floor(su)), int(np.floor(sv))
            for uq in (u0, u0 + 1):
                for vq in (v0, v0 + 1):
                    if uq > h - 1 or vq > w - 1:
                        continue
                    wu = 1.0 - abs(su - uq)
                    wv = 1.0 - abs(sv - vq)
                    if wu <= 0 or wv <= 0:
                        continue
                    out[i, j] += pixels[uq, vq] * wu * wv
    return out


def flow_loss_oracle(du: np.ndarray, dv: np.ndarray, eps: float = 1e-10) -> float:
    """Directed 4-neighborhood sum of √(‖Δu_p−Δu_q‖² + ‖Δv_p−Δv_q‖² + ε)."""
    h, w = du.shape
    total = 0.0
    for i in range(h):
        for j in range(w):
            for ni, nj in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)):
                if 0 <= ni < h and 0 <= nj < w:
                    total += np.sqrt((du[i, j] - du[ni, nj]) ** 2 + (dv[i, j] - dv[ni, nj]) ** 2 + eps)
    return total


def total_variation_oracle(m: np.ndarray) -> float:
    m = np.asarray(m, dtype=np.float64)
    h, w = m.shape
    total = 0.0
    for i in range(h):
        for j in range(w - 1):
            total += (m[i, j] - m[i, j + 1]) ** 2
    for i in range(h - 1):
        for j in range(w):
            total += (m[i, j] - m[i + 1, j]) ** 2
    return total


def gaussian_window_oracle(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    w = np.zeros((size, size), dtype=np.float64)
    for i in range(size):
        for j in range(size):
            w[i, j] = np.exp(-(((i - half) ** 2) + ((j - half) ** 2)) / (2 * sigma**2))
    return w / w.sum()


def ssim_oracle(
    x: np.ndarray, y: np.ndarray, size: int = 11, sigma: float = 1.5,
    c1: float = 0.01**2, c2: float = 0.03**2,
) -> float:
    """Windowed SSIM, loops over every interior window position and channel."""
    x = np.atleast_3d(np.asarray(x, dtype=np.float64))
    y = np.atleast_3d(np.asarray(y, dtype=np.float64))
    window = gaussian_window_oracle(size, sigma)
    h, w, chans = x.shape
    vals = []
    for c in range(chans):
        for i in range(h - size + 1):
            for j in range(w - size + 1):
                a = x[i : i + size, j : j + size, c]
                b = y[i : i + size, j : j + size, c]
                mu_a = (window * a).sum()
                mu_b = (window * b).sum()
                var_a = (window * a * a).sum() - mu_a**2
                var_b = (window * b * b).sum() - mu_b**2
                cov = (window * a * b).sum() - mu_a * mu_b
                vals.append(
                    ((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                    / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))
                )
    return float(np.mean(vals))


def kendall_tau_oracle(a: np.ndarray, b: np.ndarray) -> float:
    """Tau-b by explicit pair counting."""
    a, b = np.asarray(a).ravel(), np.asarray(b).ravel()
    n = len(a)
    concordant = discordant = ties_a = ties_b = 0
    for i in range(n):
        for j in range(i + 1, n):
            da, db = a[i] - a[j], b[i] - b[j]
            if da == 0 and db == 0:
                ties_a += 1
                ties_b += 1
            elif da == 0:
                ties_a += 1
            elif db == 0:
                ties_b += 1
            elif da * db > 0:
                concordant += 1
            else:
                discordant += 1
    n0 = n * (n - 1) / 2
    denom = np.sqrt((n0 - ties_a) * (n0 - ties_b))
    return (concordant - discordant) / denom


def iou_oracle(a: np.ndarray, b: np.ndarray, threshold: float) -> float:
    sa = {tuple(idx) for idx in np.argwhere(np.asarray(a) > threshold)}
    sb = {tuple(idx) for idx in np.argwhere(np.asarray(b) > threshold)}
    union = sa | sb
    if not union:
        return 1.0
    return len(sa & sb) / len(union)


def l1_distance_oracle(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    total = 0.0
    for va, vb in zip(a.ravel(), b.ravel()):
        total += abs(va - vb)
    return total / a.size


def finite_difference_gradient(f, x: np.ndarray, h: float = 1e-3) -> np.ndarray:
    """Central finite differences of a scalar function of an array."""
    g = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2 * h)
        it.iternext()
    return g
