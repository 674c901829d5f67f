"""Image comparison metrics: MSE (0-255 scale), DSSIM and the perceptual term."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .models.loss import perceptual_distance

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K = (0.01, 0.03)


@dataclass(frozen=True)
class Metrics:
    mse: float
    dssim: float
    perceptual: float

    def __iter__(self):
        return iter((self.mse, self.dssim, self.perceptual))


def _check(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if a.ndim != 3:
        raise ValueError(f"expected (H, W) or (H, W, C) images, got {a.shape}")
    return a, b


def mse_255(a, b) -> float:
    a, b = _check(a, b)
    return float(np.mean((255.0 * (a - b)) ** 2))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable correlation over the region where the window fits."""
    r = len(g) // 2
    out = ndimage.correlate1d(img, g, axis=0, mode="constant")
    out = ndimage.correlate1d(out, g, axis=1, mode="constant")
    return out[r:img.shape[0] - r, r:img.shape[1] - r]


def ssim(a, b, data_range: float = 1.0) -> float:
    """Mean SSIM over valid window positions and channels."""
    a, b = _check(a, b)
    size = min(SSIM_WINDOW, a.shape[0], a.shape[1])
    if size % 2 == 0:
        size -= 1
    g = gaussian_window(size)
    c1 = (SSIM_K[0] * data_range) ** 2
    c2 = (SSIM_K[1] * data_range) ** 2
    vals = []
    for ch in range(a.shape[2]):
        x, y = a[..., ch], b[..., ch]
        mx, my = _filter_valid(x, g), _filter_valid(y, g)
        sxx = _filter_valid(x * x, g) - mx * mx
        syy = _filter_valid(y * y, g) - my * my
        sxy = _filter_valid(x * y, g) - mx * my
        s = ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2))
        vals.append(s.mean())
    return float(np.mean(vals))


def dssim(a, b) -> float:
    return (1.0 - ssim(a, b)) / 2.0


def eval_metrics(predicted, target) -> Metrics:
    """(mse on 0-255, dssim, perceptual) for two images in [0, 1]."""
    a, b = _check(predicted, target)
    if a.shape[2] != 3:
        raise ValueError("perceptual term needs RGB images")
    return Metrics(mse_255(a, b), dssim(a, b), perceptual_distance(a, b))


def mean_metrics(predicted, targets) -> Metrics:
    rows = [tuple(eval_metrics(p, t)) for p, t in zip(predicted, targets)]
    if not rows:
        raise ValueError("no images to evaluate")
    return Metrics(*(float(v) for v in np.mean(rows, axis=0)))
