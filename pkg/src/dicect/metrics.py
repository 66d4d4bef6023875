"""Image quality metrics: RMSE, PSNR, and SSIM.

Values are computed in the images' native units. For reporting in
Hounsfield-like units the toolkit declares a fixed affine map
HU = HU_SLOPE * value + HU_INTERCEPT; RMSE converts by the slope alone.
"""
from __future__ import annotations

import numpy as np
from scipy.ndimage import correlate

from .errors import NumericalError, ShapeError
from .tomo import Image

__all__ = ["rmse", "psnr", "ssim", "HU_SLOPE", "HU_INTERCEPT", "to_hu"]

# reporting convention only: value 0 -> -1000 HU, value 1 -> 0 HU
HU_SLOPE = 1000.0
HU_INTERCEPT = -1000.0


def to_hu(value: float) -> float:
    return HU_SLOPE * value + HU_INTERCEPT


def _values(x) -> np.ndarray:
    return x.values if isinstance(x, Image) else np.asarray(x, dtype=np.float64)


def _pair(x, ref):
    a = _values(x)
    b = _values(ref)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def rmse(x, ref) -> float:
    """Root mean square error between two equally shaped images."""
    a, b = _pair(x, ref)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def psnr(x, ref, peak: float | None = None) -> float:
    """Peak signal-to-noise ratio in dB; peak defaults to the reference
    dynamic range. Identical images give +inf."""
    a, b = _pair(x, ref)
    if peak is None:
        peak = float(b.max() - b.min())
    if peak <= 0.0:
        raise NumericalError("psnr undefined: reference has zero dynamic range")
    err = rmse(a, b)
    if err == 0.0:
        return float("inf")
    return float(20.0 * np.log10(peak / err))


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def ssim(x, ref, data_range: float | None = None, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean local structural similarity with the usual 11x11 Gaussian
    window (std 1.5); data_range defaults to the reference dynamic range.
    Boundaries are handled by reflection."""
    a, b = _pair(x, ref)
    if data_range is None:
        data_range = float(b.max() - b.min())
    if data_range <= 0.0:
        raise NumericalError("ssim undefined: reference has zero dynamic range")
    win = _gaussian_window()
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2

    def smooth(v):
        return correlate(v, win, mode="reflect")

    mu_a = smooth(a)
    mu_b = smooth(b)
    var_a = smooth(a * a) - mu_a * mu_a
    var_b = smooth(b * b) - mu_b * mu_b
    cov = smooth(a * b) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))
