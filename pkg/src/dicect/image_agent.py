"""Image-prior agents: identity, total-variation denoising, Gaussian
smoothing, and delegation to an external agent process.

The TV denoiser solves argmin_x 1/2 ||x - v||^2 + lam * TV(x) with
Chambolle's dual projection iteration; boundaries are reflective (Neumann
differences), which preserves the image mean exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import NumericalError
from .tomo import Image

__all__ = [
    "IdentityAgent",
    "TVDenoiser",
    "GaussianSmoother",
    "ExternalImageAgent",
    "apply_image_agent",
    "tv_denoise",
]


def _grad(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # forward differences, zero across the far boundary
    gy = np.zeros_like(u)
    gx = np.zeros_like(u)
    gy[:-1, :] = u[1:, :] - u[:-1, :]
    gx[:, :-1] = u[:, 1:] - u[:, :-1]
    return gy, gx


def _div(py: np.ndarray, px: np.ndarray) -> np.ndarray:
    # negative adjoint of _grad; total divergence sums to zero
    out = np.zeros_like(py)
    out[0, :] = py[0, :]
    out[1:-1, :] = py[1:-1, :] - py[:-2, :]
    out[-1, :] = -py[-2, :]
    out[:, 0] += px[:, 0]
    out[:, 1:-1] += px[:, 1:-1] - px[:, :-2]
    out[:, -1] += -px[:, -2]
    return out


def tv_denoise(values: np.ndarray, lam: float, n_iters: int, tau: float = 0.249) -> np.ndarray:
    """Proximal map of lam * TV via Chambolle's dual projection, run for a
    fixed number of iterations from a zero dual state."""
    py = np.zeros_like(values)
    px = np.zeros_like(values)
    for _ in range(n_iters):
        gy, gx = _grad(_div(py, px) - values / lam)
        norm = np.sqrt(gy * gy + gx * gx)
        denom = 1.0 + tau * norm
        py = (py + tau * gy) / denom
        px = (px + tau * gx) / denom
    return values - lam * _div(py, px)


@dataclass(frozen=True)
class IdentityAgent:
    """Pass the image through unchanged."""

    def apply(self, image: Image) -> Image:
        return image.copy()


@dataclass(frozen=True)
class TVDenoiser:
    lambda_tv: float = 0.05
    inner_iters: int = 40

    def __post_init__(self):
        if self.lambda_tv <= 0.0:
            raise ValueError("lambda_tv must be positive")
        if self.inner_iters < 1:
            raise ValueError("inner_iters must be >= 1")

    def apply(self, image: Image) -> Image:
        return image.with_values(tv_denoise(image.values, self.lambda_tv, self.inner_iters))


@dataclass(frozen=True)
class GaussianSmoother:
    sigma_px: float = 1.0

    def __post_init__(self):
        if self.sigma_px <= 0.0:
            raise ValueError("sigma_px must be positive")

    def apply(self, image: Image) -> Image:
        return image.with_values(
            gaussian_filter(image.values, self.sigma_px, mode="reflect")
        )


@dataclass
class ExternalImageAgent:
    """Round-trip the image through an external agent process over the
    framed stdio protocol."""

    handle: "AgentHandle"  # noqa: F821 - lazy import keeps deps one-way

    def apply(self, image: Image) -> Image:
        from .protocol import image_request

        out = image_request(self.handle, image.values)
        if not np.all(np.isfinite(out)):
            raise NumericalError("external image agent returned non-finite values")
        return image.with_values(out)


def apply_image_agent(v2: Image, kind) -> Image:
    """Apply an image-prior agent; the output always has the input shape
    and finite values."""
    if not np.all(np.isfinite(v2.values)):
        raise ValueError("image contains non-finite values")
    out = kind.apply(v2)
    if out.values.shape != v2.values.shape:
        raise NumericalError(
            f"image agent changed shape: {v2.values.shape} -> {out.values.shape}"
        )
    return out
