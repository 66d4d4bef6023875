"""Data-fidelity proximal agent: the weighted least-squares MAP step

    argmin_{x >= 0}  1/2 ||y - A x||^2_W  +  1/(2 sigma^2) ||v - x||^2

solved by conjugate gradient on the normal equations
(A^T W A + I/sigma^2) x = A^T W y + v/sigma^2, warm-started at v, with the
nonnegativity handled by clipping the CG solution.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .tomo import Geometry, Image, Sinogram, back_project, forward_project

__all__ = ["DataWeights", "DataAgentConfig", "build_weights", "prox_data", "ProxInfo"]


@dataclass
class DataWeights:
    """Diagonal data weights, one nonnegative entry per sinogram bin."""

    values: np.ndarray
    provenance: str = "uniform"

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0.0):
            raise ValueError("weights must be finite and nonnegative")
        if not np.any(self.values > 0.0):
            raise ValueError("weights must have at least one positive entry")


def build_weights(y: Sinogram, model: str = "uniform", gain: float = 1.0, floor: float = 1e-6) -> DataWeights:
    """Build weights from a sinogram.

    "uniform" gives all ones. "variance" uses a Poisson-like proxy where
    the variance grows with the signal: w_i = 1 / max(gain * y_i, floor).
    """
    if model == "uniform":
        return DataWeights(np.ones_like(y.values), "uniform")
    if model == "variance":
        if gain <= 0.0 or floor <= 0.0:
            raise ValueError("gain and floor must be positive")
        return DataWeights(
            1.0 / np.maximum(gain * y.values, floor),
            f"variance(gain={gain}, floor={floor})",
        )
    raise ValueError(f"unknown weight model {model!r}")


@dataclass
class DataAgentConfig:
    sigma2: float = 1e-8
    cg_iters: int = 20
    cg_tol: float = 0.0
    nonneg: bool = True

    def __post_init__(self):
        if self.sigma2 <= 0.0:
            raise ValueError("sigma2 must be positive")
        if self.cg_iters < 1:
            raise ValueError("cg_iters must be >= 1")
        if self.cg_tol < 0.0:
            raise ValueError("cg_tol must be nonnegative")


@dataclass
class ProxInfo:
    n_iters: int = 0
    rel_residual: float = 0.0
    breakdown: bool = False


def prox_data(
    v1: Image,
    y_consistent: Sinogram,
    W: DataWeights,
    cfg: DataAgentConfig,
    geom: Geometry,
    callback=None,
    return_info: bool = False,
):
    """Approximate proximal map of the weighted data term at v1.

    Runs cfg.cg_iters CG steps (or stops earlier once the relative
    residual drops below cfg.cg_tol), then clips to x >= 0 when
    cfg.nonneg. ``callback``, when given, receives each CG iterate as a
    raw array. On a breakdown (numerically zero curvature) the current
    iterate is returned and a warning is issued; ``return_info`` exposes
    the breakdown flag and residual.
    """
    if (v1.width, v1.height) != geom.image_size:
        raise ShapeError("v1 does not match geometry image size")
    if W.values.shape != y_consistent.values.shape:
        raise ShapeError("weights do not match sinogram shape")
    if not np.all(np.isfinite(v1.values)):
        raise ValueError("v1 contains non-finite values")

    wv = W.values
    inv_s2 = 1.0 / cfg.sigma2

    def apply_h(x_vals: np.ndarray) -> np.ndarray:
        img = v1.with_values(x_vals)
        ax = forward_project(img, geom)
        atw = back_project(ax.with_values(wv * ax.values), geom)
        return atw.values + inv_s2 * x_vals

    aty = back_project(y_consistent.with_values(wv * y_consistent.values), geom)
    b = aty.values + inv_s2 * v1.values

    x = v1.values.copy()
    r = b - apply_h(x)
    p = r.copy()
    rs = float(np.vdot(r, r))
    b_norm = float(np.linalg.norm(b)) or 1.0
    info = ProxInfo()
    if callback is not None:
        callback(x.copy())
    for it in range(cfg.cg_iters):
        if np.sqrt(rs) / b_norm <= cfg.cg_tol:
            break
        hp = apply_h(p)
        curv = float(np.vdot(p, hp))
        if curv <= 0.0 or not np.isfinite(curv):
            warnings.warn("CG breakdown: zero curvature direction; returning current iterate")
            info.breakdown = True
            break
        alpha = rs / curv
        x += alpha * p
        r -= alpha * hp
        rs_new = float(np.vdot(r, r))
        p = r + (rs_new / rs) * p
        rs = rs_new
        info.n_iters = it + 1
        if callback is not None:
            callback(x.copy())
    info.rel_residual = float(np.sqrt(rs) / b_norm)

    if cfg.nonneg:
        x = np.maximum(x, 0.0)
    out = v1.with_values(x)
    if return_info:
        return out, info
    return out
