"""Data-domain completion of limited-angle sinograms, plus projection
consistency enforcement by an inversion / re-projection cycle.

``complete`` always composes its output as observed rows passed through
bit-identically plus completer-synthesized rows on the missing views, so a
completer can never corrupt measured data. Synthesized rows are clipped at
zero before further use (projection data are nonnegative line integrals).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .fbp import FilterSpec, fbp
from .tomo import AngularMask, Geometry, Image, Sinogram, forward_project

__all__ = [
    "ZeroFill",
    "AngularInterpolation",
    "ExternalCompleter",
    "complete",
    "enforce_consistency",
    "moment_residual",
]


@dataclass(frozen=True)
class ZeroFill:
    """Leave missing views at zero."""

    def synthesize(self, sino: Sinogram, mask: AngularMask) -> np.ndarray:
        return np.zeros_like(sino.values)


@dataclass(frozen=True)
class AngularInterpolation:
    """Fill missing views by per-detector linear interpolation across the
    angular gap.

    The opposite-ray identity y(theta + pi, s) = y(theta, -s) supplies
    virtual observations beyond both ends of [0, pi), so a gap touching
    the boundary still has two boundary conditions. With a centered
    detector array the s -> -s flip is an exact array reversal.
    """

    def synthesize(self, sino: Sinogram, mask: AngularMask) -> np.ndarray:
        obs = mask.observed
        angles = sino.angles
        rows = sino.values[obs]
        ang_obs = angles[obs]
        flipped = rows[:, ::-1]
        ext_angles = np.concatenate([ang_obs - np.pi, ang_obs, ang_obs + np.pi])
        ext_rows = np.concatenate([flipped, rows, flipped], axis=0)
        order = np.argsort(ext_angles, kind="stable")
        ext_angles = ext_angles[order]
        ext_rows = ext_rows[order]

        out = sino.values.copy()
        missing = np.flatnonzero(~obs)
        if missing.size:
            tgt = angles[missing]
            hi = np.searchsorted(ext_angles, tgt, side="right")
            lo = hi - 1
            span = ext_angles[hi] - ext_angles[lo]
            t = np.where(span > 0, (tgt - ext_angles[lo]) / np.where(span > 0, span, 1.0), 0.0)
            out[missing] = (1.0 - t)[:, None] * ext_rows[lo] + t[:, None] * ext_rows[hi]
        return out


@dataclass
class ExternalCompleter:
    """Delegate synthesis to an external agent process speaking the framed
    stdio protocol; the full limited sinogram and mask are shipped out and
    a full-size estimate comes back."""

    handle: "AgentHandle"  # noqa: F821 - imported lazily to keep deps one-way

    def synthesize(self, sino: Sinogram, mask: AngularMask) -> np.ndarray:
        from .protocol import complete_request

        return complete_request(self.handle, sino.values, mask.observed)


def complete(y_limited: Sinogram, mask: AngularMask, completer) -> Sinogram:
    """Complete a limited-angle sinogram.

    Output rows on observed views are bit-identical to the input; missing
    views come from the completer (clipped at zero). The input must be
    zero on the missing views.
    """
    if mask.n_angles != y_limited.n_angles:
        raise ShapeError(
            f"mask length {mask.n_angles} != sinogram angles {y_limited.n_angles}"
        )
    if np.any(y_limited.values[~mask.observed] != 0.0):
        raise ValueError("masked rows of the limited sinogram must be zero")
    synthesized = np.asarray(completer.synthesize(y_limited, mask), dtype=np.float64)
    if synthesized.shape != y_limited.values.shape:
        raise ShapeError(
            f"completer returned shape {synthesized.shape}, "
            f"expected {y_limited.values.shape}"
        )
    out = y_limited.values.copy()
    out[~mask.observed] = np.maximum(synthesized[~mask.observed], 0.0)
    return y_limited.with_values(out)


def enforce_consistency(
    y_complete: Sinogram, geom: Geometry, spec: FilterSpec | None = None
) -> tuple[Sinogram, Image]:
    """Push a full-size sinogram into the range of the forward operator by
    reconstructing (FBP) and re-projecting.

    Returns (A * FBP(y), FBP(y)). The output sinogram is exactly the
    projection of an image, so its per-view mass is angle-invariant.
    """
    image = fbp(y_complete, geom, spec)
    consistent = forward_project(image, geom)
    return consistent, image


def moment_residual(sino: Sinogram) -> float:
    """Relative spread of per-view detector sums (the order-0
    Helgason-Ludwig consistency check): standard deviation across views
    over the mean absolute view sum. Exactly consistent data gives 0, an
    all-zero sinogram gives 0 by convention. For nonnegative data this is
    the plain relative standard deviation."""
    sums = sino.values.sum(axis=1)
    scale = np.abs(sums).mean()
    if scale == 0.0:
        return 0.0
    return float(sums.std() / scale)
