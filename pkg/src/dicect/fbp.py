"""Filtered backprojection: frequency-domain ramp filtering per view,
then interpolating backprojection through the projector adjoint.

Views are zero-padded to the next power of two at least twice the detector
count before filtering. The ramp response is the DFT of the band-limited
spatial ramp kernel rather than direct |nu| samples: the sampled ramp
underweights low frequencies and biases reconstructed values low by over
1%, which breaks the re-projection consistency cycle. On top of the ramp,
the response divides out the linear-interpolation transfer of the
projector pair (one hat kernel in the splat, one in the backprojection,
sinc^4 combined), clamped at 4x amplification; this keeps
forward-project-then-fbp close to the identity, which both sharpens
reconstructions and makes the consistency cycle idempotent. Each filtered
view is weighted by its angular spacing (pi / n_angles for a uniform
full-view scan), so a full scan of a constant object reproduces its
values.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .tomo import Geometry, Image, Sinogram, back_project

__all__ = ["FilterSpec", "fbp", "filter_sinogram"]

_KINDS = ("ram-lak", "hann")

# the projector splats and backprojects with linear-interpolation hats; the
# ramp divides out that sinc^4 transfer, clamped to avoid noise blow-up
_INTERP_COMP_POWER = 4
_INTERP_COMP_MAX = 4.0


@dataclass(frozen=True)
class FilterSpec:
    """Reconstruction filter: plain Ram-Lak ramp or Hann-windowed ramp,
    cut off at ``cutoff`` (fraction of the detector Nyquist frequency)."""

    kind: str = "ram-lak"
    cutoff: float = 1.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"filter kind must be one of {_KINDS}, got {self.kind!r}")
        if not 0.0 < self.cutoff <= 1.0:
            raise ValueError("cutoff must lie in (0, 1]")

    def response(self, n_pad: int, detector_spacing: float) -> np.ndarray:
        """Frequency response on the rfft grid of length n_pad: discrete
        ramp (DFT of the band-limited ramp kernel) times the interpolation
        compensation times the window."""
        resp = _ramp_response(n_pad, detector_spacing)
        freqs = np.fft.rfftfreq(n_pad, d=detector_spacing)
        sinc = np.sinc(freqs * detector_spacing)
        resp = resp * np.minimum(
            1.0 / np.maximum(sinc, 1e-6) ** _INTERP_COMP_POWER, _INTERP_COMP_MAX
        )
        nyquist = 0.5 / detector_spacing
        cut = self.cutoff * nyquist
        if self.kind == "hann":
            resp = resp * 0.5 * (1.0 + np.cos(np.pi * freqs / cut))
        resp[np.abs(freqs) > cut] = 0.0
        return resp


def _ramp_response(n_pad: int, ds: float) -> np.ndarray:
    """DFT of the discrete ramp kernel h: h[0] = 1/(4 ds^2),
    h[n] = -1/(pi n ds)^2 for odd n, 0 for even n."""
    m = np.minimum(np.arange(n_pad), n_pad - np.arange(n_pad))
    h = np.zeros(n_pad)
    h[0] = 1.0 / (4.0 * ds * ds)
    odd = m % 2 == 1
    h[odd] = -1.0 / (np.pi * m[odd] * ds) ** 2
    return np.real(np.fft.rfft(h)) * ds


def _pad_length(n_det: int) -> int:
    n = 1
    while n < 2 * n_det:
        n *= 2
    return n


def _angle_weights(angles: np.ndarray) -> np.ndarray:
    """Per-view angular spacing by the midpoint rule; reduces to
    pi / n_angles for a uniform scan over [0, pi)."""
    n = angles.size
    if n == 1:
        return np.array([np.pi])
    d = np.diff(angles)
    w = np.empty(n)
    w[1:-1] = 0.5 * (d[1:] + d[:-1])
    w[0] = d[0]
    w[-1] = d[-1]
    # uniform scans get exactly pi/n at the edges as well
    if np.allclose(d, d[0]):
        w[:] = d[0]
    return w


def filter_sinogram(sino: Sinogram, spec: FilterSpec) -> Sinogram:
    """Ramp-filter every view in the frequency domain."""
    n_det = sino.n_detectors
    n_pad = _pad_length(n_det)
    resp = spec.response(n_pad, sino.detector_spacing)
    spectra = np.fft.rfft(sino.values, n=n_pad, axis=1)
    filtered = np.fft.irfft(spectra * resp[None, :], n=n_pad, axis=1)[:, :n_det]
    return sino.with_values(filtered)


def fbp(sino: Sinogram, geom: Geometry, spec: FilterSpec | None = None) -> Image:
    """Reconstruct an image from projection data by filtered backprojection.

    Linear in the sinogram. Requires at least two views.
    """
    if spec is None:
        spec = FilterSpec()
    if not sino.matches(geom):
        raise ShapeError("sinogram does not match geometry")
    if geom.n_angles < 2:
        raise ValueError("fbp needs at least 2 views")
    filtered = filter_sinogram(sino, spec)
    weighted = filtered.with_values(
        filtered.values * _angle_weights(geom.angles)[:, None]
    )
    img = back_project(weighted, geom)
    # back_project carries pixel_area/detector_spacing; rescale so the
    # result is the plain angle-weighted interpolating backprojection
    img.values *= geom.detector_spacing / (geom.pixel_size * geom.pixel_size)
    return img
