"""Ground-truth scenes: the Shepp-Logan head phantom and seeded random
ellipse scenes, rasterized with sub-pixel anti-aliasing."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tomo import Image

__all__ = ["shepp_logan", "EllipseScene", "random_ellipse_scene", "rasterize_scene"]

# Ellipse rows: (x0, y0, a, b, rotation_deg, additive value) on the unit
# square [-1, 1]^2. Contrast values follow the usual low-contrast variant so
# the summed phantom stays inside [0, 1].
SHEPP_LOGAN_ELLIPSES = [
    (0.0, 0.0, 0.69, 0.92, 0.0, 1.0),
    (0.0, -0.0184, 0.6624, 0.874, 0.0, -0.8),
    (0.22, 0.0, 0.11, 0.31, -18.0, -0.2),
    (-0.22, 0.0, 0.16, 0.41, 18.0, -0.2),
    (0.0, 0.35, 0.21, 0.25, 0.0, 0.1),
    (0.0, 0.1, 0.046, 0.046, 0.0, 0.1),
    (0.0, -0.1, 0.046, 0.046, 0.0, 0.1),
    (-0.08, -0.605, 0.046, 0.023, 0.0, 0.1),
    (0.0, -0.605, 0.023, 0.023, 0.0, 0.1),
    (0.06, -0.605, 0.023, 0.046, 0.0, 0.1),
]

# Variant with the lateral and bottom off-center ellipses replaced by
# exact mirror pairs, so the phantom is left-right symmetric.
SHEPP_LOGAN_SYMMETRIC_ELLIPSES = SHEPP_LOGAN_ELLIPSES[:2] + [
    (0.22, 0.0, 0.135, 0.36, -18.0, -0.2),
    (-0.22, 0.0, 0.135, 0.36, 18.0, -0.2),
] + SHEPP_LOGAN_ELLIPSES[4:7] + [
    (-0.07, -0.605, 0.046, 0.023, 0.0, 0.1),
    (0.0, -0.605, 0.023, 0.023, 0.0, 0.1),
    (0.07, -0.605, 0.046, 0.023, 0.0, 0.1),
]


def ellipse_sum_at(points_x, points_y, ellipses):
    """Sum of additive ellipse values at continuous points of [-1, 1]^2;
    the analytic counterpart of the rasterizer."""
    total = np.zeros(np.broadcast(points_x, points_y).shape)
    for x0, y0, a, b, phi_deg, val in ellipses:
        phi = np.radians(phi_deg)
        dx = points_x - x0
        dy = points_y - y0
        xr = dx * np.cos(phi) + dy * np.sin(phi)
        yr = -dx * np.sin(phi) + dy * np.cos(phi)
        total = total + val * ((xr / a) ** 2 + (yr / b) ** 2 <= 1.0)
    return total


def _rasterize(ellipses, n, subsample=4):
    """Rasterize additive ellipses on an n x n grid mapped to [-1, 1]^2,
    anti-aliased by subsample^2 sub-pixel samples."""
    half = n / 2.0
    idx = np.arange(n)
    vals = np.zeros((n, n))
    for a in range(subsample):
        for b in range(subsample):
            # sub-pixel sample positions in unit coordinates
            xs = (idx - (n - 1) / 2.0 + (a + 0.5) / subsample - 0.5) / half
            ys = (idx - (n - 1) / 2.0 + (b + 0.5) / subsample - 0.5) / half
            vals += ellipse_sum_at(xs[None, :], ys[:, None], ellipses)
    return vals / (subsample * subsample)


def shepp_logan(n: int, variant: str = "standard", pixel_size: float = 1.0) -> Image:
    """Shepp-Logan phantom on an n x n grid, values in [0, 1].

    variant "standard" is the usual 10-ellipse layout; "symmetric" swaps
    the two off-center bottom ellipses for a mirror pair so the result is
    exactly left-right symmetric.
    """
    if n < 16:
        raise ValueError("grid size must be >= 16")
    if variant == "standard":
        ellipses = SHEPP_LOGAN_ELLIPSES
    elif variant == "symmetric":
        ellipses = SHEPP_LOGAN_SYMMETRIC_ELLIPSES
    else:
        raise ValueError(f"unknown variant {variant!r}")
    # additive contrasts cancel to 0 only up to float rounding
    return Image.from_values(np.clip(_rasterize(ellipses, n), 0.0, 1.0), pixel_size)


@dataclass
class EllipseScene:
    """Additive ellipse scene: rows (x0, y0, a, b, rotation_deg, value) in
    unit coordinates, plus the grid size used for rasterization."""

    ellipses: list[tuple[float, float, float, float, float, float]]
    grid_size: int
    seed: int | None = None

    def __post_init__(self):
        for e in self.ellipses:
            if e[2] <= 0 or e[3] <= 0:
                raise ValueError("ellipse semi-axes must be positive")


def random_ellipse_scene(n: int, seed: int, n_ellipses: int | None = None) -> EllipseScene:
    """Seeded random scene: a large soft background ellipse plus a handful
    of smaller features, with values kept nonnegative under overlap."""
    rng = np.random.default_rng(seed)
    if n_ellipses is None:
        n_ellipses = int(rng.integers(3, 8))
    ellipses = [
        # background: large centered ellipse, mild value
        (
            float(rng.uniform(-0.05, 0.05)),
            float(rng.uniform(-0.05, 0.05)),
            float(rng.uniform(0.55, 0.75)),
            float(rng.uniform(0.55, 0.75)),
            float(rng.uniform(0.0, 180.0)),
            float(rng.uniform(0.15, 0.25)),
        )
    ]
    for _ in range(n_ellipses):
        a = float(rng.uniform(0.05, 0.28))
        b = float(rng.uniform(0.05, 0.28))
        rad = float(rng.uniform(0.0, 0.45))
        ang = float(rng.uniform(0.0, 2.0 * np.pi))
        # mostly positive features; occasional mild negative stays above the
        # background level so the scene remains nonnegative
        value = float(rng.uniform(0.05, 0.4))
        if rng.random() < 0.25:
            value = -float(rng.uniform(0.03, 0.12))
        ellipses.append(
            (
                rad * np.cos(ang),
                rad * np.sin(ang),
                a,
                b,
                float(rng.uniform(0.0, 180.0)),
                value,
            )
        )
    return EllipseScene(ellipses=ellipses, grid_size=n, seed=seed)


def rasterize_scene(scene: EllipseScene, pixel_size: float = 1.0) -> Image:
    vals = _rasterize(scene.ellipses, scene.grid_size)
    return Image.from_values(np.maximum(vals, 0.0), pixel_size)
