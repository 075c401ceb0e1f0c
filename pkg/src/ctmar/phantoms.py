"""Deterministic and randomized 2D test phantoms.

All phantoms live on the centered grid of :mod:`ctmar.tomo`. Rendering is
supersampled (default 4x4 per pixel) so ellipse boundaries carry partial
pixel coverage instead of staircase edges; that matches what a scanner's
finite resolution produces and is what makes projection/reconstruction
round trips meaningful at small image sizes.
"""

from __future__ import annotations

import math
from collections.abc import Sequence

import numpy as np

__all__ = ["ellipse_mask", "render_ellipses", "shepp_logan", "random_phantom"]

# (value, semi-axis a, semi-axis b, x0, y0, rotation degrees), unit square coords.
_SHEPP_LOGAN_ELLIPSES = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0),
    (0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0),
    (0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0),
    (0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0),
    (0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0),
)


def _unit_grid(size: int) -> tuple[np.ndarray, np.ndarray]:
    """x, y coordinate rows/columns scaled so the image spans [-1, 1]."""
    c = (size - 1) / 2.0
    half = size / 2.0
    coords = (np.arange(size, dtype=np.float64) - c) / half
    return coords[None, :], coords[:, None]


def _mask_on_grid(
    x: np.ndarray,
    y: np.ndarray,
    center: tuple[float, float],
    axes: tuple[float, float],
    angle_deg: float,
) -> np.ndarray:
    if axes[0] <= 0 or axes[1] <= 0:
        raise ValueError("ellipse axes must be positive")
    phi = math.radians(angle_deg)
    xr = (x - center[0]) * math.cos(phi) + (y - center[1]) * math.sin(phi)
    yr = -(x - center[0]) * math.sin(phi) + (y - center[1]) * math.cos(phi)
    return (xr / axes[0]) ** 2 + (yr / axes[1]) ** 2 <= 1.0


def ellipse_mask(
    size: int,
    center: tuple[float, float],
    axes: tuple[float, float],
    angle_deg: float = 0.0,
) -> np.ndarray:
    """Boolean ellipse mask in unit-square coordinates (no anti-aliasing)."""
    x, y = _unit_grid(size)
    return _mask_on_grid(x, y, center, axes, angle_deg)


def _downsample(values: np.ndarray, size: int, sub: int) -> np.ndarray:
    if sub == 1:
        return values
    return values.reshape(size, sub, size, sub).mean(axis=(1, 3))


def render_ellipses(
    size: int,
    ops: Sequence[tuple[str, float, tuple[float, float], tuple[float, float], float]],
    supersample: int = 4,
) -> np.ndarray:
    """Apply (mode, value, center, axes, angle) ops on a supersampled canvas.

    ``mode`` is "add" or "set"; ops apply in order, then the canvas is
    box-averaged down to ``size``.
    """
    if supersample < 1:
        raise ValueError("supersample must be >= 1")
    fine = size * supersample
    x, y = _unit_grid(fine)
    values = np.zeros((fine, fine), dtype=np.float64)
    for mode, value, center, axes, angle in ops:
        mask = _mask_on_grid(x, y, center, axes, angle)
        if mode == "add":
            values[mask] += value
        elif mode == "set":
            values[mask] = value
        else:
            raise ValueError(f"unknown mode {mode!r}")
    return _downsample(values, size, supersample)


def shepp_logan(size: int, scale: float = 1.0, supersample: int = 4) -> np.ndarray:
    """Modified Shepp-Logan phantom, values in [0, scale]."""
    ops = [("add", v, (x0, y0), (a, b), phi) for v, a, b, x0, y0, phi in _SHEPP_LOGAN_ELLIPSES]
    values = render_ellipses(size, ops, supersample)
    np.clip(values, 0.0, None, out=values)
    return values * scale


def random_phantom(
    size: int,
    rng: np.random.Generator,
    water: float = 0.0193,
    bone: float = 0.0480,
    supersample: int = 4,
) -> np.ndarray:
    """Randomized anatomy-like slice in attenuation units (per mm).

    A soft-tissue body ellipse with smooth internal contrast, organ-scale
    ellipses, an occasional air pocket, and several bone-like structures.
    Everything stays inside the body outline.
    """
    body_a = rng.uniform(0.78, 0.9)
    body_b = rng.uniform(0.62, 0.8)
    body_angle = rng.uniform(-10.0, 10.0)

    def _inside_point(margin: float) -> tuple[float, float]:
        r = math.sqrt(rng.uniform(0.0, 1.0)) * (1.0 - margin)
        phi = rng.uniform(0.0, 2.0 * math.pi)
        return (r * body_a * 0.8 * math.cos(phi), r * body_b * 0.8 * math.sin(phi))

    ops: list[tuple[str, float, tuple[float, float], tuple[float, float], float]] = [
        ("set", water, (0.0, 0.0), (body_a, body_b), body_angle)
    ]

    # smooth soft-tissue contrast so the networks have anatomy to preserve
    for _ in range(rng.integers(3, 7)):
        ax = rng.uniform(0.1, 0.35)
        ops.append(
            (
                "add",
                rng.uniform(-0.12, 0.12) * water,
                _inside_point(0.35),
                (ax, ax * rng.uniform(0.5, 1.0)),
                rng.uniform(0.0, 180.0),
            )
        )

    # organ-scale structures
    for _ in range(rng.integers(1, 4)):
        ax = rng.uniform(0.12, 0.3)
        ops.append(
            (
                "add",
                rng.uniform(-0.25, 0.2) * water,
                _inside_point(0.4),
                (ax, ax * rng.uniform(0.55, 1.0)),
                rng.uniform(0.0, 180.0),
            )
        )

    # occasional air-like pocket
    if rng.uniform() < 0.35:
        ax = rng.uniform(0.05, 0.12)
        ops.append(
            (
                "set",
                water * rng.uniform(0.1, 0.4),
                _inside_point(0.5),
                (ax, ax * rng.uniform(0.6, 1.0)),
                rng.uniform(0.0, 180.0),
            )
        )

    # bone: a spine-like block near the posterior midline plus small dots
    spine_ax = rng.uniform(0.08, 0.12)
    ops.append(
        (
            "set",
            bone * rng.uniform(0.92, 1.05),
            (rng.uniform(-0.08, 0.08), -body_b * rng.uniform(0.5, 0.65)),
            (spine_ax, spine_ax * rng.uniform(0.7, 1.0)),
            rng.uniform(-15.0, 15.0),
        )
    )
    for _ in range(rng.integers(1, 4)):
        ax = rng.uniform(0.025, 0.06)
        ops.append(
            (
                "set",
                bone * rng.uniform(0.85, 1.05),
                _inside_point(0.3),
                (ax, ax * rng.uniform(0.6, 1.0)),
                rng.uniform(0.0, 180.0),
            )
        )

    fine = size * supersample
    x, y = _unit_grid(fine)
    canvas = np.zeros((fine, fine), dtype=np.float64)
    body = _mask_on_grid(x, y, (0.0, 0.0), (body_a, body_b), body_angle)
    for mode, value, center, axes, angle in ops:
        mask = _mask_on_grid(x, y, center, axes, angle)
        if mode == "add":
            canvas[mask] += value
        else:
            canvas[mask] = value
    canvas[~body] = 0.0
    np.clip(canvas, 0.0, None, out=canvas)
    return _downsample(canvas, size, supersample)
