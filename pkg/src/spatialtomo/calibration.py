"""Beam centre and waist from direct-channel photocount frequencies.

For any state inside a fixed-order subspace the intensity moments obey
``<r> = r0`` and ``<|r|^2> = |r0|^2 + (N + 1) w^2 / 2``, independently of
the state, so both parameters follow from first and second moments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError
from .modes import PixelGrid


@dataclass(frozen=True)
class BeamGeometry:
    x0: float
    y0: float
    w: float
    order: int

    def to_json(self) -> dict:
        return {"x0": self.x0, "y0": self.y0, "w": self.w, "order": self.order}


def _as_image(freqs, grid: PixelGrid) -> np.ndarray:
    p = np.asarray(freqs, dtype=float)
    if p.shape == (grid.size,):
        p = p.reshape(grid.shape)
    if p.shape != grid.shape:
        raise ValueError(f"frequencies of shape {p.shape} do not fit grid {grid.shape}")
    total = p.sum()
    if total <= 0:
        raise ValueError("frequencies sum to zero")
    return p / total


def estimate_center(freqs, grid: PixelGrid) -> tuple[float, float]:
    """First moment of the (renormalised) frequency image."""
    p = _as_image(freqs, grid)
    return float(np.sum(p.sum(axis=0) * grid.x)), float(np.sum(p.sum(axis=1) * grid.y))


def estimate_waist(freqs, grid: PixelGrid, order: int, r0=None) -> float:
    """Waist from the second moment for a beam of known ``order``.

    ``r0`` defaults to the first-moment estimate. Raises GeometryError if
    the variance is not positive.
    """
    if order < 0:
        raise ValueError("order must be non-negative")
    p = _as_image(freqs, grid)
    if r0 is None:
        r0 = estimate_center(p, grid)
    second = float(np.sum(p.sum(axis=0) * grid.x**2) + np.sum(p.sum(axis=1) * grid.y**2))
    radicand = 2.0 / (order + 1) * (second - (r0[0] ** 2 + r0[1] ** 2))
    if not radicand > 0:
        raise GeometryError(f"second moment inconsistent with centre (radicand {radicand:.3e})")
    return math.sqrt(radicand)


def estimate_geometry(freqs, grid: PixelGrid, order: int) -> BeamGeometry:
    x0, y0 = estimate_center(freqs, grid)
    return BeamGeometry(x0, y0, estimate_waist(freqs, grid, order, (x0, y0)), order)


def counts_image(pixels, counts, grid: PixelGrid) -> np.ndarray:
    """Accumulate per-pixel counts into a ``(ny, nx)`` image."""
    pixels = np.asarray(pixels, dtype=int)
    if np.any(pixels < 0) or np.any(pixels >= grid.size):
        raise ValueError("pixel index outside the grid")
    img = np.bincount(pixels, weights=np.asarray(counts, float), minlength=grid.size)
    return img.reshape(grid.shape)

