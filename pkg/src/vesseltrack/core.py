"""Shared domain types.

Images are plain 2D ``float64`` numpy arrays indexed ``[row, col]``.  Points
are ``(x, y)`` pairs with ``x`` the column and ``y`` the row, pixel centres at
integer coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from .errors import DimensionMismatch, ImageTooSmall

SeedSource = Literal["ekf", "cluster", "manual"]

MIN_IMAGE_SIDE = 8


def as_image(img, min_side: int = MIN_IMAGE_SIDE) -> np.ndarray:
    """Return ``img`` as a C-contiguous float64 2D array, validating its shape."""
    arr = np.ascontiguousarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatch(f"expected a 2D image, got shape {arr.shape}")
    if arr.shape[0] < min_side or arr.shape[1] < min_side:
        raise ImageTooSmall(f"image {arr.shape[1]}x{arr.shape[0]} is smaller than {min_side}x{min_side}")
    return arr


@dataclass(frozen=True)
class EllipseParams:
    """Ellipse centre, semi-axes (``a >= b``) and orientation of the major axis."""

    cx: float
    cy: float
    a: float
    b: float
    theta: float = 0.0

    def __post_init__(self):
        if not (self.a >= self.b > 0):
            raise ValueError(f"ellipse needs a >= b > 0, got a={self.a}, b={self.b}")

    @classmethod
    def normalized(cls, cx, cy, a, b, theta) -> "EllipseParams":
        """Swap axes if needed and wrap ``theta`` into ``[-pi/2, pi/2)``."""
        if b > a:
            a, b = b, a
            theta = theta + np.pi / 2
        theta = (theta + np.pi / 2) % np.pi - np.pi / 2
        return cls(float(cx), float(cy), float(a), float(b), float(theta))

    @property
    def center(self) -> tuple[float, float]:
        return (self.cx, self.cy)

    def scaled(self, factor: float) -> "EllipseParams":
        return replace(self, a=self.a * factor, b=self.b * factor)

    def normalized_radius(self, x, y):
        """``((x'/a)^2 + (y'/b)^2) ** 0.5`` in the ellipse frame; 1 on the boundary."""
        c, s = np.cos(self.theta), np.sin(self.theta)
        dx = np.asarray(x, dtype=float) - self.cx
        dy = np.asarray(y, dtype=float) - self.cy
        u = (c * dx + s * dy) / self.a
        v = (-s * dx + c * dy) / self.b
        return np.hypot(u, v)

    def sample(self, n: int = 360) -> np.ndarray:
        """``n`` boundary points, counterclockwise, as an ``(n, 2)`` array of ``(x, y)``."""
        t = np.arange(n) * (2 * np.pi / n)
        c, s = np.cos(self.theta), np.sin(self.theta)
        u, v = self.a * np.cos(t), self.b * np.sin(t)
        return np.column_stack([self.cx + c * u - s * v, self.cy + s * u + c * v])

    def area(self) -> float:
        return float(np.pi * self.a * self.b)


@dataclass
class ContourResult:
    frame_index: int
    points: np.ndarray  # (n, 2) of (x, y), full-resolution pixels
    ellipse: EllipseParams
    seed_used: SeedSource
    seed: tuple[float, float] = field(default=(np.nan, np.nan))

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)


def to_full(points, factor: int) -> np.ndarray:
    """Map downsampled pixel coordinates to full resolution.

    A downsampled pixel centre ``k`` is the mean of source pixels
    ``k*f .. k*f + f - 1`` so it sits at ``(k + 0.5) * f - 0.5``.
    """
    return (np.asarray(points, dtype=float) + 0.5) * factor - 0.5


def to_down(points, factor: int) -> np.ndarray:
    return (np.asarray(points, dtype=float) + 0.5) / factor - 0.5


def ellipse_to_full(e: EllipseParams, factor: int) -> EllipseParams:
    cx, cy = to_full((e.cx, e.cy), factor)
    return EllipseParams(float(cx), float(cy), e.a * factor, e.b * factor, e.theta)


def inside_image(point, shape) -> bool:
    x, y = point
    return bool(np.isfinite(x) and np.isfinite(y) and 0 <= x <= shape[1] - 1 and 0 <= y <= shape[0] - 1)
