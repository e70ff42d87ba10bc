"""Synthetic B-scan sequences with known lumen contours.

A frame is a piecewise-constant scene (dark elliptical lumen, bright wall
ring, mid-grey tissue) multiplied by independent Rayleigh speckle and
quantised to 8 bits.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np

from .core import ContourResult, EllipseParams
from .errors import VesselOutOfBounds

RAYLEIGH_UNIT_MEAN_SCALE = float(np.sqrt(2 / np.pi))


@dataclass(frozen=True)
class Still:
    pass


@dataclass(frozen=True)
class Drift:
    """Lateral probe drift of ``velocity`` px/frame (x, y)."""

    velocity: tuple[float, float] = (2.0, 0.0)


@dataclass(frozen=True)
class Compression:
    """Area-preserving squeeze: ``a`` grows by ``1 + amplitude*sin`` while ``b`` shrinks by the same factor."""

    amplitude: float = 0.15
    period: float = 25.0


@dataclass(frozen=True)
class Jump:
    frame_index: int = 50
    offset: tuple[float, float] = (40.0, 0.0)


Motion = Union[Still, Drift, Compression, Jump]


@dataclass(frozen=True)
class Speckle:
    """Multiplicative Rayleigh speckle; ``scale=None`` disables it."""

    scale: float | None = RAYLEIGH_UNIT_MEAN_SCALE

    @property
    def mean(self) -> float:
        return 1.0 if self.scale is None else self.scale * np.sqrt(np.pi / 2)


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple[int, int] = (832, 512)  # (width, height)
    frames: int = 100
    vessel: EllipseParams = EllipseParams(416.0, 220.0, 35.0, 35.0, 0.0)
    lumen_intensity: float = 25.0
    tissue_intensity: float = 140.0
    wall_contrast: float = 1.3
    wall_width: float = 12.0
    speckle: Speckle = Speckle()
    motion: tuple = (Drift(),)
    rng_seed: int = 0
    centered: bool = True  # shift the start so drift is symmetric about ``vessel`` centre

    def __post_init__(self):
        for name in ("lumen_intensity", "tissue_intensity"):
            v = getattr(self, name)
            if not (0 <= v <= 255):
                raise ValueError(f"{name} must lie in [0, 255]")
        if self.frames < 1:
            raise ValueError("frames must be >= 1")


def uhfus_spec(**kw) -> PhantomSpec:
    return replace(PhantomSpec(), **kw)


def hfus_spec(**kw) -> PhantomSpec:
    """280x534 frames, 250 per sequence, a 40 px (3.7 mm) vessel drifting slowly."""
    base = PhantomSpec(
        dims=(280, 534),
        frames=250,
        vessel=EllipseParams(140.0, 200.0, 22.0, 18.0, 0.0),
        wall_width=5.0,
        motion=(Drift((0.2, 0.0)), Compression(0.1, 50.0)),
    )
    return replace(base, **kw)


def vessel_at(spec: PhantomSpec, t: int) -> EllipseParams:
    """Lumen ellipse of frame ``t``."""
    v = spec.vessel
    cx, cy, a, b = v.cx, v.cy, v.a, v.b
    for m in spec.motion:
        if isinstance(m, Drift):
            vx, vy = m.velocity
            t0 = (spec.frames - 1) / 2 if spec.centered else 0.0
            cx += vx * (t - t0)
            cy += vy * (t - t0)
        elif isinstance(m, Compression):
            k = 1 + m.amplitude * np.sin(2 * np.pi * t / m.period)
            a, b = a * k, b / k
        elif isinstance(m, Jump):
            if t >= m.frame_index:
                cx += m.offset[0]
                cy += m.offset[1]
        elif not isinstance(m, Still):
            raise TypeError(f"unknown motion {m!r}")
    return EllipseParams.normalized(cx, cy, a, b, v.theta)


def _check_bounds(spec: PhantomSpec, e: EllipseParams, t: int):
    w, h = spec.dims
    reach = e.a + 2 * spec.wall_width
    if e.cx - reach < 0 or e.cy - reach < 0 or e.cx + reach > w - 1 or e.cy + reach > h - 1:
        raise VesselOutOfBounds(f"frame {t}: vessel {e} leaves the {w}x{h} field")


def render_scene(spec: PhantomSpec, e: EllipseParams) -> np.ndarray:
    """Noise-free scene for lumen ellipse ``e``."""
    w, h = spec.dims
    yy, xx = np.mgrid[0:h, 0:w]
    scene = np.full((h, w), spec.tissue_intensity, dtype=np.float64)
    outer = EllipseParams(e.cx, e.cy, e.a + spec.wall_width, e.b + spec.wall_width, e.theta)
    scene[outer.normalized_radius(xx, yy) <= 1] = min(255.0, spec.wall_contrast * spec.tissue_intensity)
    scene[e.normalized_radius(xx, yy) <= 1] = spec.lumen_intensity
    return scene


def frame_rng(spec: PhantomSpec, t: int) -> np.random.Generator:
    return np.random.default_rng([spec.rng_seed, t])


def render_frame(spec: PhantomSpec, t: int) -> np.ndarray:
    scene = render_scene(spec, vessel_at(spec, t))
    if spec.speckle.scale is not None:
        scene = scene * frame_rng(spec, t).rayleigh(spec.speckle.scale, size=scene.shape)
    return np.clip(np.rint(scene), 0, 255)


def truth_contour(spec: PhantomSpec, t: int, n: int = 360) -> ContourResult:
    e = vessel_at(spec, t)
    return ContourResult(t, e.sample(n), e, "manual", seed=e.center)


def generate(spec: PhantomSpec = PhantomSpec()) -> tuple[list[np.ndarray], list[ContourResult]]:
    """Render every frame of ``spec`` and its ground-truth lumen contour.

    Frames are 8-bit valued float64 arrays; each frame draws its speckle from
    an independent stream seeded by ``(rng_seed, frame_index)``.
    """
    for t in range(spec.frames):
        _check_bounds(spec, vessel_at(spec, t), t)
    frames = [render_frame(spec, t) for t in range(spec.frames)]
    truth = [truth_contour(spec, t) for t in range(spec.frames)]
    return frames, truth
