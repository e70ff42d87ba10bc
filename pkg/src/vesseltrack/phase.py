"""Cauchy band-pass, monogenic signal and feature asymmetry.

Frequencies are measured in cycles per pixel on the DFT grid, so ``|w|``
ranges over ``[0, sqrt(0.5)]`` and the Cauchy gain peaks at ``|w| = u / w0``
(``0.1`` cycles/pixel, a 10-pixel wavelength, for ``w0 = 10, u = 1``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import fft

from .errors import DimensionMismatch


@dataclass(frozen=True)
class CauchyParams:
    w0: float = 10.0
    u: float = 1.0

    def __post_init__(self):
        if self.u < 1:
            raise ValueError("Cauchy exponent u must be >= 1")
        if self.w0 <= 0:
            raise ValueError("Cauchy centre frequency w0 must be > 0")


@dataclass(frozen=True)
class FAParams:
    threshold_mode: Literal["fixed", "rayleigh_estimate"] = "rayleigh_estimate"
    threshold: float = 0.0  # used when threshold_mode == "fixed"
    epsilon: float = 1e-6

    def __post_init__(self):
        if self.threshold_mode not in ("fixed", "rayleigh_estimate"):
            raise ValueError(f"unknown threshold mode {self.threshold_mode!r}")
        if not (0 <= self.threshold < 1):
            raise ValueError("fixed FA threshold must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")


def cauchy_radial_gain(radius, params: CauchyParams = CauchyParams()):
    """Cauchy gain as a function of the frequency magnitude ``|w|``."""
    radius = np.abs(np.asarray(radius, dtype=float))
    return radius**params.u * np.exp(-params.w0 * radius)


def cauchy_gain(w, params: CauchyParams = CauchyParams()):
    """Cauchy band-pass gain ``|w|^u * exp(-w0 * |w|)`` for frequency vectors ``w`` (last axis 2)."""
    w = np.asarray(w, dtype=float)
    if w.shape[-1:] != (2,):
        raise ValueError("frequency vectors need a trailing axis of length 2")
    return cauchy_radial_gain(np.hypot(w[..., 0], w[..., 1]), params)


def frequency_grid(shape) -> tuple[np.ndarray, np.ndarray]:
    """Horizontal and vertical DFT frequencies (cycles/pixel), broadcastable to ``shape``."""
    h, w = shape
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    return fx, fy


def monogenic_filters(shape, params: CauchyParams = CauchyParams()):
    """Cauchy gain and the two Riesz multipliers on the DFT grid of ``shape``.

    The Riesz multipliers are zero at DC and on the Nyquist column/row of
    their own axis, where ``i * w / |w|`` has no Hermitian partner; this keeps
    all three outputs exactly real.
    """
    fx, fy = frequency_grid(shape)
    radius = np.hypot(fx, fy)
    with np.errstate(invalid="ignore", divide="ignore"):
        rx = np.where((radius > 0) & (fx != -0.5), 1j * fx / radius, 0)
        ry = np.where((radius > 0) & (fy != -0.5), 1j * fy / radius, 0)
    return cauchy_radial_gain(radius, params), rx, ry


def monogenic(img, params: CauchyParams = CauchyParams(), workers: int | None = None):
    """Band-passed even part and the two Riesz odd parts of ``img``.

    Returns
    -------
    even, odd1, odd2 : ndarray
        ``odd1`` responds to horizontal structure (frequency along x),
        ``odd2`` to vertical.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or min(img.shape) < 8:
        raise DimensionMismatch(f"monogenic needs a 2D image of at least 8x8, got {img.shape}")
    gain, rx, ry = monogenic_filters(img.shape, params)
    spectrum = fft.fft2(img, workers=workers) * gain
    even = fft.ifft2(spectrum, workers=workers).real
    odd1 = fft.ifft2(spectrum * rx, workers=workers).real
    odd2 = fft.ifft2(spectrum * ry, workers=workers).real
    return even, odd1, odd2


def feature_asymmetry(even, odd1, odd2, params: FAParams = FAParams()) -> np.ndarray:
    """Feature asymmetry in ``[0, 1]``: high on step edges, ~0 on ridges and flat areas."""
    even = np.asarray(even, dtype=float)
    odd1 = np.asarray(odd1, dtype=float)
    odd2 = np.asarray(odd2, dtype=float)
    if not (even.shape == odd1.shape == odd2.shape):
        raise DimensionMismatch("even and odd components must share a shape")
    odd = np.hypot(odd1, odd2)
    amplitude = np.hypot(even, odd)
    if params.threshold_mode == "rayleigh_estimate":
        threshold = float(np.exp(np.mean(np.log(amplitude + params.epsilon))))
    else:
        threshold = params.threshold
    fa = np.maximum(0.0, odd - np.abs(even) - threshold) / (amplitude + params.epsilon)
    return np.clip(fa, 0.0, 1.0)


def fa_map(img, cauchy: CauchyParams = CauchyParams(), fa: FAParams = FAParams(), workers: int | None = None):
    return feature_asymmetry(*monogenic(img, cauchy, workers=workers), fa)
