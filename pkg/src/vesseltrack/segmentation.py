"""Seeded vessel segmentation.

The chain is: radial search for the first feature-asymmetry peak along rays
from the seed, a direct least-squares ellipse fit to those peaks, a shrunken
binary elliptical level set, a short narrow-band DRLSE evolution on the
smoothed image, and sub-pixel extraction of the zero level set.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage
from skimage import measure

from .config import DrlseParams, SequenceConfig
from .core import EllipseParams, inside_image
from .errors import (
    DegenerateConfiguration,
    EllipseTooSmall,
    NoZeroCrossing,
    NumericalBlowup,
    SeedOutsideImage,
    TooFewBoundaryPoints,
    TooFewPoints,
)

MIN_BOUNDARY_POINTS = 5


def radial_search(fa, seed, n: int = 360, m: int = 100, fa_min: float = 0.3) -> np.ndarray:
    """First local maximum of ``fa`` along ``n`` rays of length ``m`` from ``seed``.

    Rays are sampled at unit steps with bilinear interpolation and stop at the
    image border.  A sample qualifies if it is strictly greater than both
    neighbours on the ray and at least ``fa_min``.  Returns an ``(k, 2)`` array
    of ``(x, y)`` points in increasing angle order.
    """
    fa = np.asarray(fa, dtype=float)
    if n < 8:
        raise ValueError("radial search needs n >= 8")
    if not inside_image(seed, fa.shape):
        raise SeedOutsideImage(f"seed {tuple(seed)} outside {fa.shape[1]}x{fa.shape[0]} image")
    h, w = fa.shape
    angles = np.arange(n) * (2 * np.pi / n)
    steps = np.arange(m + 1, dtype=float)
    xs = seed[0] + np.cos(angles)[:, None] * steps
    ys = seed[1] + np.sin(angles)[:, None] * steps
    valid = (xs >= 0) & (xs <= w - 1) & (ys >= 0) & (ys <= h - 1)
    # once a ray leaves the image it stays out
    valid = np.cumprod(valid, axis=1).astype(bool)
    vals = ndimage.map_coordinates(fa, [ys.ravel(), xs.ravel()], order=1, mode="nearest").reshape(xs.shape)
    vals = np.where(valid, vals, -np.inf)

    mid = vals[:, 1:-1]
    peak = (mid > vals[:, :-2]) & (mid > vals[:, 2:]) & (mid >= fa_min)
    hit = peak.any(axis=1)
    first = np.argmax(peak, axis=1) + 1
    rows = np.flatnonzero(hit)
    pts = np.column_stack([xs[rows, first[rows]], ys[rows, first[rows]]])
    if len(pts) < MIN_BOUNDARY_POINTS:
        raise TooFewBoundaryPoints(f"only {len(pts)} of {n} rays found a boundary")
    return pts


def _conic_to_params(conic) -> EllipseParams:
    A, B, C, D, E, F = conic
    if 4 * A * C - B * B <= 0:
        raise DegenerateConfiguration("fitted conic is not an ellipse")
    M = np.array([[2 * A, B], [B, 2 * C]])
    cx, cy = np.linalg.solve(M, [-D, -E])
    fc = A * cx * cx + B * cx * cy + C * cy * cy + D * cx + E * cy + F
    lam, vec = np.linalg.eigh(np.array([[A, B / 2], [B / 2, C]]))
    with np.errstate(divide="ignore", invalid="ignore"):
        axes_sq = -fc / lam
    if not np.all(np.isfinite(axes_sq)) or np.any(axes_sq <= 0):
        raise DegenerateConfiguration("fitted conic is imaginary or degenerate")
    major = int(np.argmax(axes_sq))
    a, b = np.sqrt(axes_sq[major]), np.sqrt(axes_sq[1 - major])
    theta = np.arctan2(vec[1, major], vec[0, major])
    return EllipseParams.normalized(cx, cy, a, b, theta)


def fit_ellipse(points) -> EllipseParams:
    """Direct least-squares ellipse fit (``4AC - B^2 = 1`` constraint).

    Uses the numerically stable block decomposition of the scatter matrix on
    centred, scaled coordinates.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 5:
        raise TooFewPoints(f"ellipse fit needs at least 5 points, got {len(pts)}")
    mean = pts.mean(axis=0)
    scale = np.sqrt(((pts - mean) ** 2).sum(axis=1).mean())
    if not np.isfinite(scale) or scale == 0:
        raise DegenerateConfiguration("all points coincide")
    x, y = ((pts - mean) / scale).T

    D1 = np.column_stack([x * x, x * y, y * y])
    D2 = np.column_stack([x, y, np.ones_like(x)])
    S1, S2, S3 = D1.T @ D1, D1.T @ D2, D2.T @ D2
    if np.linalg.cond(S3) > 1e12:
        raise DegenerateConfiguration("points are collinear")
    T = -np.linalg.solve(S3, S2.T)
    M = S1 + S2 @ T
    # premultiply by the inverse of the constraint matrix [[0,0,2],[0,-1,0],[2,0,0]]
    M = np.array([M[2] / 2, -M[1], M[0] / 2])
    _, vecs = np.linalg.eig(M)
    vecs = vecs.real
    cond = 4 * vecs[0] * vecs[2] - vecs[1] ** 2
    ok = np.flatnonzero(cond > 0)
    if ok.size == 0:
        raise DegenerateConfiguration("no ellipse-constrained solution")
    a1 = vecs[:, ok[np.argmax(cond[ok])]]
    conic = np.concatenate([a1, T @ a1])
    e = _conic_to_params(conic)
    return EllipseParams(mean[0] + scale * e.cx, mean[1] + scale * e.cy, scale * e.a, scale * e.b, e.theta)


def init_lsf(ellipse: EllipseParams, shrink: float, shape, c0: float = 2.0) -> np.ndarray:
    """Binary level set: ``-c0`` inside the ellipse scaled by ``shrink``, ``+c0`` outside."""
    if not (0 < shrink <= 1):
        raise ValueError("shrink must lie in (0, 1]")
    small = ellipse.scaled(shrink)
    if small.b < 2:
        raise EllipseTooSmall(f"shrunken ellipse semi-axes ({small.a:.2f}, {small.b:.2f}) below 2 px")
    yy, xx = np.mgrid[0 : shape[0], 0 : shape[1]]
    inside = small.normalized_radius(xx, yy) <= 1.0
    return np.where(inside, -c0, c0).astype(np.float64)


def edge_indicator(img, sigma: float = 1.5) -> np.ndarray:
    """``g = 1 / (1 + |grad(G_sigma * img)|^2)``."""
    smooth = ndimage.gaussian_filter(np.asarray(img, dtype=float), sigma, mode="nearest")
    gy, gx = _grad(smooth)
    return 1.0 / (1.0 + gx * gx + gy * gy)


def _neumann(phi: np.ndarray) -> np.ndarray:
    phi[[0, -1], :] = phi[[2, -3], :]
    phi[:, [0, -1]] = phi[:, [2, -3]]
    return phi


def _dx(a: np.ndarray) -> np.ndarray:
    """``np.gradient`` along the last axis (central inside, one-sided at the border)."""
    d = np.empty_like(a)
    np.subtract(a[..., 2:], a[..., :-2], out=d[..., 1:-1])
    d[..., 1:-1] *= 0.5
    d[..., 0] = a[..., 1] - a[..., 0]
    d[..., -1] = a[..., -1] - a[..., -2]
    return d


def _dy(a: np.ndarray) -> np.ndarray:
    """``np.gradient`` along the second-to-last axis."""
    d = np.empty_like(a)
    np.subtract(a[..., 2:, :], a[..., :-2, :], out=d[..., 1:-1, :])
    d[..., 1:-1, :] *= 0.5
    d[..., 0, :] = a[..., 1, :] - a[..., 0, :]
    d[..., -1, :] = a[..., -1, :] - a[..., -2, :]
    return d


def _grad(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return _dy(a), _dx(a)


def _laplacian(phi: np.ndarray) -> np.ndarray:
    """Five-point Laplacian with edge-replicated borders."""
    lap = -4.0 * phi
    lap[1:] += phi[:-1]
    lap[:-1] += phi[1:]
    lap[:, 1:] += phi[:, :-1]
    lap[:, :-1] += phi[:, 1:]
    lap[0] += phi[0]
    lap[-1] += phi[-1]
    lap[:, 0] += phi[:, 0]
    lap[:, -1] += phi[:, -1]
    return lap


def _dirac(phi: np.ndarray, eps: float) -> np.ndarray:
    d = np.zeros_like(phi)
    near = np.abs(phi) <= eps
    d[near] = (1.0 / (2 * eps)) * (1 + np.cos((np.pi / eps) * phi[near]))
    return d


def zero_crossings(phi: np.ndarray) -> np.ndarray:
    """Pixels with a 4-neighbour of the opposite sign (``phi < 0`` vs ``phi >= 0``)."""
    neg = phi < 0
    zc = np.zeros_like(neg)
    zc[:-1, :] |= neg[:-1, :] != neg[1:, :]
    zc[1:, :] |= neg[:-1, :] != neg[1:, :]
    zc[:, :-1] |= neg[:, :-1] != neg[:, 1:]
    zc[:, 1:] |= neg[:, :-1] != neg[:, 1:]
    return zc


def narrowband(phi: np.ndarray, halfwidth: int) -> np.ndarray:
    """Pixels within ``halfwidth`` (chessboard) of the zero level set."""
    zc = zero_crossings(phi)
    return ndimage.binary_dilation(zc, structure=np.ones((3, 3), bool), iterations=halfwidth)


def drlse_step(phi: np.ndarray, g: np.ndarray, vx: np.ndarray, vy: np.ndarray, params: DrlseParams) -> np.ndarray:
    """Right-hand side of the DRLSE gradient flow, ``d phi / d tau``."""
    phi_y, phi_x = _grad(phi)
    s = np.hypot(phi_x, phi_y)
    inv = 1.0 / (s + 1e-10)

    # double-well potential: p'(s)/s, taken as 1 where p'(s) or s vanish
    ps = np.where(s <= 1, np.sin((2 * np.pi) * s) * (1 / (2 * np.pi)), s - 1)
    dps = np.where(ps == 0, 1.0, ps) / np.where(s == 0, 1.0, s)
    dps -= 1.0

    # both divergences at once: [unit normal, (dp - 1) grad phi]
    fx = np.stack((phi_x * inv, dps * phi_x))
    fy = np.stack((phi_y * inv, dps * phi_y))
    div = _dx(fx) + _dy(fy)
    curvature, reg = div[0], div[1] + _laplacian(phi)

    edge = vx * fx[0] + vy * fy[0] + g * curvature
    return params.mu * reg + _dirac(phi, params.epsilon) * (params.lam * edge + params.alpha * g)


def drlse_evolve(phi0, img_b, params: DrlseParams = DrlseParams(), g: np.ndarray | None = None) -> np.ndarray:
    """Evolve ``phi0`` under the edge-based DRLSE flow.

    Runs ``params.iterations`` steps of length ``params.timestep``, each made
    of ``params.n_substeps`` explicit Euler sub-steps.  Only pixels within
    ``params.narrowband_halfwidth`` of the zero level set are updated; the
    band is recomputed at the start of every step.  Updates are Jacobi-style
    from the previous iterate, so the result is deterministic.
    """
    if params.iterations < 1:
        raise ValueError("iterations must be >= 1")
    phi = np.array(phi0, dtype=np.float64)
    if g is None:
        g = edge_indicator(img_b, params.edge_sigma)
    vy, vx = _grad(g)
    dt = params.sub_timestep
    for _ in range(params.iterations):
        _neumann(phi)
        band = narrowband(phi, params.narrowband_halfwidth)
        for _ in range(params.n_substeps):
            _neumann(phi)
            phi += dt * band * drlse_step(phi, g, vx, vy, params)
        if not np.all(np.isfinite(phi)):
            raise NumericalBlowup("level set became non-finite; check DRLSE parameters")
    return _neumann(phi)


def gradient_regularity(phi: np.ndarray, band: np.ndarray | None = None) -> float:
    """Mean ``|grad phi|`` over the pixels adjacent to the zero level set."""
    if band is None:
        band = zero_crossings(phi)
    gy, gx = np.gradient(phi)
    return float(np.hypot(gx, gy)[band].mean())


def _shoelace(pts: np.ndarray) -> float:
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def extract_contour(phi) -> np.ndarray:
    """Sub-pixel zero-crossing polygon of the largest ``phi < 0`` component.

    Returns ``(n, 2)`` ``(x, y)`` vertices without a repeated closing vertex,
    with positive signed (shoelace) area in ``(x, y)``.
    """
    phi = np.asarray(phi, dtype=float)
    neg = phi < 0
    if not neg.any() or neg.all():
        raise NoZeroCrossing("level set has no zero crossing")
    labels, count = ndimage.label(neg)
    if count > 1:
        sizes = np.bincount(labels.ravel())[1:]
        keep = int(np.argmax(sizes)) + 1
        phi = np.where(neg & (labels != keep), np.abs(phi) + 1e-6, phi)
    pad_value = max(float(np.abs(phi).max()), 1.0)
    padded = np.pad(phi, 1, mode="constant", constant_values=pad_value)
    contours = measure.find_contours(padded, 0.0)
    best, best_area = None, 0.0
    for c in contours:
        pts = c[:, ::-1] - 1.0  # (row, col) -> (x, y), undo padding
        if len(pts) > 1 and np.allclose(pts[0], pts[-1]):
            pts = pts[:-1]
        if len(pts) < 3:
            continue
        area = abs(_shoelace(pts))
        if area > best_area:
            best, best_area = pts, area
    if best is None:
        raise NoZeroCrossing("zero level set encloses no area")
    if _shoelace(best) < 0:
        best = best[::-1]
    return np.ascontiguousarray(best)


def consistent_boundary(points, seed, window: int = 15, tol: float = 0.25, min_abs: float = 1.5) -> np.ndarray:
    """Drop rays whose hit distance disagrees with their angular neighbours.

    A ray that misses a faint stretch of wall finds its first peak far
    outside the lumen (or on a speckle blob well inside it).  Such points are
    isolated in the distance-vs-angle profile, so each point is compared with
    the circular running median of ``window`` neighbouring rays and kept if
    it is within ``max(min_abs, tol * median)`` pixels of it.
    """
    points = np.asarray(points, dtype=float)
    r = np.hypot(points[:, 0] - seed[0], points[:, 1] - seed[1])
    size = min(window, len(r) if len(r) % 2 else len(r) - 1)
    if size < 3:
        return points
    ref = ndimage.median_filter(r, size=size, mode="wrap")
    keep = np.abs(r - ref) <= np.maximum(min_abs, tol * ref)
    if keep.sum() < MIN_BOUNDARY_POINTS:
        raise TooFewBoundaryPoints(f"only {int(keep.sum())} consistent boundary points")
    return points[keep]


def robust_fit(points, trim: float = 0.2) -> EllipseParams:
    """Ellipse fit followed by one refit without points far off the first fit.

    Points whose normalised radius differs from 1 by more than ``trim`` are
    dropped; the refit is skipped if that would leave too few points.
    """
    first = fit_ellipse(points)
    resid = np.abs(first.normalized_radius(points[:, 0], points[:, 1]) - 1.0)
    keep = resid <= trim
    if keep.all() or keep.sum() < max(MIN_BOUNDARY_POINTS + 1, len(points) // 2):
        return first
    try:
        return fit_ellipse(points[keep])
    except (DegenerateConfiguration, TooFewPoints):
        return first


@dataclass
class Segmentation:
    """Everything produced while segmenting one frame (downsampled coordinates)."""

    contour: np.ndarray
    ellipse: EllipseParams
    boundary_points: np.ndarray
    initial_ellipse: EllipseParams
    phi: np.ndarray  # over ``window`` only
    window: tuple[slice, slice]


def point_in_polygon(point, poly) -> bool:
    x, y = point
    px, py = poly[:, 0], poly[:, 1]
    qx, qy = np.roll(px, -1), np.roll(py, -1)
    crosses = (py > y) != (qy > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = px + (y - py) * (qx - px) / (qy - py)
    return bool(np.count_nonzero(crosses & (x < xint)) % 2)


def roi_slices(ellipse: EllipseParams, shape, margin: float = 1.6, pad: int = 6) -> tuple[slice, slice]:
    """Row/column slices of a box around ``ellipse`` grown by ``margin`` plus ``pad`` pixels."""
    reach = ellipse.a * margin + pad
    h, w = shape
    x0 = max(0, int(np.floor(ellipse.cx - reach)))
    x1 = min(w, int(np.ceil(ellipse.cx + reach)) + 1)
    y0 = max(0, int(np.floor(ellipse.cy - reach)))
    y1 = min(h, int(np.ceil(ellipse.cy + reach)) + 1)
    return slice(y0, y1), slice(x0, x1)


def segment(fa, img_b, seed, config: SequenceConfig = SequenceConfig()) -> Segmentation:
    """Segment the vessel containing ``seed`` (downsampled pixel coordinates).

    The level set is evolved only inside a box around the initial ellipse,
    which bounds the per-frame cost independently of the image size.
    """
    fa = np.asarray(fa, dtype=float)
    pts = radial_search(fa, seed, config.radial_n, config.radial_m, config.fa_min)
    if config.radial_outlier_tol is not None:
        pts = consistent_boundary(pts, seed, tol=config.radial_outlier_tol)
    initial = robust_fit(pts)
    rows, cols = roi_slices(initial, fa.shape)
    local = replace(initial, cx=initial.cx - cols.start, cy=initial.cy - rows.start)
    sub_shape = (rows.stop - rows.start, cols.stop - cols.start)
    if min(sub_shape) < 8:
        raise DegenerateConfiguration(f"segmentation window {sub_shape} too small")
    phi0 = init_lsf(local, config.shrink_factor, sub_shape, config.drlse.c0)
    phi = drlse_evolve(phi0, np.asarray(img_b, dtype=float)[rows, cols], config.drlse)
    contour = extract_contour(phi) + [cols.start, rows.start]
    if len(contour) < 8:
        raise DegenerateConfiguration(f"segmented contour has only {len(contour)} vertices")
    if not point_in_polygon(seed, contour):
        raise DegenerateConfiguration("segmented contour does not enclose the seed")
    return Segmentation(contour, fit_ellipse(contour), pts, initial, phi, (rows, cols))
