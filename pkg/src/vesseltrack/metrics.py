"""Region and contour accuracy metrics.

Masks are boolean ``(height, width)`` arrays.  Contours are ``(n, 2)`` arrays
of ``(x, y)`` vertices of a closed polygon (no repeated closing vertex).
Contour distances are evaluated on the polygon densified so consecutive
points are at most one pixel apart.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import BothEmpty, DimensionMismatch, EmptyContour, EmptyMask, SelfIntersectingContour

_TOL = 1e-9


def _as_polygon(contour) -> np.ndarray:
    pts = np.asarray(contour, dtype=float).reshape(-1, 2)
    if len(pts) > 1 and np.array_equal(pts[0], pts[-1]):
        pts = pts[:-1]
    # drop consecutive duplicates
    keep = np.any(pts != np.roll(pts, 1, axis=0), axis=1) if len(pts) > 1 else np.ones(len(pts), bool)
    return pts[keep]


def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def is_simple(contour) -> bool:
    """True if the closed polygon has at least 3 distinct vertices and no crossing edges."""
    pts = _as_polygon(contour)
    n = len(pts)
    if n < 3 or len(np.unique(pts, axis=0)) < 3:
        return False
    p, q = pts, np.roll(pts, -1, axis=0)
    # adjacent edges folding back onto each other
    e0 = q - p
    e1 = np.roll(e0, -1, axis=0)
    cross = e0[:, 0] * e1[:, 1] - e0[:, 1] * e1[:, 0]
    if np.any((np.abs(cross) <= _TOL) & ((e0 * e1).sum(axis=1) < 0)):
        return False
    i, j = np.triu_indices(n, k=2)
    # edges sharing a vertex (first and last) are adjacent
    nonadj = ~((i == 0) & (j == n - 1))
    i, j = i[nonadj], j[nonadj]
    if i.size == 0:
        return True
    a, b, c, d = p[i], q[i], p[j], q[j]
    o1 = _orient(a[:, 0], a[:, 1], b[:, 0], b[:, 1], c[:, 0], c[:, 1])
    o2 = _orient(a[:, 0], a[:, 1], b[:, 0], b[:, 1], d[:, 0], d[:, 1])
    o3 = _orient(c[:, 0], c[:, 1], d[:, 0], d[:, 1], a[:, 0], a[:, 1])
    o4 = _orient(c[:, 0], c[:, 1], d[:, 0], d[:, 1], b[:, 0], b[:, 1])
    proper = (o1 * o2 < 0) & (o3 * o4 < 0)

    def on_seg(s0, s1, r, o):
        return (np.abs(o) <= _TOL) & (
            (np.minimum(s0[:, 0], s1[:, 0]) - _TOL <= r[:, 0])
            & (r[:, 0] <= np.maximum(s0[:, 0], s1[:, 0]) + _TOL)
            & (np.minimum(s0[:, 1], s1[:, 1]) - _TOL <= r[:, 1])
            & (r[:, 1] <= np.maximum(s0[:, 1], s1[:, 1]) + _TOL)
        )

    touching = on_seg(a, b, c, o1) | on_seg(a, b, d, o2) | on_seg(c, d, a, o3) | on_seg(c, d, b, o4)
    return not np.any(proper | touching)


def rasterize(contour, dims) -> np.ndarray:
    """Pixels whose centre lies inside or on the closed polygon ``contour``.

    ``dims`` is ``(width, height)``.  Interior membership uses an even-odd
    scanline fill over pixel-centre rows; lattice points lying exactly on an
    edge are added so the boundary is always included.

    Raises
    ------
    SelfIntersectingContour
        Fewer than three distinct vertices, or crossing edges.
    """
    width, height = int(dims[0]), int(dims[1])
    pts = _as_polygon(contour)
    if not is_simple(pts):
        raise SelfIntersectingContour("contour must be a simple polygon with at least 3 vertices")
    mask = np.zeros((height, width), dtype=bool)
    p, q = pts, np.roll(pts, -1, axis=0)

    ymin = max(0, int(np.ceil(pts[:, 1].min() - _TOL)))
    ymax = min(height - 1, int(np.floor(pts[:, 1].max() + _TOL)))
    for y in range(ymin, ymax + 1):
        # half-open rule: an edge covers rows in [min y, max y)
        y0, y1 = p[:, 1], q[:, 1]
        spans = np.minimum(y0, y1) <= y
        spans &= y < np.maximum(y0, y1)
        if not spans.any():
            continue
        t = (y - y0[spans]) / (y1[spans] - y0[spans])
        xs = np.sort(p[spans, 0] + t * (q[spans, 0] - p[spans, 0]))
        for xl, xr in zip(xs[0::2], xs[1::2]):
            lo = max(0, int(np.ceil(xl - _TOL)))
            hi = min(width - 1, int(np.floor(xr + _TOL)))
            if lo <= hi:
                mask[y, lo : hi + 1] = True

    # lattice points on edges
    for (x0, y0), (x1, y1) in zip(p, q):
        if abs(y1 - y0) <= _TOL:
            yi = round(y0)
            if abs(yi - y0) <= _TOL and 0 <= yi < height:
                lo = max(0, int(np.ceil(min(x0, x1) - _TOL)))
                hi = min(width - 1, int(np.floor(max(x0, x1) + _TOL)))
                if lo <= hi:
                    mask[yi, lo : hi + 1] = True
            continue
        ys = np.arange(np.ceil(min(y0, y1) - _TOL), np.floor(max(y0, y1) + _TOL) + 1)
        xs = x0 + (ys - y0) * (x1 - x0) / (y1 - y0)
        xi = np.rint(xs)
        on = np.abs(xs - xi) <= _TOL
        ys, xi = ys[on].astype(int), xi[on].astype(int)
        ok = (ys >= 0) & (ys < height) & (xi >= 0) & (xi < width)
        mask[ys[ok], xi[ok]] = True
    return mask


def dice(g, s) -> float:
    """``2 |G & S| / (|G| + |S|)``."""
    g = np.asarray(g, dtype=bool)
    s = np.asarray(s, dtype=bool)
    if g.shape != s.shape:
        raise DimensionMismatch(f"mask shapes differ: {g.shape} vs {s.shape}")
    total = int(g.sum()) + int(s.sum())
    if total == 0:
        raise BothEmpty("both masks are empty")
    return 2.0 * int(np.count_nonzero(g & s)) / total


def densify(contour, step: float = 1.0) -> np.ndarray:
    """Closed polygon with extra points so consecutive points are at most ``step`` apart.

    Original vertices are kept; each edge of length ``L`` is split into
    ``ceil(L / step)`` equal pieces.
    """
    pts = _as_polygon(contour)
    if len(pts) < 2:
        return pts
    nxt = np.roll(pts, -1, axis=0)
    lengths = np.hypot(*(nxt - pts).T)
    pieces = np.maximum(1, np.ceil(lengths / step - 1e-12).astype(int))
    out = []
    for a, b, k in zip(pts, nxt, pieces):
        t = np.arange(k)[:, None] / k
        out.append(a + t * (b - a))
    return np.concatenate(out)


def _directed(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each point of ``a`` to its nearest point of ``b``."""
    return cKDTree(b).query(a)[0]


def _prepare(g, s, step):
    g = np.asarray(g, dtype=float).reshape(-1, 2)
    s = np.asarray(s, dtype=float).reshape(-1, 2)
    if len(g) == 0 or len(s) == 0:
        raise EmptyContour("contour has no points")
    if step is not None:
        g, s = densify(g, step), densify(s, step)
    return g, s


def hausdorff_mm(g, s, pitch: float, step: float | None = 1.0) -> float:
    """Symmetric Hausdorff distance between contour point sets, in mm.

    ``step=None`` compares the given points as-is.
    """
    if pitch <= 0:
        raise ValueError("pitch must be > 0")
    g, s = _prepare(g, s, step)
    return float(max(_directed(g, s).max(), _directed(s, g).max())) * pitch


def mad_mm(g, s, pitch: float, step: float | None = 1.0) -> float:
    """Mean absolute deviation: the average of the two directed mean distances, in mm."""
    if pitch <= 0:
        raise ValueError("pitch must be > 0")
    g, s = _prepare(g, s, step)
    return 0.5 * float(_directed(g, s).mean() + _directed(s, g).mean()) * pitch


def edt_squared(mask) -> np.ndarray:
    """Exact squared Euclidean distance (integer) from each pixel to the nearest ``True`` pixel."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyMask("distance transform of an empty mask")
    idx = ndimage.distance_transform_edt(~mask, return_distances=False, return_indices=True)
    rows, cols = np.indices(mask.shape)
    return (idx[0] - rows) ** 2 + (idx[1] - cols) ** 2


def edt(mask) -> np.ndarray:
    """Euclidean distance (pixels) from each pixel to the nearest ``True`` pixel."""
    return np.sqrt(edt_squared(mask))


def dfpd_dfnd(g, s) -> tuple[float, float]:
    """Distance-weighted false-positive and false-negative scores.

    ``dfpd = log1p(sum(EDT(G) * S))`` and ``dfnd = log1p(sum(EDT(~G) * S))``.
    ``log1p`` keeps perfect segmentations finite.
    """
    g = np.asarray(g, dtype=bool)
    s = np.asarray(s, dtype=bool)
    if g.shape != s.shape:
        raise DimensionMismatch(f"mask shapes differ: {g.shape} vs {s.shape}")
    if not g.any():
        raise EmptyMask("ground-truth mask is empty")
    dfpd = float(np.log1p(edt(g)[s].sum()))
    if g.all():
        dfnd = 0.0
    else:
        dfnd = float(np.log1p(edt(~g)[s].sum()))
    return dfpd, dfnd


@dataclass
class FrameScore:
    frame_index: int
    dice: float
    hausdorff_mm: float
    mad_mm: float
    dfpd: float
    dfnd: float


METRIC_NAMES = ("dice", "hausdorff_mm", "mad_mm", "dfpd", "dfnd")


def score_frame(index: int, truth, result, dims, pitch: float) -> FrameScore:
    """All metrics for one frame; ``truth`` and ``result`` are contour arrays."""
    g = rasterize(truth, dims)
    s = rasterize(result, dims)
    dfpd, dfnd = dfpd_dfnd(g, s)
    return FrameScore(
        frame_index=index,
        dice=dice(g, s),
        hausdorff_mm=hausdorff_mm(truth, result, pitch),
        mad_mm=mad_mm(truth, result, pitch),
        dfpd=dfpd,
        dfnd=dfnd,
    )


def score_sequence(truth, results, dims, pitch: float) -> list[FrameScore]:
    """Score every result frame that has a truth contour with the same frame index."""
    by_index = {t.frame_index: t for t in truth}
    scores = []
    for r in results:
        t = by_index.get(r.frame_index)
        if t is not None:
            scores.append(score_frame(r.frame_index, t.points, r.points, dims, pitch))
    return scores


def summarize(scores) -> dict[str, tuple[float, float]]:
    """Mean and (population) standard deviation of each metric."""
    if not scores:
        return {}
    table = {name: np.array([asdict(s)[name] for s in scores]) for name in METRIC_NAMES}
    return {name: (float(v.mean()), float(v.std())) for name, v in table.items()}


def format_summary(summary) -> str:
    """``name  mean±std`` lines, three decimals as in the usual reporting style."""
    return "\n".join(f"{name:<14s}{m:.3f}±{s:.3f}" for name, (m, s) in summary.items())
