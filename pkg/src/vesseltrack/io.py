"""Frame loading, contour files and overlay images.

Contour file format
-------------------
Plain text, one record per line, whitespace separated.  Lines starting with
``#`` are header/comments.  The header carries the format tag and, when
known, the frame size as ``# dims WIDTH HEIGHT``.  Record columns::

    frame_index seed_used seed_x seed_y cx cy a b theta n x_0 y_0 ... x_{n-1} y_{n-1}

All coordinates are full-resolution pixels (x = column, y = row).  Floats
are written with ``repr`` so reading back reproduces them exactly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError
from skimage.draw import line

from .core import ContourResult, EllipseParams
from .errors import EmptyDirectory, IoFailure, MixedDimensions, UnsupportedPixelFormat

FORMAT_TAG = "# vesseltrack contours v1"
COLUMNS = "# columns: frame_index seed_used seed_x seed_y cx cy a b theta n x0 y0 ... x(n-1) y(n-1)"
IMAGE_SUFFIXES = (".pgm", ".pnm", ".png")

ESTIMATE_RGB = (255, 220, 0)
TRUTH_RGB = (0, 200, 255)
SEED_RGB = (255, 0, 255)


def list_frames(directory) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise IoFailure(f"{d} is not a directory")
    files = sorted(p for p in d.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise EmptyDirectory(f"no .pgm/.png frames in {d}")
    return files


def read_frame(path) -> np.ndarray:
    """One 8-bit grayscale frame as float64, intensities unchanged."""
    try:
        with Image.open(path) as im:
            if im.mode != "L":
                raise UnsupportedPixelFormat(f"{path}: pixel format {im.mode!r}, expected 8-bit grayscale")
            return np.asarray(im, dtype=np.float64)
    except (OSError, UnidentifiedImageError) as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


def load_sequence(directory) -> list[np.ndarray]:
    """All frames of ``directory`` in lexicographic file-name order."""
    frames = []
    for p in list_frames(directory):
        f = read_frame(p)
        if frames and f.shape != frames[0].shape:
            h0, w0 = frames[0].shape
            raise MixedDimensions(f"{p.name} is {f.shape[1]}x{f.shape[0]}, earlier frames are {w0}x{h0}")
        frames.append(f)
    return frames


def write_frames(frames, directory, prefix: str = "frame_") -> list[Path]:
    """Write frames as binary 8-bit PGM files ``frame_0000.pgm`` ..."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    width = max(4, len(str(len(frames) - 1)))
    paths = []
    for i, f in enumerate(frames):
        p = d / f"{prefix}{i:0{width}d}.pgm"
        data = np.clip(np.rint(np.asarray(f, dtype=float)), 0, 255).astype(np.uint8)
        try:
            Image.fromarray(data).save(p, format="PPM")
        except OSError as exc:
            raise IoFailure(f"cannot write {p}: {exc}") from exc
        paths.append(p)
    return paths


def _record(r: ContourResult) -> str:
    e = r.ellipse
    head = [str(int(r.frame_index)), str(r.seed_used)]
    nums = [r.seed[0], r.seed[1], e.cx, e.cy, e.a, e.b, e.theta]
    pts = np.asarray(r.points, dtype=float).ravel()
    return " ".join(head + [repr(float(v)) for v in nums] + [str(len(r.points))] + [repr(float(v)) for v in pts])


def write_contours(results, path, dims=None) -> None:
    """Write ``results`` in the contour file format; ``dims`` is ``(width, height)``."""
    lines = [FORMAT_TAG, COLUMNS]
    if dims is not None:
        lines.append(f"# dims {int(dims[0])} {int(dims[1])}")
    lines.extend(_record(r) for r in results)
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_contours(path) -> tuple[list[ContourResult], tuple[int, int] | None]:
    """Parse a contour file; returns the records and the ``dims`` header (or None)."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    results, dims = [], None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line_ = raw.strip()
        if not line_:
            continue
        if line_.startswith("#"):
            parts = line_[1:].split()
            if len(parts) == 3 and parts[0] == "dims":
                dims = (int(parts[1]), int(parts[2]))
            continue
        tok = line_.split()
        try:
            index, source = int(tok[0]), tok[1]
            sx, sy, cx, cy, a, b, theta = (float(v) for v in tok[2:9])
            n = int(tok[9])
            coords = np.array([float(v) for v in tok[10:]], dtype=float)
        except (IndexError, ValueError) as exc:
            raise IoFailure(f"{path}:{lineno}: malformed record") from exc
        if coords.size != 2 * n:
            raise IoFailure(f"{path}:{lineno}: expected {n} vertices, found {coords.size / 2:g}")
        results.append(ContourResult(index, coords.reshape(n, 2), EllipseParams(cx, cy, a, b, theta), source, (sx, sy)))
    return results, dims


def polyline_segments(points) -> list[tuple[tuple[int, int], tuple[int, int]]]:
    """The ``k`` closing segments of a ``k``-vertex contour, endpoints rounded to pixels."""
    pts = np.rint(np.asarray(points, dtype=float)).astype(int)
    return [(tuple(pts[i]), tuple(pts[(i + 1) % len(pts)])) for i in range(len(pts))]


def _draw_polyline(rgb, points, color):
    h, w = rgb.shape[:2]
    for (x0, y0), (x1, y1) in polyline_segments(points):
        rr, cc = line(y0, x0, y1, x1)
        ok = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
        rgb[rr[ok], cc[ok]] = color


def _draw_seed(rgb, seed, color, radius: int = 3):
    if not np.all(np.isfinite(seed)):
        return
    h, w = rgb.shape[:2]
    x, y = (int(round(float(v))) for v in seed)
    for dx in range(-radius, radius + 1):
        for px, py in ((x + dx, y), (x, y + dx)):
            if 0 <= px < w and 0 <= py < h:
                rgb[py, px] = color


def render_overlay(frame, result: ContourResult, truth: ContourResult | None = None) -> np.ndarray:
    """8-bit RGB image of ``frame`` with the contour, its seed and optionally the truth contour."""
    gray = np.clip(np.rint(np.asarray(frame, dtype=float)), 0, 255).astype(np.uint8)
    rgb = np.repeat(gray[:, :, None], 3, axis=2)
    if truth is not None:
        _draw_polyline(rgb, truth.points, TRUTH_RGB)
    _draw_polyline(rgb, result.points, ESTIMATE_RGB)
    _draw_seed(rgb, result.seed, SEED_RGB)
    return rgb


def save_rgb(rgb, path) -> None:
    try:
        Image.fromarray(np.asarray(rgb, dtype=np.uint8)).save(path, format="PNG")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
