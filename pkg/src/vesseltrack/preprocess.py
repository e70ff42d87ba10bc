"""Downsampling, bilateral smoothing and variance-root patch clustering."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadKernel, ImageTooSmall


def downsample(img, factor: int) -> np.ndarray:
    """Block-mean downsampling; trailing rows/columns that do not fill a block are dropped."""
    img = np.asarray(img, dtype=np.float64)
    if factor < 1:
        raise ValueError("factor must be >= 1")
    h, w = img.shape
    if h < factor or w < factor:
        raise ImageTooSmall(f"{w}x{h} image cannot be downsampled by {factor}")
    if factor == 1:
        return img.copy()
    hh, ww = h // factor, w // factor
    blocks = img[: hh * factor, : ww * factor].reshape(hh, factor, ww, factor)
    return blocks.mean(axis=(1, 3))


def _check_kernel(kernel: int):
    if kernel < 3 or kernel % 2 == 0:
        raise BadKernel(f"kernel must be odd and >= 3, got {kernel}")


def _shifted(padded: np.ndarray, r: int, dy: int, dx: int, shape) -> np.ndarray:
    h, w = shape
    return padded[r + dy : r + dy + h, r + dx : r + dx + w]


def bilateral_filter(img, kernel: int = 5, sigma_spatial: float | None = None, sigma_range: float = 25.0) -> np.ndarray:
    """Edge-preserving smoothing with Gaussian spatial and range weights.

    Parameters
    ----------
    img : array_like
        2D image.
    kernel : int
        Odd window side length.
    sigma_spatial : float, optional
        Spatial Gaussian width in pixels, ``kernel / 2.5`` when omitted.
    sigma_range : float
        Range Gaussian width in intensity units.

    Borders are handled by clamping coordinates to the image.
    """
    _check_kernel(kernel)
    img = np.asarray(img, dtype=np.float64)
    if sigma_spatial is None:
        sigma_spatial = kernel / 2.5
    r = kernel // 2
    padded = np.pad(img, r, mode="edge")
    num = np.zeros_like(img)
    den = np.zeros_like(img)
    inv_s = -0.5 / sigma_spatial**2
    inv_r = -0.5 / sigma_range**2
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            nb = _shifted(padded, r, dy, dx, img.shape)
            wgt = np.exp((dx * dx + dy * dy) * inv_s + (nb - img) ** 2 * inv_r)
            num += wgt * nb
            den += wgt
    return num / den


def circular_offsets(kernel: int) -> list[tuple[int, int]]:
    """``(dy, dx)`` offsets of the disk inscribed in a ``kernel`` x ``kernel`` window."""
    _check_kernel(kernel)
    r = kernel // 2
    lim = (kernel / 2.0) ** 2
    return [(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1) if dy * dy + dx * dx <= lim]


def local_mean_var(img, kernel: int) -> tuple[np.ndarray, np.ndarray]:
    """Mean and variance over the circular neighbourhood, clamp-to-edge borders."""
    img = np.asarray(img, dtype=np.float64)
    offsets = circular_offsets(kernel)
    r = kernel // 2
    padded = np.pad(img, r, mode="edge")
    total = np.zeros_like(img)
    for dy, dx in offsets:
        total += _shifted(padded, r, dy, dx, img.shape)
    mean = total / len(offsets)
    var = np.zeros_like(img)
    for dy, dx in offsets:
        var += (_shifted(padded, r, dy, dx, img.shape) - mean) ** 2
    return mean, var / len(offsets)


@dataclass
class ClusterMap:
    """Patch assignment produced by :func:`cluster`.

    ``root_of`` and ``parent`` are flat (row-major) pixel indices.  ``parent``
    is the single minimum-variance link of each pixel; ``root_of`` is the fixed
    point reached by following it.  ``roots`` holds ``(x, y)`` coordinates,
    aligned with ``root_index`` and ``patch_mean``.
    """

    width: int
    height: int
    root_of: np.ndarray
    parent: np.ndarray
    root_index: np.ndarray
    patch_mean: np.ndarray
    variance: np.ndarray

    @property
    def roots(self) -> np.ndarray:
        y, x = np.divmod(self.root_index, self.width)
        return np.column_stack([x, y]).astype(float)

    @property
    def n_roots(self) -> int:
        return int(self.root_index.size)

    def patch_labels(self) -> np.ndarray:
        """Per-pixel patch number (index into ``roots``) as an image."""
        lookup = np.full(self.width * self.height, -1, dtype=np.int64)
        lookup[self.root_index] = np.arange(self.root_index.size)
        return lookup[self.root_of].reshape(self.height, self.width)

    def mean_image(self) -> np.ndarray:
        return self.patch_mean[self.patch_labels()]


def cluster(img, kernel: int = 3) -> ClusterMap:
    """Cluster pixels into homogeneous patches rooted at local variance minima.

    Every pixel links to the neighbour (itself included) of lowest local
    variance within the circular window.  Ties keep the pixel itself, then go
    to the lowest row-major index; links therefore only ever point to strictly
    lower variance and cannot cycle.
    """
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    _, var = local_mean_var(img, kernel)
    n = h * w
    idx = np.arange(n).reshape(h, w)

    best_var = var.copy()
    best_idx = idx.copy()
    for dy, dx in sorted(circular_offsets(kernel), key=lambda o: o[0] * w + o[1]):
        if dy == 0 and dx == 0:
            continue
        # neighbours outside the image are not candidates
        ys = slice(max(0, -dy), min(h, h - dy))
        xs = slice(max(0, -dx), min(w, w - dx))
        nys = slice(ys.start + dy, ys.stop + dy)
        nxs = slice(xs.start + dx, xs.stop + dx)
        cand_v = var[nys, nxs]
        cand_i = idx[nys, nxs]
        cur_v = best_var[ys, xs]
        cur_i = best_idx[ys, xs]
        self_is_best = cur_i == idx[ys, xs]
        better = (cand_v < cur_v) | ((cand_v == cur_v) & ~self_is_best & (cand_i < cur_i))
        cur_v[better] = cand_v[better]
        cur_i[better] = cand_i[better]

    parent = best_idx.ravel()
    root_of = parent.copy()
    while True:
        nxt = root_of[root_of]
        if np.array_equal(nxt, root_of):
            break
        root_of = nxt

    root_index = np.flatnonzero(root_of == np.arange(n))
    lookup = np.zeros(n, dtype=np.int64)
    lookup[root_index] = np.arange(root_index.size)
    labels = lookup[root_of]
    sums = np.bincount(labels, weights=img.ravel(), minlength=root_index.size)
    counts = np.bincount(labels, minlength=root_index.size)
    return ClusterMap(
        width=w,
        height=h,
        root_of=root_of,
        parent=parent,
        root_index=root_index,
        patch_mean=sums / counts,
        variance=var,
    )
