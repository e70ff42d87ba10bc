"""Per-frame orchestration: preprocess, phase analysis, segment or track, emit.

All internal processing happens on the downsampled grid; emitted contours,
ellipses and seeds are mapped back to full-resolution pixel coordinates.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .config import SequenceConfig
from .core import ContourResult, as_image, ellipse_to_full, inside_image, to_down, to_full
from .errors import DimensionMismatch, SeedOutsideImage, TrackingLost, VesselTrackError
from .phase import CauchyParams, FAParams, fa_map
from .preprocess import ClusterMap, bilateral_filter, cluster, downsample
from .segmentation import segment
from .tracking import TrackerState, track_frame


@dataclass
class FrameProducts:
    """Intermediate images of one frame, downsampled grid."""

    downsampled: np.ndarray
    smoothed: np.ndarray
    fa: np.ndarray
    clusters: ClusterMap | None = None


def choose_cluster_kernel(major_axis_full: float, config: SequenceConfig) -> int:
    """3x3 for small vessels (diameter at most ``small_vessel_diameter_px`` full-res px), else 7x7."""
    if config.cluster_kernel is not None:
        return config.cluster_kernel
    return 3 if 2 * major_axis_full <= config.small_vessel_diameter_px else 7


def preprocess_frame(frame, config: SequenceConfig, cluster_kernel: int | None = None) -> FrameProducts:
    workers = config.threads if config.threads is not None else -1
    small = downsample(frame, config.downsample_factor)
    smooth = bilateral_filter(small, config.bilateral_kernel, config.sigma_spatial, config.bilateral_sigma_range)
    fa = fa_map(
        smooth,
        CauchyParams(config.cauchy_w0, config.cauchy_u),
        FAParams(config.fa_threshold_mode, config.fa_threshold, config.fa_epsilon),
        workers=workers,
    )
    cmap = cluster(smooth, cluster_kernel) if cluster_kernel is not None else None
    return FrameProducts(small, smooth, fa, cmap)


@dataclass
class SequenceTracker:
    """Stateful front end that consumes frames one at a time.

    >>> tracker = SequenceTracker(seed=(416, 220))
    >>> results = [tracker.process(f) for f in frames]  # doctest: +SKIP
    """

    seed: tuple[float, float]
    config: SequenceConfig = field(default_factory=SequenceConfig)
    state: TrackerState | None = None
    cluster_kernel: int | None = None
    shape: tuple[int, int] | None = None
    timings: list[float] = field(default_factory=list)
    last: FrameProducts | None = None

    def process(self, frame) -> ContourResult:
        t0 = time.perf_counter()
        frame = as_image(frame)
        f = self.config.downsample_factor
        if self.shape is None:
            if not inside_image(self.seed, frame.shape):
                raise SeedOutsideImage(f"seed {tuple(self.seed)} outside {frame.shape[1]}x{frame.shape[0]} frame")
            self.shape = frame.shape
        elif frame.shape != self.shape:
            raise DimensionMismatch(f"frame shape {frame.shape} differs from first frame {self.shape}")

        if self.state is None:
            result = self._first(frame, f)
        else:
            result = self._track(frame, f)
        self.timings.append(time.perf_counter() - t0)
        return result

    def _first(self, frame, f) -> ContourResult:
        products = preprocess_frame(frame, self.config)
        seed = tuple(float(v) for v in to_down(self.seed, f))
        h, w = products.fa.shape
        seed = (min(max(seed[0], 0.0), w - 1.0), min(max(seed[1], 0.0), h - 1.0))
        seg = segment(products.fa, products.smoothed, seed, self.config)
        self.state = TrackerState.start(seg.ellipse, seed, self.config.ekf)
        self.cluster_kernel = choose_cluster_kernel(seg.ellipse.a * f, self.config)
        self.last = products
        return self._emit(0, seg, seed, "manual")

    def _track(self, frame, f) -> ContourResult:
        products = preprocess_frame(frame, self.config, self.cluster_kernel)
        step = track_frame(self.state, products.clusters, products.fa, products.smoothed, self.config)
        self.state = step.state
        self.last = products
        return self._emit(step.state.frame_index, step.segmentation, step.state.seed, step.state.seed_source)

    def _emit(self, index, seg, seed, source) -> ContourResult:
        f = self.config.downsample_factor
        sx, sy = to_full(seed, f)
        return ContourResult(
            frame_index=index,
            points=to_full(seg.contour, f),
            ellipse=ellipse_to_full(seg.ellipse, f),
            seed_used=source,
            seed=(float(sx), float(sy)),
        )


def run_sequence(frames, seed, config: SequenceConfig = SequenceConfig(), tracker: SequenceTracker | None = None) -> list[ContourResult]:
    """Segment frame 0 from ``seed`` (full-resolution ``(x, y)``) and track through the rest.

    Raises :class:`TrackingLost` with ``frame_index`` set if a frame cannot be
    segmented from either candidate seed.
    """
    frames = list(frames)
    if not frames:
        return []
    shape = np.shape(frames[0])
    for i, fr in enumerate(frames):
        if np.shape(fr) != shape:
            raise DimensionMismatch(f"frame {i} has shape {np.shape(fr)}, expected {shape}")
    if not inside_image(seed, shape):
        raise SeedOutsideImage(f"seed {tuple(seed)} outside {shape[1]}x{shape[0]} frames")
    tracker = tracker or SequenceTracker(tuple(seed), config)
    results = []
    for i, fr in enumerate(frames):
        try:
            results.append(tracker.process(fr))
        except TrackingLost:
            raise
        except VesselTrackError as exc:
            if i == 0:
                raise
            raise TrackingLost(f"frame {i}: {exc}", frame_index=i) from exc
    return results
