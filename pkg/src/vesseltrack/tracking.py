"""Frame-to-frame seed propagation.

Two candidate seeds are produced per frame: the EKF prediction of the lumen
centre, and the darkest cluster root near the previous cluster seed.  The
cluster seed wins only when the two disagree by more than the predicted
semi-major axis.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .config import EkfParams, SequenceConfig
from .core import EllipseParams, inside_image
from .errors import NoRootsInRegion, SingularInnovation, TrackingLost, VesselTrackError
from .preprocess import ClusterMap
from .segmentation import Segmentation, segment


@dataclass
class TrackerState:
    """EKF state ``[cx, cy, a, b]`` plus the seeds that produced it (downsampled px)."""

    x: np.ndarray
    x_prev: np.ndarray
    P: np.ndarray
    seed: tuple[float, float]
    seed_source: str
    cluster_seed: tuple[float, float]
    frame_index: int = 0

    @classmethod
    def start(cls, ellipse: EllipseParams, seed, params: EkfParams = EkfParams()) -> "TrackerState":
        """Stationary start: the previous state equals the first measurement."""
        x0 = state_vector(ellipse)
        return cls(x0, x0.copy(), np.array(params.P0, dtype=float), tuple(seed), "manual", tuple(seed))


def state_vector(e: EllipseParams) -> np.ndarray:
    return np.array([e.cx, e.cy, e.a, e.b], dtype=float)


def ekf_predict(state: TrackerState, params: EkfParams = EkfParams()) -> tuple[np.ndarray, np.ndarray]:
    """Second-order motion model ``A1 x_t + A2 x_{t-1}``; covariance propagates through ``A1`` only.

    Evaluated as ``x_t + (A1 - I)(x_t - x_{t-1}) + (A1 + A2 - I) x_{t-1}``,
    which is the same quantity but makes a constant state an exact fixed
    point in floating point whenever ``A1 + A2 = I``.
    """
    eye = np.eye(4)
    x_pred = state.x + (params.A1 - eye) @ (state.x - state.x_prev) + (params.A1 + params.A2 - eye) @ state.x_prev
    P_pred = params.A1 @ state.P @ params.A1.T + params.Q
    return x_pred, P_pred


def ekf_update(state: TrackerState, x_pred, P_pred, z, params: EkfParams = EkfParams()) -> TrackerState:
    """Kalman correction with an identity observation model.

    Returns a new state whose ``x_prev`` is the incoming ``state.x``; the seed
    fields are carried over unchanged.
    """
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("measurement must be finite")
    S = P_pred + params.R
    try:
        if np.linalg.cond(S) > 1e14:
            raise np.linalg.LinAlgError
        K = np.linalg.solve(S.T, P_pred.T).T  # P_pred @ inv(S)
    except np.linalg.LinAlgError as exc:
        raise SingularInnovation("innovation covariance is singular") from exc
    x = x_pred + K @ (z - x_pred)
    if x[3] > x[2]:
        # near-circular vessels: keep the semi-major axis first
        x[2], x[3] = x[3], x[2]
    P = (np.eye(4) - K) @ P_pred
    P = 0.5 * (P + P.T)
    return replace(state, x=x, x_prev=state.x.copy(), P=P)


def cluster_seed_search(cmap: ClusterMap, prev_seed, a_pred: float, b_pred: float) -> tuple[float, float]:
    """Darkest-patch root inside the axis-aligned ellipse ``(1.5 a, b)`` around ``prev_seed``.

    Roots on the ellipse boundary count as inside.  Ties in patch mean go to
    the root closest to ``prev_seed``, then to the lowest row-major index.
    """
    if a_pred <= 0 or b_pred <= 0:
        raise ValueError("predicted axes must be positive")
    if not inside_image(prev_seed, (cmap.height, cmap.width)):
        raise NoRootsInRegion(f"previous cluster seed {tuple(prev_seed)} is outside the image")
    roots = cmap.roots
    dx = roots[:, 0] - prev_seed[0]
    dy = roots[:, 1] - prev_seed[1]
    inside = (dx / (1.5 * a_pred)) ** 2 + (dy / b_pred) ** 2 <= 1.0
    cand = np.flatnonzero(inside)
    if cand.size == 0:
        raise NoRootsInRegion(f"no cluster roots within ({1.5 * a_pred:.1f}, {b_pred:.1f}) of {tuple(prev_seed)}")
    # lexsort: last key is primary
    order = np.lexsort((cmap.root_index[cand], np.hypot(dx[cand], dy[cand]), cmap.patch_mean[cand]))
    best = cand[order[0]]
    return (float(roots[best, 0]), float(roots[best, 1]))


def select_seed(s_ekf, s_c, a_pred: float) -> tuple[tuple[float, float], str]:
    """Prefer the EKF seed unless it is farther than ``a_pred`` from the cluster seed."""
    if a_pred <= 0:
        raise ValueError("a_pred must be positive")
    if np.hypot(s_ekf[0] - s_c[0], s_ekf[1] - s_c[1]) > a_pred:
        return (tuple(s_c), "cluster")
    return (tuple(s_ekf), "ekf")


@dataclass
class TrackStep:
    state: TrackerState
    segmentation: Segmentation
    s_ekf: tuple[float, float]
    s_c: tuple[float, float] | None


def track_frame(state: TrackerState, cmap: ClusterMap, fa, img_b, config: SequenceConfig = SequenceConfig()) -> TrackStep:
    """Predict, pick a seed, segment from it and correct the EKF with the fitted ellipse.

    If segmentation from the chosen seed fails, the other candidate is tried
    once before giving up with :class:`TrackingLost`.
    """
    params = config.ekf
    frame = state.frame_index + 1
    x_pred, P_pred = ekf_predict(state, params)
    a_pred, b_pred = float(max(x_pred[2], 1.0)), float(max(x_pred[3], 1.0))
    s_ekf = (float(x_pred[0]), float(x_pred[1]))
    try:
        s_c = cluster_seed_search(cmap, state.cluster_seed, a_pred, b_pred)
    except NoRootsInRegion:
        s_c = None

    if s_c is None:
        attempts = [(s_ekf, "ekf")]
    else:
        chosen, source = select_seed(s_ekf, s_c, a_pred)
        other = (s_c, "cluster") if source == "ekf" else (s_ekf, "ekf")
        attempts = [(chosen, source), other]

    errors = []
    for seed, source in attempts:
        if not inside_image(seed, np.shape(fa)):
            errors.append(f"{source} seed {seed} outside image")
            continue
        try:
            seg = segment(fa, img_b, seed, config)
        except VesselTrackError as exc:
            errors.append(f"{source}: {exc}")
            continue
        new = ekf_update(state, x_pred, P_pred, state_vector(seg.ellipse), params)
        new = replace(
            new,
            seed=tuple(seed),
            seed_source=source,
            cluster_seed=s_c if s_c is not None else tuple(seed),
            frame_index=frame,
        )
        return TrackStep(new, seg, s_ekf, s_c)
    raise TrackingLost(f"frame {frame}: " + "; ".join(errors), frame_index=frame)
