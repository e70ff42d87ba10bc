import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vesseltrack.config import EkfParams, SequenceConfig
from vesseltrack.core import EllipseParams
from vesseltrack.errors import NoRootsInRegion, SingularInnovation, TrackingLost
from vesseltrack.metrics import dice, rasterize
from vesseltrack.phantom import Drift, Jump, PhantomSpec, Still, render_frame, vessel_at
from vesseltrack.pipeline import preprocess_frame
from vesseltrack.preprocess import ClusterMap
from vesseltrack.segmentation import segment
from vesseltrack.tracking import (
    TrackerState,
    cluster_seed_search,
    ekf_predict,
    ekf_update,
    select_seed,
    track_frame,
)

STATE = np.array([100.0, 60.0, 20.0, 10.0])


def make_state(x, x_prev=None, P=None):
    x = np.asarray(x, dtype=float)
    return TrackerState(
        x=x,
        x_prev=x.copy() if x_prev is None else np.asarray(x_prev, dtype=float),
        P=np.diag([1000.0] * 4) if P is None else P,
        seed=(float(x[0]), float(x[1])),
        seed_source="manual",
        cluster_seed=(float(x[0]), float(x[1])),
    )


def make_cmap(roots, means, w=200, h=120):
    idx = np.array([int(y) * w + int(x) for x, y in roots], dtype=np.int64)
    order = np.argsort(idx)
    n = w * h
    return ClusterMap(
        width=w,
        height=h,
        root_of=np.full(n, idx[order][0]),
        parent=np.arange(n),
        root_index=idx[order],
        patch_mean=np.asarray(means, dtype=float)[order],
        variance=np.zeros((h, w)),
    )


# --- predict ---------------------------------------------------------------------

def test_predict_stationary_fixed_point():
    x, P = ekf_predict(make_state(STATE))
    np.testing.assert_array_equal(x, STATE)


@given(st.lists(st.floats(-1e6, 1e6), min_size=4, max_size=4))
def test_predict_any_constant_state_exact(v):
    x, _ = ekf_predict(make_state(v))
    np.testing.assert_array_equal(x, np.asarray(v, dtype=float))


@given(st.lists(st.floats(-1e3, 1e3), min_size=8, max_size=8))
def test_predict_matches_matrix_form(v):
    s = make_state(v[:4], v[4:])
    x, _ = ekf_predict(s)
    p = EkfParams()
    np.testing.assert_allclose(x, p.A1 @ s.x + p.A2 @ s.x_prev, rtol=1e-12, atol=1e-9)


def test_predict_constant_velocity():
    x, _ = ekf_predict(make_state([110, 60, 20, 10], [100, 60, 20, 10]))
    np.testing.assert_array_equal(x, [115, 60, 20, 10])


def test_predict_covariance():
    _, P = ekf_predict(make_state(STATE))
    np.testing.assert_allclose(P, np.diag([2250.001] * 4), rtol=0, atol=1e-9)


# --- update ----------------------------------------------------------------------

def test_update_zero_r_returns_measurement():
    p = EkfParams(R=np.zeros((4, 4)))
    s = make_state(STATE)
    x_pred, P_pred = ekf_predict(s, p)
    z = np.array([104.5, 58.25, 22.0, 11.0])
    new = ekf_update(s, x_pred, P_pred, z, p)
    np.testing.assert_allclose(new.x, z, rtol=0, atol=1e-12)
    np.testing.assert_array_equal(new.x_prev, s.x)


def test_update_huge_r_keeps_prediction():
    # operating-point covariance: after many unit-noise updates
    s = make_state(STATE)
    for _ in range(100):
        x_pred, P_pred = ekf_predict(s)
        s = ekf_update(s, x_pred, P_pred, STATE)
    p = EkfParams(R=np.diag([1e9] * 4))
    x_pred, P_pred = ekf_predict(s, p)
    new = ekf_update(s, x_pred, P_pred, [300.0, -40.0, 50.0, 30.0], p)
    np.testing.assert_allclose(new.x, x_pred, rtol=0, atol=1e-6)


def test_update_huge_r_gain_at_cold_start():
    # P_pred = 2250.001: the measurement pull is exactly the scalar gain
    p = EkfParams(R=np.diag([1e9] * 4))
    s = make_state(STATE)
    x_pred, P_pred = ekf_predict(s, p)
    new = ekf_update(s, x_pred, P_pred, x_pred + 1.0, p)
    np.testing.assert_allclose(new.x - x_pred, 2250.001 / (2250.001 + 1e9), rtol=0, atol=1e-13)


def test_update_scalar_gain():
    s = make_state(np.zeros(4))
    P_pred = np.diag([2250.001] * 4)
    new = ekf_update(s, np.zeros(4), P_pred, [10.0] * 4)
    expected = 10 * 2250.001 / 2251.001
    np.testing.assert_allclose(new.x, [expected] * 4, rtol=1e-12)
    assert expected == pytest.approx(9.99556, abs=1e-5)


def test_update_singular_innovation():
    p = EkfParams(R=np.zeros((4, 4)))
    s = make_state(STATE)
    with pytest.raises(SingularInnovation):
        ekf_update(s, STATE, np.zeros((4, 4)), STATE, p)


def test_update_keeps_axis_order():
    s = make_state([50, 50, 10, 9.9])
    new = ekf_update(s, s.x, np.eye(4), [50, 50, 9.0, 10.5])
    assert new.x[2] >= new.x[3]


def test_covariance_psd_after_many_cycles():
    rng = np.random.default_rng(7)
    s = make_state(STATE)
    for _ in range(1000):
        x_pred, P_pred = ekf_predict(s)
        z = x_pred + rng.normal(0, 2, 4)
        z[3] = min(abs(z[3]), abs(z[2]))
        s = ekf_update(s, x_pred, P_pred, z)
        assert np.array_equal(s.P, s.P.T)
        assert np.linalg.eigvalsh(s.P).min() >= -1e-9


# --- cluster seed ----------------------------------------------------------------

def test_cluster_search_darkest():
    cm = make_cmap([(105, 60), (95, 62)], [90.0, 18.0])
    assert cluster_seed_search(cm, (100, 60), 20, 10) == (95.0, 62.0)


def test_cluster_search_empty_region():
    cm = make_cmap([(180, 10)], [10.0])
    with pytest.raises(NoRootsInRegion):
        cluster_seed_search(cm, (100, 60), 20, 10)


def test_cluster_search_boundary_inclusive():
    # (1.5 * 20, 0) from the seed: exactly on the region boundary
    cm = make_cmap([(130, 60), (100, 71)], [5.0, 1.0])
    assert cluster_seed_search(cm, (100, 60), 20, 10) == (130.0, 60.0)
    cm = make_cmap([(100, 70)], [5.0])
    assert cluster_seed_search(cm, (100, 60), 20, 10) == (100.0, 70.0)


def test_cluster_search_tie_breaks():
    cm = make_cmap([(110, 60), (104, 60), (100, 64)], [7.0, 7.0, 7.0])
    assert cluster_seed_search(cm, (100, 60), 20, 10) == (104.0, 60.0)
    cm = make_cmap([(104, 60), (100, 56)], [7.0, 7.0])
    # equal distance: lower row-major index (row 56) wins
    assert cluster_seed_search(cm, (100, 60), 20, 10) == (100.0, 56.0)


# --- select_seed -----------------------------------------------------------------

def test_select_same_point():
    assert select_seed((100, 60), (100, 60), 20) == ((100, 60), "ekf")


def test_select_cluster_when_far():
    assert select_seed((100, 60), (140, 60), 20) == ((140, 60), "cluster")


def test_select_boundary_is_ekf():
    assert select_seed((100, 60), (120, 60), 20) == ((100, 60), "ekf")


@given(
    st.tuples(st.floats(-500, 500), st.floats(-500, 500)),
    st.tuples(st.floats(-500, 500), st.floats(-500, 500)),
    st.floats(0.01, 300),
)
def test_select_matches_rule(s_ekf, s_c, a):
    seed, src = select_seed(s_ekf, s_c, a)
    far = np.hypot(s_ekf[0] - s_c[0], s_ekf[1] - s_c[1]) > a
    assert (seed, src) == ((tuple(s_c), "cluster") if far else (tuple(s_ekf), "ekf"))


# --- track_frame -----------------------------------------------------------------

CFG = SequenceConfig(downsample_factor=1)


def small_spec(motion):
    return PhantomSpec(
        dims=(260, 200),
        frames=2,
        vessel=EllipseParams(100.0, 100.0, 20.0, 20.0),
        wall_width=6.0,
        motion=motion,
        rng_seed=4,
        centered=False,
    )


def first_state(spec):
    p = preprocess_frame(render_frame(spec, 0), CFG)
    seed = vessel_at(spec, 0).center
    seg = segment(p.fa, p.smoothed, seed, CFG)
    return TrackerState.start(seg.ellipse, seed, CFG.ekf)


def step(spec):
    state = first_state(spec)
    p = preprocess_frame(render_frame(spec, 1), CFG, 7)
    return track_frame(state, p.clusters, p.fa, p.smoothed, CFG)


def frame_dice(spec, contour):
    g = rasterize(vessel_at(spec, 1).sample(360), spec.dims)
    return dice(g, rasterize(contour, spec.dims))


def test_track_small_translation_uses_ekf():
    spec = small_spec((Drift((2.0, 0.0)),))
    out = step(spec)
    assert out.state.seed_source == "ekf"
    assert out.state.frame_index == 1
    assert frame_dice(spec, out.segmentation.contour) >= 0.9


def test_track_jump_switches_to_cluster():
    spec = small_spec((Jump(1, (40.0, 0.0)),))
    state = first_state(spec)
    assert ekf_predict(state)[0][2] == pytest.approx(20, abs=1.0)
    out = step(spec)
    assert out.state.seed_source == "cluster"
    assert frame_dice(spec, out.segmentation.contour) >= 0.9


def test_track_lost_when_both_paths_fail():
    flat = np.full((120, 200), 100.0)
    cm = make_cmap([(190, 10)], [5.0])
    state = make_state([60, 60, 15, 12])
    with pytest.raises(TrackingLost) as info:
        track_frame(state, cm, np.zeros_like(flat), flat, CFG)
    assert info.value.frame_index == 1


def test_track_falls_back_to_other_seed():
    spec = small_spec((Still(),))
    state = first_state(spec)
    # EKF believes the vessel sits in plain tissue, far from the lumen
    state = TrackerState(
        x=np.array([200.0, 60.0, 20.0, 20.0]),
        x_prev=np.array([200.0, 60.0, 20.0, 20.0]),
        P=state.P,
        seed=state.seed,
        seed_source="manual",
        cluster_seed=(115.0, 100.0),
    )
    p = preprocess_frame(render_frame(spec, 1), CFG, 7)
    out = track_frame(state, p.clusters, p.fa, p.smoothed, CFG)
    assert out.state.seed_source == "cluster"
    assert frame_dice(spec, out.segmentation.contour) >= 0.9
