import numpy as np
import pytest
from conftest import random_state
from hypothesis import given
from hypothesis import strategies as st
from oracles import dense_state

from inekformer.features import (
    DEC_DIM,
    ENC_DIM,
    FeatureFrame,
    FeatureHistory,
    ScalerParams,
    apply_scaler,
    compute_features,
    fit_scaler,
    sliding_windows,
    window_arrays,
)
from inekformer.liegroup import GroupElement, sek3_compose, sek3_exp
from inekformer.robotstate import LEFT, RIGHT, ContactState, FilterState, observation_vector

IDENT_TOP = GroupElement.identity().top().ravel()


def obs(h_l, h_r):
    return observation_vector(h_l, LEFT), observation_vector(h_r, RIGHT)


def frame_from(rng, f5=(1.0, 1.0)):
    return FeatureFrame(rng.normal(size=6), rng.normal(size=6), rng.normal(size=21), rng.normal(size=21), f5)


def test_dimensions():
    assert ENC_DIM == 12 and DEC_DIM == 42


def test_frame_length_validation():
    with pytest.raises(ValueError):
        FeatureFrame(np.zeros(5), np.zeros(6), np.zeros(21), np.zeros(21), np.zeros(2))


def test_stationary_exact_state_degenerates(rng):
    x = random_state(rng)
    h = (x.rot.T @ (x.contact_l - x.pos), x.rot.T @ (x.contact_r - x.pos))
    y = obs(*h)
    f = compute_features(x, x, x, y, y, ContactState(1.0, 1.0))
    np.testing.assert_array_equal(f.f1, np.zeros(6))
    np.testing.assert_allclose(f.f2, 0.0, atol=1e-12)
    np.testing.assert_allclose(f.f3, IDENT_TOP, atol=1e-12)
    np.testing.assert_allclose(f.f4, IDENT_TOP, atol=1e-12)
    np.testing.assert_array_equal(f.f5, [1.0, 1.0])


def test_equal_previous_states_give_identity_f3(rng):
    x, xp = random_state(rng), random_state(rng)
    y = obs(rng.normal(size=3), rng.normal(size=3))
    f = compute_features(x, x, xp, y, y, ContactState(0.2, 0.7))
    np.testing.assert_allclose(f.f3, IDENT_TOP, atol=1e-12)


def test_dense_oracle(rng):
    for _ in range(30):
        a, b, c = random_state(rng), random_state(rng), random_state(rng)
        y_now, y_prev = obs(*rng.normal(size=(2, 3))), obs(*rng.normal(size=(2, 3)))
        f = compute_features(a, b, c, y_now, y_prev, ContactState(0.3, 0.9))
        da, db, dc = (dense_state(s.rot, s.x.cols) for s in (a, b, c))
        np.testing.assert_allclose(f.f3, (da @ np.linalg.inv(db))[:3].ravel(), atol=1e-12)
        np.testing.assert_allclose(f.f4, (da @ np.linalg.inv(dc))[:3].ravel(), atol=1e-12)
        np.testing.assert_allclose(f.f2, np.concatenate([(dc @ y)[:3] for y in y_now]), atol=1e-12)
        np.testing.assert_array_equal(f.f1, np.concatenate([(y_now[i] - y_prev[i])[:3] for i in range(2)]))


@given(st.integers(0, 2**31))
def test_f3_f4_depend_only_on_relative_transforms(seed):
    rng = np.random.default_rng(seed)
    a, b, c = random_state(rng), random_state(rng), random_state(rng)
    g = sek3_exp(rng.normal(size=15))
    y = obs(*rng.normal(size=(2, 3)))
    mu = ContactState(1.0, 1.0)
    f = compute_features(a, b, c, y, y, mu)
    right = [FilterState(sek3_compose(s.x, g)) for s in (a, b, c)]
    fr = compute_features(*right, y, y, mu)
    np.testing.assert_allclose(fr.f3, f.f3, atol=1e-12)
    np.testing.assert_allclose(fr.f4, f.f4, atol=1e-12)


def test_left_multiplication_is_a_similarity(rng):
    a, b, c = random_state(rng), random_state(rng), random_state(rng)
    g = sek3_exp(rng.normal(size=15))
    y = obs(*rng.normal(size=(2, 3)))
    mu = ContactState(1.0, 1.0)
    f = compute_features(a, b, c, y, y, mu)
    left = [FilterState(sek3_compose(g, s.x)) for s in (a, b, c)]
    fl = compute_features(*left, y, y, mu)
    gd = g.dense()
    for v, vl in ((f.f3, fl.f3), (f.f4, fl.f4)):
        m = GroupElement.from_top(v.reshape(3, 7)).dense()
        np.testing.assert_allclose(vl, (gd @ m @ np.linalg.inv(gd))[:3].ravel(), atol=1e-10)


# history ------------------------------------------------------------------------

def test_history_emits_only_when_full(rng):
    h = FeatureHistory(3)
    for i in range(2):
        h.push(frame_from(rng))
        assert not h.full and h.window() is None
    h.push(frame_from(rng))
    assert h.full and len(h.window()) == 3


def test_history_keeps_latest(rng):
    h = FeatureHistory(3)
    frames = [frame_from(rng) for _ in range(5)]
    for f in frames:
        h.push(f)
    assert h.window() == frames[2:]


@given(st.integers(1, 12), st.integers(0, 30))
def test_window_count(n, extra):
    frames = list(range(n + extra))
    assert len(sliding_windows(frames, n)) == extra + 1


def test_window_arrays_shapes(rng):
    enc, dec = window_arrays([frame_from(rng) for _ in range(4)])
    assert enc.shape == (4, 12) and dec.shape == (4, 42)


# scaler -------------------------------------------------------------------------

def frames_with_column(values, dim=0):
    out = []
    for v in values:
        s = np.zeros(54)
        s[dim] = v
        out.append(FeatureFrame.from_scaled_part(s, [1.0, 1.0]))
    return out


def test_quantile_hand_oracle():
    sc = fit_scaler(frames_with_column([1, 2, 3, 4, 5]), 0.25, 0.75)
    assert sc.center[0] == 3.0 and sc.scale[0] == 2.0


def test_constant_dimension_guard():
    sc = fit_scaler(frames_with_column([7.5] * 4), 0.25, 0.75)
    assert sc.center[0] == 7.5 and sc.scale[0] == 1.0
    assert np.all(sc.scale[1:] == 1.0)


def test_scaler_input_validation(rng):
    with pytest.raises(ValueError):
        fit_scaler([frame_from(rng)])
    with pytest.raises(ValueError):
        fit_scaler([frame_from(rng), frame_from(rng)], 0.8, 0.2)
    with pytest.raises(ValueError):
        ScalerParams(np.zeros(54), np.zeros(54))


def test_apply_center_maps_to_zero(rng):
    frames = [frame_from(rng) for _ in range(20)]
    sc = fit_scaler(frames)
    f = FeatureFrame.from_scaled_part(sc.center.copy(), [0.3, 0.9])
    out = apply_scaler(f, sc)
    np.testing.assert_array_equal(out.scaled_part(), np.zeros(54))
    np.testing.assert_array_equal(out.f5, [0.3, 0.9])


def test_fit_then_apply_definition(rng):
    frames = [frame_from(rng, rng.uniform(size=2)) for _ in range(101)]
    for q in ((0.25, 0.75), (0.05, 0.95)):
        sc = fit_scaler(frames, *q)
        scaled = [apply_scaler(f, sc) for f in frames]
        data = np.stack([f.scaled_part() for f in scaled])
        np.testing.assert_allclose(np.median(data, axis=0), 0.0, atol=1e-9)
        lo, hi = np.quantile(data, q, axis=0)
        np.testing.assert_allclose(hi - lo, 1.0, atol=1e-9)
        # refit on scaled data: center 0, scale equal to its own inter-quantile range
        again = fit_scaler(scaled, *q)
        np.testing.assert_allclose(again.center, 0.0, atol=1e-12)
        np.testing.assert_allclose(again.scale, hi - lo, atol=1e-12)
        for a, b in zip(frames, scaled):
            assert np.array_equal(a.f5, b.f5)
