import numpy as np
import pytest
from conftest import random_state
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from inekformer.robotstate import (
    LEFT,
    RIGHT,
    ContactState,
    FilterState,
    ImuSample,
    LegObservation,
    contact_probability,
    innovation,
    observation_vector,
)


def test_observation_vector_left():
    assert np.array_equal(observation_vector([1, 2, 3], LEFT), [1, 2, 3, 0, 1, -1, 0])


def test_observation_vector_right():
    assert np.array_equal(observation_vector([1, 2, 3], RIGHT), [1, 2, 3, 0, 1, 0, -1])


def test_observation_vector_right_subtracts_right_contact():
    x = FilterState.from_parts(np.eye(3), np.zeros(3), np.zeros(3), [1.0, 1.0, 1.0], [5.0, 6.0, 7.0])
    np.testing.assert_array_equal(innovation(x, observation_vector(np.zeros(3), RIGHT)), [-5.0, -6.0, -7.0])


def test_observation_vector_rejects_unknown_side():
    with pytest.raises(ValueError):
        observation_vector([0, 0, 0], "middle")


@given(arrays(float, 3, elements=st.floats(-2, 2)), st.sampled_from([LEFT, RIGHT]))
def test_observation_vector_tail_pattern(h, side):
    tail = observation_vector(h, side)[3:]
    assert sorted(tail) == [-1.0, 0.0, 0.0, 1.0]


def test_zero_kinematics_identity_state_gives_minus_contact():
    c_l = np.array([0.1, 0.2, 0.3])
    x = FilterState.from_parts(np.eye(3), np.zeros(3), np.zeros(3), c_l, np.zeros(3))
    np.testing.assert_array_equal(innovation(x, observation_vector(np.zeros(3), LEFT)), -c_l)


def test_innovation_identity_state():
    x = FilterState.from_parts(np.eye(3), *np.zeros((4, 3)))
    np.testing.assert_array_equal(innovation(x, observation_vector([1, 2, 3], LEFT)), [1, 2, 3])


def test_innovation_consistent_state_is_zero(rng):
    x = random_state(rng)
    h = x.rot.T @ (x.contact_l - x.pos)
    np.testing.assert_allclose(innovation(x, observation_vector(h, LEFT)), 0.0, atol=1e-12)


def test_innovation_dense_oracle(rng):
    for _ in range(50):
        x = random_state(rng)
        h = rng.normal(size=3)
        for side, c in ((LEFT, x.contact_l), (RIGHT, x.contact_r)):
            y = observation_vector(h, side)
            np.testing.assert_allclose(innovation(x, y), (x.dense() @ y)[:3], atol=1e-12)
            np.testing.assert_allclose(innovation(x, y), x.rot @ h + x.pos - c, atol=1e-12)


def test_contact_probability_threshold():
    assert contact_probability(-50.0) == 0.5


def test_contact_probability_loaded_saturates():
    assert contact_probability(-400.0) >= 1 - 1e-15


def test_contact_probability_swing():
    expected = 1.0 - 1.0 / (1.0 + np.exp(-50.0))
    assert contact_probability(0.0) == pytest.approx(1.93e-22, rel=1e-2)
    assert contact_probability(0.0) == pytest.approx(expected, rel=1e-3)


def test_contact_probability_extremes_finite():
    assert contact_probability(-1e9) == pytest.approx(1.0)
    assert contact_probability(1e9) >= 0.0


@given(st.floats(-1000, 1000), st.floats(-1000, 1000))
def test_contact_probability_monotone_and_bounded(a, b):
    lo, hi = min(a, b), max(a, b)
    assert contact_probability(lo) >= contact_probability(hi)
    assert 0.0 <= contact_probability(a) <= 1.0


@given(st.floats(-60, 20))
def test_contact_probability_open_interval_in_normal_range(f):
    assert 0.0 < contact_probability(f) < 1.0


def test_contact_state_range_checked():
    with pytest.raises(ValueError):
        ContactState(1.2, 0.0)
    with pytest.raises(ValueError):
        ContactState(0.0, -0.1)


def test_sample_sanity_bounds():
    with pytest.raises(ValueError):
        ImuSample(np.zeros(3), np.array([0.0, 0.0, 500.0]))
    with pytest.raises(ValueError):
        LegObservation(np.array([3.0, 0.0, 0.0]), np.zeros(3))
    with pytest.raises(ValueError):
        ImuSample(np.array([np.nan, 0.0, 0.0]), np.zeros(3))
