import numpy as np
import pytest

from inekformer.evaluation import dead_reckoning, trajectory_errors
from inekformer.inekf import propagate_state, run_inekf
from inekformer.liegroup import so3_exp
from inekformer.robotstate import FilterState, contact_probability, innovation
from inekformer.simgait import (
    MOTIONS,
    GaitParams,
    GroundTruthFrame,
    SensorNoise,
    generate_ground_truth,
    noise_preset,
    simulate,
    synthesize_contact_forces,
    synthesize_imu,
    synthesize_leg_obs,
)


@pytest.fixture(scope="module")
def walk_frames():
    return generate_ground_truth(GaitParams(n_steps=4))


def static_frames(n=5, rot=np.eye(3), pos=(0.0, 0.0, 0.8)):
    x = FilterState.from_parts(rot, np.zeros(3), pos, [0.0, 0.1, 0.0], [0.0, -0.1, 0.0])
    return [GroundTruthFrame(FilterState(x.x, i / 150.0), np.array([0.0, 0.1, 0.0]), np.array([0.0, -0.1, 0.0]),
                             True, True) for i in range(n)]


# ground truth ------------------------------------------------------------------

def test_balance_without_sway_is_static():
    frames = generate_ground_truth(GaitParams(motion="balance", sway_amplitude=0.0, n_steps=1))
    ref = frames[0]
    for f in frames:
        assert np.array_equal(f.x_gt.top(), ref.x_gt.top())
        assert np.array_equal(f.foot_l, ref.foot_l) and np.array_equal(f.foot_r, ref.foot_r)


def test_walk_distance_matches_gait_arithmetic(walk_frames):
    assert abs(walk_frames[-1].x_gt.pos[0] - 4 * 0.2) <= 0.2


@pytest.mark.parametrize("motion", MOTIONS)
def test_stance_feet_never_slip(motion):
    frames = generate_ground_truth(GaitParams(motion=motion, n_steps=2))
    for side in ("foot_l", "foot_r"):
        flag = "stance_" + side[-1]
        anchor = None
        for f in frames:
            if getattr(f, flag):
                anchor = getattr(f, side) if anchor is None else anchor
                assert np.array_equal(getattr(f, side), anchor)
            else:
                anchor = None
        # contact columns of the state track the feet exactly
    for f in frames:
        assert np.array_equal(f.x_gt.contact_l, f.foot_l) and np.array_equal(f.x_gt.contact_r, f.foot_r)


@pytest.mark.parametrize("motion", MOTIONS)
def test_every_frame_has_support(motion):
    frames = generate_ground_truth(GaitParams(motion=motion, n_steps=2))
    assert all(f.stance_l or f.stance_r for f in frames)


def test_walk_has_double_support(walk_frames):
    both = [f.stance_l and f.stance_r for f in walk_frames]
    single = [f.stance_l != f.stance_r for f in walk_frames]
    assert any(single)
    assert sum(both) > sum(single)  # duty factor 0.7 keeps both feet down most of the time


def test_turn_follows_heading():
    frames = generate_ground_truth(GaitParams(motion="turn", n_steps=4))
    r = frames[-1].x_gt.rot
    assert np.arctan2(r[1, 0], r[0, 0]) == pytest.approx(np.pi / 2, abs=1e-6)


def test_jitter_varies_sampling():
    t = np.array([f.t for f in generate_ground_truth(GaitParams(n_steps=1, jitter=0.2, jitter_seed=3))])
    dt = np.diff(t)
    assert np.all(dt > 0) and dt.min() >= 0.8 / 150 - 1e-12 and dt.max() <= 1.2 / 150 + 1e-12
    assert dt.std() > 1e-4


# IMU ---------------------------------------------------------------------------

def test_static_imu_measures_gravity_reaction():
    r = so3_exp([0.1, -0.2, 0.3])
    for u in synthesize_imu(static_frames(rot=r)):
        np.testing.assert_allclose(u.gyro, 0.0, atol=1e-15)
        np.testing.assert_allclose(u.accel, r.T @ np.array([0.0, 0.0, 9.81]), atol=1e-12)


def test_constant_yaw_rate():
    rate = 0.7
    frames = []
    for i in range(20):
        t = i / 150.0
        x = FilterState.from_parts(so3_exp([0.0, 0.0, rate * t]), np.zeros(3), [0.0, 0.0, 0.8], np.zeros(3), np.zeros(3), t)
        frames.append(GroundTruthFrame(x, np.zeros(3), np.zeros(3), True, True))
    for u in synthesize_imu(frames):
        np.testing.assert_allclose(u.gyro, [0.0, 0.0, rate], atol=1e-8)


@pytest.mark.parametrize("motion", ["walk", "turn", "squat"])
def test_reintegration_reproduces_ground_truth(motion):
    frames = generate_ground_truth(GaitParams(motion=motion, n_steps=10))
    assert frames[-1].t >= 10.0
    imu = synthesize_imu(frames)
    x = frames[0].x_gt
    worst = 0.0
    for i in range(1, len(frames)):
        x = propagate_state(x, imu[i - 1], frames[i].t - frames[i - 1].t)
        worst = max(worst, np.linalg.norm(x.pos - frames[i].x_gt.pos))
    assert worst < 1e-3


def test_imu_needs_three_frames():
    with pytest.raises(ValueError):
        synthesize_imu(static_frames(2))


# leg kinematics ------------------------------------------------------------------

def test_leg_obs_inverts_exactly(walk_frames):
    h_l, h_r = synthesize_leg_obs(walk_frames)
    for f, a, b in zip(walk_frames, h_l, h_r):
        r, p = f.x_gt.rot, f.x_gt.pos
        assert np.abs(r @ a + p - f.foot_l).max() < 1e-15 * 10
        assert np.abs(r @ b + p - f.foot_r).max() < 1e-15 * 10


def test_leg_obs_frame_arithmetic():
    x = FilterState.from_parts(np.eye(3), np.zeros(3), [0.0, 0.0, 0.8], np.zeros(3), np.zeros(3))
    f = GroundTruthFrame(x, np.array([0.1, 0.0, 0.0]), np.array([0.1, 0.0, 0.0]), True, True)
    h_l, _ = synthesize_leg_obs([f])
    np.testing.assert_allclose(h_l[0], [0.1, 0.0, -0.8], atol=1e-15)


def test_leg_obs_noise_level():
    frames = static_frames(10_000)
    h_l, _ = synthesize_leg_obs(frames, SensorNoise(sigma_fk=0.005, seed=2))
    clean, _ = synthesize_leg_obs(frames)
    std = (h_l - clean).std(axis=0)
    np.testing.assert_allclose(std, 0.005, rtol=0.1)


# forces --------------------------------------------------------------------------

def test_single_stance_force():
    x = FilterState.from_parts(np.eye(3), np.zeros(3), [0.0, 0.1, 0.8], np.zeros(3), np.zeros(3))
    f = GroundTruthFrame(x, np.array([0.0, 0.1, 0.0]), np.array([0.0, -0.1, 0.05]), True, False)
    fz_l, fz_r = synthesize_contact_forces([f], robot_mass=50.0)
    assert fz_l[0] == pytest.approx(-490.5, abs=1e-12) and fz_r[0] == 0.0


def test_forces_balance_weight(walk_frames):
    fz_l, fz_r = synthesize_contact_forces(walk_frames, 50.0)
    np.testing.assert_allclose(fz_l + fz_r, -50.0 * 9.81, atol=1e-9)
    assert np.all(fz_l <= 0) and np.all(fz_r <= 0)


def test_contact_probability_from_forces(walk_frames):
    fz_l, fz_r = synthesize_contact_forces(walk_frames)
    for fz, flag in ((fz_l, "stance_l"), (fz_r, "stance_r")):
        st = np.array([getattr(f, flag) for f in walk_frames])
        mu = contact_probability(fz)
        assert mu[st].min() >= 0.999
        assert mu[~st].max() <= 1e-6


def test_force_requires_mass(walk_frames):
    with pytest.raises(ValueError):
        synthesize_contact_forces(walk_frames, 0.0)


# whole dataset -------------------------------------------------------------------

@pytest.mark.parametrize("motion", MOTIONS)
def test_consistency_triangle(motion):
    traj = simulate(GaitParams(motion=motion, n_steps=2))
    worst = 0.0
    for i in range(len(traj)):
        x = traj.ground_truth(i)
        for y in traj.observations(i):
            worst = max(worst, np.abs(innovation(x, y)).max())
    assert worst < 1e-12


def test_dead_reckoning_diverges_against_filter():
    traj = simulate(GaitParams(n_steps=11), noise_preset("default", 4))
    assert traj.t[-1] >= 10.0
    i10 = int(np.searchsorted(traj.t, 10.0))
    dr = trajectory_errors(dead_reckoning(traj), traj)[i10, 6:]
    kf = trajectory_errors(run_inekf(traj), traj)[i10, 6:]
    assert np.linalg.norm(dr) >= 10.0 * np.linalg.norm(kf)


def test_simulation_is_deterministic():
    a = simulate(GaitParams(n_steps=2, jitter=0.1, jitter_seed=5), noise_preset("default", 7))
    b = simulate(GaitParams(n_steps=2, jitter=0.1, jitter_seed=5), noise_preset("default", 7))
    for name in ("t", "gyro", "accel", "h_l", "h_r", "fz_l", "fz_r", "quat", "vel", "pos", "c_l", "c_r", "stance"):
        assert np.array_equal(getattr(a, name), getattr(b, name)), name
    c = simulate(GaitParams(n_steps=2, jitter=0.1, jitter_seed=5), noise_preset("default", 8))
    assert not np.array_equal(a.gyro, c.gyro)


def test_parameter_validation():
    for bad in (dict(dt=0.0), dict(duty_factor=0.5), dict(motion="run"), dict(n_steps=0)):
        with pytest.raises(ValueError):
            GaitParams(**bad)
    with pytest.raises(ValueError):
        SensorNoise(sigma_gyro=-1.0)
    with pytest.raises(ValueError):
        noise_preset("loud")
