"""Synthetic bipedal gait data: kinematic ground truth plus sensor streams.

Ground truth is generated in two passes.  A smooth design trajectory
(base path, sway, swing-foot profiles) is laid out first; the IMU that
reproduces its velocity profile is then integrated with the filter's own
strapdown model, so that noise-free sensor data is exactly consistent
with the stored ground truth.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .inekf import propagate_state
from .liegroup import gamma1, so3_exp, so3_log
from .robotstate import GRAVITY, FilterState, ImuSample
from .trajectory import Trajectory, rot_to_quat

MOTIONS = ("walk", "squat", "turn", "sway", "balance")
MIN_SUPPORT_SHARE = 0.2


@dataclass(frozen=True)
class GaitParams:
    step_length: float = 0.2
    step_height: float = 0.05
    step_duration: float = 0.8
    duty_factor: float = 0.7
    sway_amplitude: float = 0.03
    base_height: float = 0.85
    n_steps: int = 8
    dt: float = 1.0 / 150.0
    motion: str = "walk"
    stand_time: float = 1.0
    foot_width: float = 0.2
    squat_depth: float = 0.12
    turn_angle: float = np.pi / 2
    jitter: float = 0.0
    jitter_seed: int = 0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not 0.5 < self.duty_factor < 1.0:
            raise ValueError("duty_factor must lie in (0.5, 1)")
        if self.motion not in MOTIONS:
            raise ValueError(f"motion must be one of {MOTIONS}")
        if not 0.0 <= self.jitter <= 0.2:
            raise ValueError("jitter must lie in [0, 0.2]")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")

    @property
    def duration(self) -> float:
        per = self.step_duration if self.motion in ("walk", "turn") else 2.0 * self.step_duration
        return 2.0 * self.stand_time + self.n_steps * per


@dataclass(frozen=True)
class SensorNoise:
    sigma_gyro: float = 0.0
    sigma_accel: float = 0.0
    bias_gyro: tuple = (0.0, 0.0, 0.0)
    bias_accel: tuple = (0.0, 0.0, 0.0)
    sigma_fk: float = 0.0
    force_noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if min(self.sigma_gyro, self.sigma_accel, self.sigma_fk, self.force_noise) < 0:
            raise ValueError("noise sigmas must be non-negative")


NOISE_PRESETS = {
    "zero": SensorNoise(),
    "default": SensorNoise(
        sigma_gyro=2e-4,
        sigma_accel=3e-3,
        bias_gyro=(2e-5, -2e-5, 1e-5),
        bias_accel=(0.002, -0.0016, 0.0012),
        sigma_fk=2e-4,
        force_noise=5.0,
    ),
    "high": SensorNoise(
        sigma_gyro=5e-3,
        sigma_accel=5e-2,
        bias_gyro=(5e-4, -5e-4, 2e-4),
        bias_accel=(0.1, -0.08, 0.05),
        sigma_fk=5e-3,
        force_noise=20.0,
    ),
}


def noise_preset(name: str, seed: int = 0) -> SensorNoise:
    try:
        base = NOISE_PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown noise preset {name!r}; choose from {sorted(NOISE_PRESETS)}") from None
    return SensorNoise(**{**base.__dict__, "seed": seed})


@dataclass
class GroundTruthFrame:
    x_gt: FilterState
    foot_l: np.ndarray
    foot_r: np.ndarray
    stance_l: bool
    stance_r: bool

    @property
    def t(self) -> float:
        return self.x_gt.t


# -- smooth building blocks ---------------------------------------------------


def smoothstep5(u):
    """Quintic 0 -> 1 ramp with zero first and second derivatives at both ends."""
    u = np.clip(u, 0.0, 1.0)
    return u**3 * (10.0 - 15.0 * u + 6.0 * u * u)


def _window(t, start, end, ramp):
    return smoothstep5((t - start) / ramp) * smoothstep5((end - t) / ramp)


@dataclass
class _Design:
    """Design-time kinematics evaluated on arbitrary time arrays."""

    p: GaitParams

    def path(self, s):
        kappa = self._kappa()
        if kappa == 0.0:
            return np.stack([s, np.zeros_like(s)], axis=-1), np.zeros_like(s)
        psi = kappa * s
        return np.stack([np.sin(psi) / kappa, (1.0 - np.cos(psi)) / kappa], axis=-1), psi

    def _kappa(self) -> float:
        p = self.p
        if p.motion != "turn":
            return 0.0
        # the base ends midway between the last two footholds
        return p.turn_angle / ((p.n_steps - 0.5) * p.step_length)

    def lateral(self, psi):
        return np.stack([-np.sin(psi), np.cos(psi)], axis=-1)


def _walk_plan(p: GaitParams):
    """Foot arc-length sequence and swing intervals for walk/turn."""
    s_foot = [0.0, 0.0]  # left, right
    steps = []
    t0 = p.stand_time
    ds = (2.0 * p.duty_factor - 1.0) * p.step_duration
    for k in range(p.n_steps):
        side = k % 2
        target = (k + 1) * p.step_length
        start = t0 + k * p.step_duration
        steps.append(dict(side=side, t_step=start, t_lift=start + ds, t_land=start + p.step_duration,
                          s_from=s_foot[side], s_to=target, mid_before=0.5 * sum(s_foot)))
        s_foot[side] = target
        steps[-1]["mid_after"] = 0.5 * sum(s_foot)
    return steps


def _design_walk(p: GaitParams, t: np.ndarray):
    d = _Design(p)
    steps = _walk_plan(p)
    n = len(t)
    s_base = np.zeros(n)
    for st in steps:
        u = (t - st["t_step"]) / p.step_duration
        inside = (u >= 0.0) & (u <= 1.0)
        s_base[inside] = st["mid_before"] + (st["mid_after"] - st["mid_before"]) * smoothstep5(u[inside])
        s_base[u > 1.0] = st["mid_after"]
    xy, psi = d.path(s_base)
    lat = d.lateral(psi)
    walk_start, walk_end = p.stand_time, p.stand_time + p.n_steps * p.step_duration
    sway = -p.sway_amplitude * np.sin(np.pi * (t - walk_start) / p.step_duration)
    sway *= _window(t, walk_start, walk_end, p.step_duration)
    base = np.column_stack([xy + sway[:, None] * lat, np.full(n, p.base_height)])
    rot = np.stack([so3_exp([0.0, 0.0, a]) for a in psi])

    feet = np.zeros((2, n, 3))
    stance = np.ones((2, n), dtype=bool)
    half = 0.5 * p.foot_width
    foot_s = [np.zeros(n), np.zeros(n)]
    lift = [np.zeros(n), np.zeros(n)]
    for st in steps:
        i = st["side"]
        after = t >= st["t_land"]
        during = (t > st["t_lift"]) & ~after
        tau = (t[during] - st["t_lift"]) / (st["t_land"] - st["t_lift"])
        c = (tau - np.sin(2.0 * np.pi * tau) / (2.0 * np.pi))
        foot_s[i][during] = st["s_from"] + (st["s_to"] - st["s_from"]) * c
        lift[i][during] = p.step_height * 0.5 * (1.0 - np.cos(2.0 * np.pi * tau))
        foot_s[i][after] = st["s_to"]
        stance[i][during] = False
    for i, sign in ((0, 1.0), (1, -1.0)):
        fxy, fpsi = d.path(foot_s[i])
        feet[i, :, :2] = fxy + sign * half * d.lateral(fpsi)
        feet[i, :, 2] = lift[i]
    return base, rot, feet, stance


def _design_static(p: GaitParams, t: np.ndarray):
    n = len(t)
    half = 0.5 * p.foot_width
    feet = np.zeros((2, n, 3))
    feet[0, :, 1] = half
    feet[1, :, 1] = -half
    stance = np.ones((2, n), dtype=bool)
    start, end = p.stand_time, p.duration - p.stand_time
    period = 2.0 * p.step_duration
    base = np.zeros((n, 3))
    base[:, 2] = p.base_height
    phase = 2.0 * np.pi * (t - start) / period
    if p.motion == "squat":
        active = (t >= start) & (t <= end)
        base[:, 2] -= np.where(active, p.squat_depth * np.sin(0.5 * phase) ** 4, 0.0)
    elif p.motion == "sway":
        w = _window(t, start, end, p.step_duration)
        base[:, 0] += p.sway_amplitude * np.sin(phase) * w
        base[:, 1] += p.sway_amplitude * np.sin(0.5 * phase) * w
    elif p.motion == "balance":
        ramp = p.step_duration
        shift = smoothstep5((t - start) / ramp) * smoothstep5((end - t) / ramp)
        base[:, 1] += p.sway_amplitude * shift
        if p.sway_amplitude > 0.0 and p.step_height > 0.0:
            # lift the unloaded right foot while the base rests over the left one
            lift_start, lift_end = start + ramp, end - ramp
            if lift_end > lift_start:
                inside = (t > lift_start) & (t < lift_end)
                tau = (t[inside] - lift_start) / (lift_end - lift_start)
                feet[1, inside, 2] = p.step_height * np.sin(np.pi * tau) ** 4
                stance[1, inside] = False
    rot = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
    return base, rot, feet, stance


def _time_grid(p: GaitParams) -> np.ndarray:
    n = int(round(p.duration / p.dt)) + 1
    if p.jitter == 0.0:
        return np.arange(n) * p.dt
    rng = np.random.default_rng(p.jitter_seed)
    steps = p.dt * (1.0 + rng.uniform(-p.jitter, p.jitter, n - 1))
    return np.concatenate([[0.0], np.cumsum(steps)])


def _design(p: GaitParams, t: np.ndarray):
    if p.motion in ("walk", "turn"):
        return _design_walk(p, t)
    return _design_static(p, t)


def _imu_from_increments(r0, r1, v0, v1, dt) -> tuple[np.ndarray, np.ndarray]:
    """Invert one strapdown step: the IMU sample that maps (r0, v0) to (r1, v1)."""
    omega = so3_log(r0.T @ r1) / dt
    m = r0 @ gamma1(omega * dt) * dt
    accel = np.linalg.solve(m, v1 - v0 - GRAVITY * dt)
    return omega, accel


def generate_ground_truth(params: GaitParams) -> list[GroundTruthFrame]:
    p = params
    t = _time_grid(p)
    base, rot, feet, stance = _design(p, t)
    # design velocity by central differences, one extra sample on each side
    step_lo, step_hi = t[1] - t[0], t[-1] - t[-2]
    t_ext = np.concatenate([[t[0] - step_lo], t, [t[-1] + step_hi]])
    base_ext = _design(p, t_ext)[0]
    vel = (base_ext[2:] - base_ext[:-2]) / (t_ext[2:] - t_ext[:-2])[:, None]

    frames = []
    x = FilterState.from_parts(rot[0], vel[0], base[0], feet[0, 0], feet[1, 0], t[0])
    for i in range(len(t)):
        if i > 0:
            dt = t[i] - t[i - 1]
            w, a = _imu_from_increments(rot[i - 1], rot[i], vel[i - 1], vel[i], dt)
            x = propagate_state(x, ImuSample(w, a), dt)
            # rotation is carried from the design to avoid accumulating roundoff
            x = FilterState.from_parts(rot[i], x.vel, x.pos, feet[0, i], feet[1, i], t[i])
        frames.append(GroundTruthFrame(x, feet[0, i].copy(), feet[1, i].copy(), bool(stance[0, i]), bool(stance[1, i])))
    return frames


def _rng_streams(seed: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)]


def synthesize_imu(frames: list[GroundTruthFrame], noise: SensorNoise = SensorNoise()) -> list[ImuSample]:
    """IMU samples reproducing the ground truth under the strapdown model.

    Sample ``i`` drives the interval ``[t_i, t_{i+1}]``; the last sample
    repeats its predecessor.
    """
    if len(frames) < 3:
        raise ValueError("need at least 3 frames")
    rng = _rng_streams(noise.seed)[0]
    out = []
    for i in range(len(frames) - 1):
        a, b = frames[i].x_gt, frames[i + 1].x_gt
        dt = b.t - a.t
        w, acc = _imu_from_increments(a.rot, b.rot, a.vel, b.vel, dt)
        if noise.sigma_gyro or noise.sigma_accel:
            w = w + rng.normal(0.0, noise.sigma_gyro / np.sqrt(dt), 3)
            acc = acc + rng.normal(0.0, noise.sigma_accel / np.sqrt(dt), 3)
        out.append(ImuSample(w + np.asarray(noise.bias_gyro), acc + np.asarray(noise.bias_accel), a.t))
    last = out[-1]
    out.append(ImuSample(last.gyro, last.accel, frames[-1].t))
    return out


def synthesize_leg_obs(frames: list[GroundTruthFrame], noise: SensorNoise = SensorNoise()) -> tuple[np.ndarray, np.ndarray]:
    """Body-frame foot positions ``R^T (foot - p)``, returned as two ``N x 3`` arrays."""
    rng = _rng_streams(noise.seed)[1]
    h = np.zeros((2, len(frames), 3))
    for i, f in enumerate(frames):
        r, pos = f.x_gt.rot, f.x_gt.pos
        h[0, i] = r.T @ (f.foot_l - pos)
        h[1, i] = r.T @ (f.foot_r - pos)
    if noise.sigma_fk:
        h = h + rng.normal(0.0, noise.sigma_fk, h.shape)
    return h[0], h[1]


def support_share(frames: list[GroundTruthFrame]) -> np.ndarray:
    """Fraction of body weight carried by the left foot."""
    share = np.zeros(len(frames))
    for i, f in enumerate(frames):
        if f.stance_l and not f.stance_r:
            share[i] = 1.0
        elif f.stance_r and not f.stance_l:
            share[i] = 0.0
        elif f.stance_l and f.stance_r:
            axis = f.foot_l[:2] - f.foot_r[:2]
            width = np.linalg.norm(axis)
            mid = 0.5 * (f.foot_l[:2] + f.foot_r[:2])
            offset = (f.x_gt.pos[:2] - mid) @ axis / width
            share[i] = np.clip(0.5 + offset / width, MIN_SUPPORT_SHARE, 1.0 - MIN_SUPPORT_SHARE)
        else:
            share[i] = np.nan
    return share


def synthesize_contact_forces(
    frames: list[GroundTruthFrame], robot_mass: float = 60.0, noise: SensorNoise = SensorNoise()
) -> tuple[np.ndarray, np.ndarray]:
    """Vertical foot forces (negative under load)."""
    if robot_mass <= 0:
        raise ValueError("robot mass must be positive")
    rng = _rng_streams(noise.seed)[2]
    share = support_share(frames)
    if np.any(np.isnan(share)):
        raise ValueError("flight phase: neither foot in stance")
    weight = robot_mass * 9.81
    fz = np.stack([-weight * share, -weight * (1.0 - share)])
    if noise.force_noise:
        fz = fz + rng.normal(0.0, noise.force_noise, fz.shape)
    return fz[0], fz[1]


def simulate(
    params: GaitParams = GaitParams(), noise: SensorNoise = SensorNoise(), robot_mass: float = 60.0
) -> Trajectory:
    """Ground truth plus all sensor streams, as a :class:`Trajectory`."""
    frames = generate_ground_truth(params)
    imu = synthesize_imu(frames, noise)
    h_l, h_r = synthesize_leg_obs(frames, noise)
    fz_l, fz_r = synthesize_contact_forces(frames, robot_mass, noise)
    states = [f.x_gt for f in frames]
    return Trajectory(
        t=np.array([f.t for f in frames]),
        gyro=np.stack([u.gyro for u in imu]),
        accel=np.stack([u.accel for u in imu]),
        h_l=h_l,
        h_r=h_r,
        fz_l=fz_l,
        fz_r=fz_r,
        quat=rot_to_quat(np.stack([s.rot for s in states])),
        vel=np.stack([s.vel for s in states]),
        pos=np.stack([s.pos for s in states]),
        c_l=np.stack([s.contact_l for s in states]),
        c_r=np.stack([s.contact_r for s in states]),
        stance=np.array([[f.stance_l, f.stance_r] for f in frames]),
    )
