"""Contact-aided right-invariant EKF on SE_4(3).

The right-invariant error ``xi`` is defined by ``X_true = exp(xi) X_est``
and ordered ``[dphi, dv, dp, dc_L, dc_R]``.  Both the analytic filter and
the learned-gain filter share :func:`propagate_state` and :func:`correct`.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .liegroup import gamma0, gamma1, gamma2, sek3_adjoint, sek3_compose, sek3_exp, skew
from .robotstate import GRAVITY, ContactState, FilterState, ImuSample, innovation
from .trajectory import Trajectory

log = logging.getLogger(__name__)

DIM = 15
_P, _CL, _CR = slice(6, 9), slice(9, 12), slice(12, 15)


class FilterError(RuntimeError):
    pass


@dataclass(frozen=True)
class NoiseParams:
    """Filter noise assumptions (variances)."""

    q_gyro: np.ndarray = field(default_factory=lambda: np.full(3, 0.01**2))
    q_accel: np.ndarray = field(default_factory=lambda: np.full(3, 0.1**2))
    q_contact: float = 0.01**2
    q_swing: float = (1e3 * 0.01) ** 2
    n_obs: np.ndarray = field(default_factory=lambda: np.full(3, 0.005**2))

    def __post_init__(self):
        for name in ("q_gyro", "q_accel", "n_obs"):
            v = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (3,)).copy()
            object.__setattr__(self, name, v)
        values = np.concatenate([self.q_gyro, self.q_accel, self.n_obs, [self.q_contact, self.q_swing]])
        if np.any(values < 0.0):
            raise ValueError("noise variances must be non-negative")
        if self.q_swing < 1e3 * self.q_contact:
            raise ValueError("q_swing must be at least 1e3 * q_contact")

    @classmethod
    def from_sigmas(cls, gyro=0.01, accel=0.1, contact=0.01, swing=None, obs=0.005) -> "NoiseParams":
        swing = 1e3 * contact if swing is None else swing
        return cls(
            np.square(np.broadcast_to(gyro, (3,))),
            np.square(np.broadcast_to(accel, (3,))),
            float(contact) ** 2,
            float(swing) ** 2,
            np.square(np.broadcast_to(obs, (3,))),
        )

    @classmethod
    def from_mapping(cls, cfg: dict) -> "NoiseParams":
        """Build from sigma values, e.g. a ``[noise]`` config section."""
        keys = {"sigma_gyro": "gyro", "sigma_accel": "accel", "sigma_contact": "contact",
                "sigma_swing": "swing", "sigma_obs": "obs"}
        unknown = set(cfg) - set(keys)
        if unknown:
            raise ValueError(f"unknown noise keys: {sorted(unknown)}")
        return cls.from_sigmas(**{keys[k]: v for k, v in cfg.items()})


@dataclass(frozen=True)
class GainMatrix:
    """15 x 6 gain ``[K_L | K_R]``.  ``degraded`` marks a reused gain."""

    k: np.ndarray
    degraded: bool = False

    def __post_init__(self):
        k = np.asarray(self.k, dtype=float)
        if k.shape != (DIM, 6):
            raise ValueError(f"gain must be 15x6, got {k.shape}")
        object.__setattr__(self, "k", k)

    @classmethod
    def zeros(cls) -> "GainMatrix":
        return cls(np.zeros((DIM, 6)))

    @property
    def k_l(self) -> np.ndarray:
        return self.k[:, :3]

    @property
    def k_r(self) -> np.ndarray:
        return self.k[:, 3:]


def mask_gain(k_raw: GainMatrix, mu: ContactState) -> GainMatrix:
    """Scale the left/right gain column blocks by their contact states."""
    k = np.hstack([mu.mu_l * k_raw.k_l, mu.mu_r * k_raw.k_r])
    return GainMatrix(k, k_raw.degraded)


def propagate_state(x: FilterState, u: ImuSample, dt: float) -> FilterState:
    """Discrete strapdown step; contact points are held fixed."""
    if not dt > 0.0 or dt > 0.1:
        raise FilterError(f"time step {dt!r} outside (0, 0.1]")
    phi = u.gyro * dt
    r = x.rot
    rot = r @ gamma0(phi)
    vel = x.vel + GRAVITY * dt + r @ gamma1(phi) @ u.accel * dt
    pos = x.pos + x.vel * dt + 0.5 * GRAVITY * dt * dt + r @ gamma2(phi) @ u.accel * dt * dt
    return FilterState.from_parts(rot, vel, pos, x.contact_l, x.contact_r, x.t + dt)


def error_dynamics() -> np.ndarray:
    """Continuous-time right-invariant error dynamics matrix."""
    a = np.zeros((DIM, DIM))
    a[3:6, 0:3] = skew(GRAVITY)
    a[6:9, 3:6] = np.eye(3)
    return a


def propagate_covariance(
    p: np.ndarray, x: FilterState, dt: float, noise: NoiseParams, mu: ContactState
) -> np.ndarray:
    phi = np.eye(DIM) + error_dynamics() * dt
    q = np.zeros(DIM)
    q[0:3] = noise.q_gyro
    q[3:6] = noise.q_accel
    q[9:12] = noise.q_contact if mu.mu_l >= 0.5 else noise.q_swing
    q[12:15] = noise.q_contact if mu.mu_r >= 0.5 else noise.q_swing
    ad = sek3_adjoint(x.x)
    qbar = (ad * q) @ ad.T
    out = phi @ p @ phi.T + qbar * dt
    return 0.5 * (out + out.T)


def observation_jacobian(side: int) -> np.ndarray:
    """Jacobian of ``R h + p - c_i`` w.r.t. the right-invariant error (side 0=L, 1=R)."""
    h = np.zeros((3, DIM))
    h[:, _P] = -np.eye(3)
    h[:, (_CL, _CR)[side]] = np.eye(3)
    return h


def analytic_gain(
    p: np.ndarray,
    mu: ContactState,
    noise: NoiseParams,
    x: FilterState,
    previous: GainMatrix | None = None,
) -> GainMatrix:
    """Kalman gain for the feet in contact (mu >= 0.5); other columns are zero."""
    active = [i for i, m in enumerate((mu.mu_l, mu.mu_r)) if m >= 0.5]
    k = np.zeros((DIM, 6))
    if not active:
        return GainMatrix(k)
    h = np.vstack([observation_jacobian(i) for i in active])
    n_i = (x.rot * noise.n_obs) @ x.rot.T
    n = np.kron(np.eye(len(active)), n_i)
    s = h @ p @ h.T + n
    if np.linalg.cond(s) > 1e12:
        log.warning("innovation covariance ill-conditioned; reusing previous gain")
        prev = previous.k if previous is not None else k
        return GainMatrix(prev, degraded=True)
    kk = np.linalg.solve(s, h @ p).T
    for j, i in enumerate(active):
        k[:, 3 * i : 3 * i + 3] = kk[:, 3 * j : 3 * j + 3]
    return GainMatrix(k)


def correction_twist(x: FilterState, k: GainMatrix, y_l, y_r, mu: ContactState) -> np.ndarray:
    khat = mask_gain(k, mu)
    xi = np.zeros(DIM)
    if mu.mu_l != 0.0:
        xi = xi + khat.k_l @ innovation(x, y_l)
    if mu.mu_r != 0.0:
        xi = xi + khat.k_r @ innovation(x, y_r)
    return xi


def correct(x: FilterState, k: GainMatrix, y_l, y_r, mu: ContactState) -> FilterState:
    """``X+ = exp(K_hat * innovation) X`` with the gain masked by ``mu``."""
    xi = correction_twist(x, k, y_l, y_r, mu)
    if not np.any(xi):
        return x
    return FilterState(sek3_compose(sek3_exp(xi), x.x), x.t)


def anchor_mask(mu: ContactState, mu_prev: ContactState | None) -> tuple[bool, bool]:
    """Feet whose contact point must be re-anchored: swinging or just landed."""
    prev = (1.0, 1.0) if mu_prev is None else (mu_prev.mu_l, mu_prev.mu_r)
    return tuple(m < 0.5 or q < 0.5 for m, q in zip((mu.mu_l, mu.mu_r), prev))


def reanchor_contacts(x: FilterState, y_l, y_r, anchor: tuple[bool, bool]) -> FilterState:
    """Place the selected contact points at ``p + R h``.

    A swinging foot carries no information about the base, so its contact
    column follows the kinematics; a foot that just landed starts from its
    measured touchdown point.
    """
    if not any(anchor):
        return x
    cols = x.x.cols.copy()
    for j, (a, y) in enumerate(zip(anchor, (y_l, y_r))):
        if a:
            cols[:, 2 + j] = x.rot @ np.asarray(y)[:3] + x.pos
    return FilterState(type(x.x)(x.rot, cols, x.x.n_ops), x.t)


def reanchor_covariance(p: np.ndarray, x: FilterState, anchor: tuple[bool, bool], noise: NoiseParams) -> np.ndarray:
    """Covariance counterpart of :func:`reanchor_contacts`.

    For a contact placed at ``p + R h`` the right-invariant error equals the
    position error plus the rotated kinematic noise.
    """
    if not any(anchor):
        return p
    p = p.copy()
    for a, blk in zip(anchor, (_CL, _CR)):
        if a:
            p[blk, :] = p[_P, :]
            p[:, blk] = p[:, _P]
            p[blk, blk] = p[_P, _P] + (x.rot * noise.n_obs) @ x.rot.T
    return p


def update_covariance(p: np.ndarray, k: GainMatrix, mu: ContactState, x: FilterState, noise: NoiseParams) -> np.ndarray:
    """Joseph-form update for the masked gain actually applied."""
    khat = mask_gain(k, mu).k
    h = np.vstack([observation_jacobian(0), observation_jacobian(1)])
    n_i = (x.rot * noise.n_obs) @ x.rot.T
    n = np.kron(np.eye(2), n_i)
    a = np.eye(DIM) - khat @ h
    out = a @ p @ a.T + khat @ n @ khat.T
    return 0.5 * (out + out.T)


class InEKF:
    """Stateful analytic filter owning its estimate and covariance."""

    def __init__(self, x0: FilterState, p0: np.ndarray, noise: NoiseParams | None = None):
        self.x = x0
        self.p = np.array(p0, dtype=float)
        self.noise = noise or NoiseParams()
        self.gain = GainMatrix.zeros()
        self.mu_prev: ContactState | None = None

    def propagate(self, u: ImuSample, dt: float, mu: ContactState) -> FilterState:
        self.p = propagate_covariance(self.p, self.x, dt, self.noise, mu)
        self.x = propagate_state(self.x, u, dt)
        return self.x

    def update(self, y_l, y_r, mu: ContactState) -> FilterState:
        anchor = anchor_mask(mu, self.mu_prev)
        self.mu_prev = mu
        self.x = reanchor_contacts(self.x, y_l, y_r, anchor)
        self.p = reanchor_covariance(self.p, self.x, anchor, self.noise)
        self.gain = analytic_gain(self.p, mu, self.noise, self.x, self.gain)
        self.p = update_covariance(self.p, self.gain, mu, self.x, self.noise)
        self.x = correct(self.x, self.gain, y_l, y_r, mu)
        return self.x


def default_initial_covariance() -> np.ndarray:
    """Confident in the initial contacts, which anchor the otherwise unobservable position."""
    return np.diag(np.r_[np.full(3, 1e-4), np.full(3, 1e-4), np.full(3, 1e-2), np.full(6, 1e-8)])


def run_inekf(
    traj: Trajectory,
    noise: NoiseParams | None = None,
    x0: FilterState | None = None,
    p0: np.ndarray | None = None,
    force_mu: ContactState | None = None,
) -> list[FilterState]:
    """Run the analytic filter over every record; the first output is ``x0``."""
    x0 = traj.ground_truth(0) if x0 is None else x0
    p0 = default_initial_covariance() if p0 is None else p0
    f = InEKF(x0, p0, noise)
    f.mu_prev = force_mu or traj.contact(0)
    out = [f.x]
    for i in range(1, len(traj)):
        mu = force_mu or traj.contact(i)
        try:
            f.propagate(traj.imu(i - 1), traj.dt(i), mu)
            f.update(*traj.observations(i), mu)
        except (FilterError, ValueError, np.linalg.LinAlgError) as e:
            raise FilterError(f"record {i}: {e}") from e
        out.append(f.x)
    return out
