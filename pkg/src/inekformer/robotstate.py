"""Filter state, sensor samples and the contact model."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .liegroup import GroupElement

GRAVITY = np.array([0.0, 0.0, -9.81])
FORCE_THRESHOLD = 50.0  # N
LEFT, RIGHT = "left", "right"


@dataclass(frozen=True)
class FilterState:
    """SE_4(3) state: rotation, velocity, position and both foot contacts."""

    x: GroupElement
    t: float = 0.0

    @classmethod
    def from_parts(cls, rot, vel, pos, contact_l, contact_r, t: float = 0.0) -> "FilterState":
        cols = np.column_stack([vel, pos, contact_l, contact_r])
        return cls(GroupElement(np.asarray(rot, dtype=float), cols), float(t))

    @classmethod
    def from_top(cls, top: np.ndarray, t: float = 0.0) -> "FilterState":
        return cls(GroupElement.from_top(top), float(t))

    @property
    def rot(self) -> np.ndarray:
        return self.x.r

    @property
    def vel(self) -> np.ndarray:
        return self.x.cols[:, 0]

    @property
    def pos(self) -> np.ndarray:
        return self.x.cols[:, 1]

    @property
    def contact_l(self) -> np.ndarray:
        return self.x.cols[:, 2]

    @property
    def contact_r(self) -> np.ndarray:
        return self.x.cols[:, 3]

    def top(self) -> np.ndarray:
        return self.x.top()

    def dense(self) -> np.ndarray:
        return self.x.dense()

    def with_x(self, x: GroupElement) -> "FilterState":
        return FilterState(x, self.t)


@dataclass(frozen=True)
class ImuSample:
    gyro: np.ndarray
    accel: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        g = np.asarray(self.gyro, dtype=float)
        a = np.asarray(self.accel, dtype=float)
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(a))):
            raise ValueError("IMU sample must be finite")
        if np.linalg.norm(a) >= 200.0:
            raise ValueError(f"implausible acceleration {np.linalg.norm(a):.1f} m/s^2")
        object.__setattr__(self, "gyro", g)
        object.__setattr__(self, "accel", a)


@dataclass(frozen=True)
class LegObservation:
    """Forward-kinematics foot positions in the floating-base frame."""

    h_l: np.ndarray
    h_r: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        for name in ("h_l", "h_r"):
            h = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(h)) or np.linalg.norm(h) >= 2.0:
                raise ValueError(f"{name} outside the leg workspace: {h}")
            object.__setattr__(self, name, h)


@dataclass(frozen=True)
class ContactForces:
    """Vertical foot forces, negative under load."""

    fz_l: float
    fz_r: float


@dataclass(frozen=True)
class ContactState:
    mu_l: float
    mu_r: float

    def __post_init__(self):
        if not (0.0 <= self.mu_l <= 1.0 and 0.0 <= self.mu_r <= 1.0):
            raise ValueError(f"contact states must lie in [0, 1], got {self.mu_l}, {self.mu_r}")

    @classmethod
    def from_forces(cls, f: ContactForces) -> "ContactState":
        return cls(contact_probability(f.fz_l), contact_probability(f.fz_r))

    def as_array(self) -> np.ndarray:
        return np.array([self.mu_l, self.mu_r])


def observation_vector(h, side: str) -> np.ndarray:
    """Right-invariant observation ``[h, 0, 1, s_L, s_R]`` for one foot.

    The -1 sits in the column of the observed contact so that the first
    three entries of ``X @ Y`` equal ``R h + p - c_side``.
    """
    y = np.zeros(7)
    y[:3] = h
    y[4] = 1.0
    if side == LEFT:
        y[5] = -1.0
    elif side == RIGHT:
        y[6] = -1.0
    else:
        raise ValueError(f"unknown side {side!r}")
    return y


def innovation(x: FilterState | GroupElement, y) -> np.ndarray:
    """First three entries of ``X @ Y``."""
    g = x.x if isinstance(x, FilterState) else x
    return g.top() @ np.asarray(y, dtype=float)


def contact_probability(fz):
    """Logistic contact state from the vertical force (negative under load)."""
    z = np.clip(FORCE_THRESHOLD + np.asarray(fz, dtype=float), -500.0, 500.0)
    # 1 - 1/(1+e^-z) == e^-z/(1+e^-z) == 1/(1+e^z), computed without cancellation
    mu = 1.0 / (1.0 + np.exp(z))
    return float(mu) if np.ndim(mu) == 0 else mu
