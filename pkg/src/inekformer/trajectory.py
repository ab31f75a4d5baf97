"""Columnar in-memory trajectory matching the CSV record schema."""
from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np
from scipy.spatial.transform import Rotation

from .robotstate import (
    LEFT,
    RIGHT,
    ContactForces,
    ContactState,
    FilterState,
    ImuSample,
    LegObservation,
    contact_probability,
    observation_vector,
)


def quat_to_rot(q: np.ndarray) -> np.ndarray:
    """Unit quaternion(s) ``(w, x, y, z)`` to rotation matrices."""
    q = np.asarray(q, dtype=float)
    return Rotation.from_quat(q[..., [1, 2, 3, 0]]).as_matrix()


def rot_to_quat(r: np.ndarray) -> np.ndarray:
    """Rotation matrices to unit quaternions ``(w, x, y, z)`` with ``w >= 0``."""
    q = Rotation.from_matrix(np.asarray(r, dtype=float)).as_quat()[..., [3, 0, 1, 2]]
    return np.where(q[..., :1] < 0.0, -q, q)


@dataclass
class Trajectory:
    """One recorded (or synthesized) trajectory, one row per timestamp.

    IMU row ``i`` is the sample that drives propagation from ``t[i]`` to
    ``t[i+1]``.  Ground truth orientation is stored as a ``(w, x, y, z)``
    quaternion.  ``stance`` is optional simulator metadata (``N x 2`` bool)
    and is not part of the file schema.
    """

    t: np.ndarray
    gyro: np.ndarray
    accel: np.ndarray
    h_l: np.ndarray
    h_r: np.ndarray
    fz_l: np.ndarray
    fz_r: np.ndarray
    quat: np.ndarray
    vel: np.ndarray
    pos: np.ndarray
    c_l: np.ndarray
    c_r: np.ndarray
    stance: np.ndarray | None = None

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if v is not None:
                setattr(self, f.name, np.asarray(v, dtype=bool if f.name == "stance" else float))

    def __len__(self) -> int:
        return len(self.t)

    def slice(self, start: int | None = None, stop: int | None = None) -> "Trajectory":
        s = np.s_[start:stop]
        kw = {f.name: (None if getattr(self, f.name) is None else getattr(self, f.name)[s]) for f in fields(self)}
        return Trajectory(**kw)

    def copy(self, **changes) -> "Trajectory":
        kw = {f.name: (None if getattr(self, f.name) is None else getattr(self, f.name).copy()) for f in fields(self)}
        kw.update(changes)
        return Trajectory(**kw)

    @property
    def rot(self) -> np.ndarray:
        return quat_to_rot(self.quat)

    def dt(self, i: int) -> float:
        return float(self.t[i] - self.t[i - 1])

    def imu(self, i: int) -> ImuSample:
        return ImuSample(self.gyro[i], self.accel[i], float(self.t[i]))

    def leg(self, i: int) -> LegObservation:
        return LegObservation(self.h_l[i], self.h_r[i], float(self.t[i]))

    def observations(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        return observation_vector(self.h_l[i], LEFT), observation_vector(self.h_r[i], RIGHT)

    def forces(self, i: int) -> ContactForces:
        return ContactForces(float(self.fz_l[i]), float(self.fz_r[i]))

    def contact(self, i: int) -> ContactState:
        return ContactState(contact_probability(self.fz_l[i]), contact_probability(self.fz_r[i]))

    def contact_array(self) -> np.ndarray:
        return np.column_stack([contact_probability(self.fz_l), contact_probability(self.fz_r)])

    def ground_truth(self, i: int) -> FilterState:
        return FilterState.from_parts(
            quat_to_rot(self.quat[i]), self.vel[i], self.pos[i], self.c_l[i], self.c_r[i], float(self.t[i])
        )

    def ground_truth_tops(self) -> np.ndarray:
        """``N x 3 x 7`` stack of ground-truth state blocks."""
        return np.concatenate(
            [self.rot, np.stack([self.vel, self.pos, self.c_l, self.c_r], axis=2)], axis=2
        )

    def with_ground_truth(self, states: list[FilterState]) -> "Trajectory":
        return replace(
            self,
            quat=rot_to_quat(np.stack([s.rot for s in states])),
            vel=np.stack([s.vel for s in states]),
            pos=np.stack([s.pos for s in states]),
            c_l=np.stack([s.contact_l for s in states]),
            c_r=np.stack([s.contact_r for s in states]),
        )
