"""Differentiable filter step on the 3x7 state block.

Training backpropagates through corrections, propagation and feature
extraction over a truncated window.  Every piece except the exponential
correction is linear in the state block:

* propagation:  ``top+ = top @ M + C``
* re-anchoring: ``top' = top @ A`` (a contact column becomes ``R h + p``)
* innovations:  ``top @ y``

The correction ``exp(xi) X`` is a custom node with a closed-form gradient.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .features import ScalerParams
from .inekf import FilterError
from .liegroup import gamma0, gamma1, gamma2, sek3_exp, sek3_left_jacobian
from .robotstate import GRAVITY, ImuSample
from .trajectory import Trajectory

FD_STEP = 1e-7


def propagation_matrices(u: ImuSample, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """``(M, C)`` with ``propagate_state(X).top() == X.top() @ M + C``."""
    if not dt > 0.0 or dt > 0.1:
        raise FilterError(f"time step {dt!r} outside (0, 0.1]")
    phi = u.gyro * dt
    m = np.eye(7)
    m[:3, :3] = gamma0(phi)
    m[:3, 3] = gamma1(phi) @ u.accel * dt
    m[:3, 4] = gamma2(phi) @ u.accel * (dt * dt)
    m[3, 4] = dt
    c = np.zeros((3, 7))
    c[:, 3] = GRAVITY * dt
    c[:, 4] = 0.5 * GRAVITY * dt * dt
    return m, c


def anchor_matrix(y_l, y_r, anchor: tuple[bool, bool]) -> np.ndarray:
    """Right factor placing the selected contact columns at ``R h + p``."""
    a = np.eye(7)
    for j, (flag, y) in enumerate(zip(anchor, (y_l, y_r))):
        if flag:
            col = np.zeros(7)
            col[:3] = np.asarray(y)[:3]
            col[4] = 1.0
            a[:, 5 + j] = col
    return a


def _apply_exp(xi: np.ndarray, top: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    e = sek3_exp(xi)
    out = np.empty((3, 7))
    out[:, :3] = e.r @ top[:, :3]
    out[:, 3:] = e.r @ top[:, 3:] + e.cols
    return out, e.r


def correct_top(top: Tensor, xi: Tensor, exp_grad: str = "analytic") -> Tensor:
    """``exp(xi) X`` on state blocks; batched over a leading axis if present.

    The twist gradient uses the SE_4(3) left Jacobian: a twist perturbation
    ``d`` moves the output by ``exp(J_l d)`` on the left.  ``exp_grad="fd"``
    replaces it with forward differences (step 1e-7) for cross-checking.
    """
    top, xi = ad.as_tensor(top), ad.as_tensor(xi)
    batched = top.ndim == 3
    tops = top.value if batched else top.value[None]
    xis = xi.value if batched else xi.value[None]
    outs, rots = zip(*(_apply_exp(x, t) for x, t in zip(xis, tops)))
    out = np.stack(outs)

    def back(g):
        g = g if batched else g[None]
        g_top = np.stack([r.T @ gb for r, gb in zip(rots, g)])
        g_xi = np.empty_like(xis)
        for b in range(len(xis)):
            if exp_grad == "fd":
                base = out[b]
                for i in range(15):
                    d = xis[b].copy()
                    d[i] += FD_STEP
                    g_xi[b, i] = np.sum(g[b] * (_apply_exp(d, tops[b])[0] - base)) / FD_STEP
                continue
            a = g[b] @ out[b].T
            g_psi = np.concatenate([[a[2, 1] - a[1, 2], a[0, 2] - a[2, 0], a[1, 0] - a[0, 1]], g[b][:, 3:].T.ravel()])
            g_xi[b] = sek3_left_jacobian(xis[b]).T @ g_psi
        if not batched:
            return g_top[0], g_xi[0]
        return g_top, g_xi

    return Tensor.make(out if batched else out[0], (top, xi), back)


def relative_top(a: Tensor, b: Tensor) -> Tensor:
    """Top block of ``A B^-1`` for state blocks ``a`` and ``b``."""
    rel = a[:, :3] @ b[:, :3].T
    return ad.concat([rel, a[:, 3:] - rel @ b[:, 3:]], axis=1)


@dataclass
class StepInputs:
    """Per-record constants of one trajectory, precomputed once."""

    prop: list  # (M, C) driving record i from i-1; entry 0 unused
    anchor: list  # 7x7 anchoring factors
    y: np.ndarray  # N x 2 x 7 observation vectors
    mu: np.ndarray  # N x 2 contact states
    f1: np.ndarray  # N x 6, row 0 zero
    gt: np.ndarray  # N x 3 x 7 ground-truth blocks

    @classmethod
    def from_trajectory(cls, traj: Trajectory) -> "StepInputs":
        n = len(traj)
        y = np.stack([np.stack(traj.observations(i)) for i in range(n)])
        mu = traj.contact_array()
        prop = [None] + [propagation_matrices(traj.imu(i - 1), traj.dt(i)) for i in range(1, n)]
        anchor = [np.eye(7)]
        for i in range(1, n):
            flags = tuple(bool(m < 0.5 or q < 0.5) for m, q in zip(mu[i], mu[i - 1]))
            anchor.append(anchor_matrix(y[i, 0], y[i, 1], flags))
        f1 = np.zeros((n, 6))
        f1[1:] = (y[1:, :, :3] - y[:-1, :, :3]).reshape(n - 1, 6)
        return cls(prop, anchor, y, mu, f1, traj.ground_truth_tops())

    def __len__(self) -> int:
        return len(self.mu)

    def mask_row(self, i: int) -> np.ndarray:
        return np.repeat(self.mu[i], 3)


def predict_top(data: StepInputs, i: int, prev: Tensor) -> Tensor:
    """Propagated and re-anchored block for record ``i``."""
    m, c = data.prop[i]
    return (prev @ m + c) @ data.anchor[i]


def frame_tensors(data: StepInputs, i: int, prev: Tensor, prev2: Tensor, xbar: Tensor, scaler: ScalerParams):
    """Scaled encoder (12) and decoder (42) inputs of record ``i``."""
    f2 = xbar @ data.y[i].T  # 3 x 2
    enc = ad.concat([ad.as_tensor(data.f1[i]), f2[:, 0], f2[:, 1]], axis=0)
    dec = ad.concat([relative_top(prev, prev2).reshape(21), relative_top(prev, xbar).reshape(21)], axis=0)
    raw = ad.concat([enc, dec], axis=0)
    scaled = (raw - scaler.center) / scaler.scale
    return scaled[:12], scaled[12:]


def innovations(data: StepInputs, i: int, xbar: Tensor) -> Tensor:
    """Stacked left/right innovations, length 6."""
    f2 = xbar @ data.y[i].T
    return ad.concat([f2[:, 0], f2[:, 1]], axis=0)


def top_loss(top: Tensor, gt: np.ndarray) -> Tensor:
    """Squared Frobenius distance on the informative block (summed over a batch)."""
    d = top - gt
    return (d * d).sum()
