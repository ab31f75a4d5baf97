"""Matrix Lie group primitives for SO(3) and SE_K(3).

Twists are ordered ``(phi, slot_1, ..., slot_K)`` where ``phi`` is the
rotation vector and each slot is a translation-like 3-vector.  The dense
matrix form of an SE_K(3) element is::

    [ R  c_1 ... c_K ]
    [ 0     I_K      ]

Log convention at an angle of exactly pi: the axis sign is chosen so that
its first non-zero component is positive.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np

SMALL_ANGLE = 1e-4
REORTHO_EVERY = 1000


def _series(theta2: float, coeffs: tuple[float, ...]) -> float:
    out = 0.0
    for c in reversed(coeffs):
        out = out * theta2 + c
    return out


def _alt(denoms: list[int]) -> tuple[float, ...]:
    return tuple((-1) ** k / d for k, d in enumerate(denoms))


# Power series in theta^2 of the coefficient functions below.
_A = _alt([factorial(2 * k + 1) for k in range(6)])  # sin t / t
_B = _alt([factorial(2 * k + 2) for k in range(6)])  # (1 - cos t) / t^2
_C = _alt([factorial(2 * k + 3) for k in range(6)])  # (t - sin t) / t^3
_D = _alt([factorial(2 * k + 4) for k in range(6)])  # (t^2/2 + cos t - 1) / t^4
_E = tuple((-1) ** j * (2 * j - 2) / (2 * factorial(2 * j + 1)) for j in range(2, 8))


def coef_a(theta: float) -> float:
    if theta < SMALL_ANGLE:
        return _series(theta * theta, _A[:3])
    return np.sin(theta) / theta


def coef_b(theta: float) -> float:
    if theta < SMALL_ANGLE:
        return _series(theta * theta, _B[:3])
    h = np.sin(0.5 * theta) / theta
    return 2.0 * h * h


# The three higher-order coefficients lose all precision to cancellation well
# above SMALL_ANGLE, so their series branch reaches further out.
def coef_c(theta: float) -> float:
    if theta < 0.1:
        return _series(theta * theta, _C)
    return (theta - np.sin(theta)) / theta**3


def coef_d(theta: float) -> float:
    if theta < 0.3:
        return _series(theta * theta, _D)
    return (0.5 * theta * theta + np.cos(theta) - 1.0) / theta**4


def coef_e(theta: float) -> float:
    if theta < 0.3:
        return _series(theta * theta, _E)
    return (2.0 * theta - 3.0 * np.sin(theta) + theta * np.cos(theta)) / (2.0 * theta**5)


def skew(w) -> np.ndarray:
    """Hat operator: ``skew(w) @ u == np.cross(w, u)``."""
    x, y, z = w
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(m: np.ndarray) -> np.ndarray:
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def so3_exp(phi) -> np.ndarray:
    """Rodrigues formula."""
    phi = np.asarray(phi, dtype=float)
    theta = float(np.linalg.norm(phi))
    k = skew(phi)
    return np.eye(3) + coef_a(theta) * k + coef_b(theta) * (k @ k)


def so3_log(r: np.ndarray) -> np.ndarray:
    """Inverse of :func:`so3_exp`, returning a rotation vector of norm <= pi."""
    r = np.asarray(r, dtype=float)
    anti = 0.5 * vee(r - r.T)  # sin(theta) * axis
    s = float(np.linalg.norm(anti))
    c = 0.5 * (np.trace(r) - 1.0)
    theta = float(np.arctan2(s, c))
    if theta < SMALL_ANGLE:
        # theta / sin(theta)
        return anti * _series(theta * theta, (1.0, 1.0 / 6.0, 7.0 / 360.0))
    if theta < np.pi - 1e-3:
        return anti * (theta / s)
    # Near pi the antisymmetric part carries no usable direction; take the
    # axis from the symmetric part (1 - cos theta) n n^T instead.
    sym = 0.5 * (r + r.T) - c * np.eye(3)
    i = int(np.argmax(np.diag(sym)))
    axis = sym[:, i] / np.sqrt(sym[i, i])
    axis /= np.linalg.norm(axis)
    d = float(axis @ anti)
    if d < 0.0 or (d == 0.0 and axis[np.flatnonzero(np.abs(axis) > 1e-12)[0]] < 0.0):
        axis = -axis
    return theta * axis


def gamma0(phi) -> np.ndarray:
    return so3_exp(phi)


def gamma1(phi) -> np.ndarray:
    """Integral of ``so3_exp(s * phi)`` over ``s`` in [0, 1]; the SO(3) left Jacobian."""
    phi = np.asarray(phi, dtype=float)
    theta = float(np.linalg.norm(phi))
    k = skew(phi)
    return np.eye(3) + coef_b(theta) * k + coef_c(theta) * (k @ k)


def gamma2(phi) -> np.ndarray:
    """Double integral: ``int_0^1 int_0^s so3_exp(u * phi) du ds``."""
    phi = np.asarray(phi, dtype=float)
    theta = float(np.linalg.norm(phi))
    k = skew(phi)
    return 0.5 * np.eye(3) + coef_c(theta) * k + coef_d(theta) * (k @ k)


def so3_jl_inv(phi) -> np.ndarray:
    return np.linalg.inv(gamma1(phi))


def gram_schmidt(r: np.ndarray) -> np.ndarray:
    x = r[:, 0] / np.linalg.norm(r[:, 0])
    y = r[:, 1] - (x @ r[:, 1]) * x
    y /= np.linalg.norm(y)
    return np.column_stack([x, y, np.cross(x, y)])


@dataclass(frozen=True)
class GroupElement:
    """An SE_K(3) element stored as rotation ``r`` (3x3) and ``cols`` (3xK).

    ``n_ops`` counts compositions since the last re-orthonormalization.
    """

    r: np.ndarray
    cols: np.ndarray
    n_ops: int = field(default=0, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "r", np.asarray(self.r, dtype=float).reshape(3, 3))
        object.__setattr__(self, "cols", np.asarray(self.cols, dtype=float).reshape(3, -1))

    @property
    def k(self) -> int:
        return self.cols.shape[1]

    @classmethod
    def identity(cls, k: int = 4) -> "GroupElement":
        return cls(np.eye(3), np.zeros((3, k)))

    @classmethod
    def from_dense(cls, m: np.ndarray) -> "GroupElement":
        m = np.asarray(m, dtype=float)
        return cls(m[:3, :3].copy(), m[:3, 3:].copy())

    @classmethod
    def from_top(cls, top: np.ndarray) -> "GroupElement":
        top = np.asarray(top, dtype=float)
        return cls(top[:, :3].copy(), top[:, 3:].copy())

    def top(self) -> np.ndarray:
        """The informative 3 x (3+K) block."""
        return np.hstack([self.r, self.cols])

    def dense(self) -> np.ndarray:
        k = self.k
        m = np.eye(3 + k)
        m[:3, :3] = self.r
        m[:3, 3:] = self.cols
        return m

    def col(self, i: int) -> np.ndarray:
        return self.cols[:, i]


def sek3_exp(xi) -> GroupElement:
    """Exponential of a twist ``(phi, slot_1..slot_K)`` of length 3+3K."""
    xi = np.asarray(xi, dtype=float)
    phi = xi[:3]
    slots = xi[3:].reshape(-1, 3).T
    return GroupElement(so3_exp(phi), gamma1(phi) @ slots)


def sek3_hat(xi) -> np.ndarray:
    """Lie-algebra matrix of a twist."""
    xi = np.asarray(xi, dtype=float)
    k = (len(xi) - 3) // 3
    m = np.zeros((3 + k, 3 + k))
    m[:3, :3] = skew(xi[:3])
    m[:3, 3:] = xi[3:].reshape(-1, 3).T
    return m


def sek3_log(x: GroupElement) -> np.ndarray:
    phi = so3_log(x.r)
    slots = np.linalg.solve(gamma1(phi), x.cols)
    return np.concatenate([phi, slots.T.ravel()])


def _bump(a: GroupElement, b: GroupElement, r: np.ndarray, cols: np.ndarray) -> GroupElement:
    n = max(a.n_ops, b.n_ops) + 1
    if n >= REORTHO_EVERY:
        r, n = gram_schmidt(r), 0
    return GroupElement(r, cols, n)


def sek3_compose(a: GroupElement, b: GroupElement) -> GroupElement:
    if a.k != b.k:
        raise ValueError(f"cannot compose SE_{a.k}(3) with SE_{b.k}(3)")
    return _bump(a, b, a.r @ b.r, a.r @ b.cols + a.cols)


def sek3_inverse(a: GroupElement) -> GroupElement:
    rt = a.r.T
    return GroupElement(rt, -rt @ a.cols, a.n_ops)


def sek3_adjoint(x: GroupElement) -> np.ndarray:
    """Adjoint matrix acting on twists ordered (phi, slot_1..slot_K)."""
    k = x.k
    n = 3 + 3 * k
    ad = np.zeros((n, n))
    for i in range(k + 1):
        ad[3 * i : 3 * i + 3, 3 * i : 3 * i + 3] = x.r
    for i in range(k):
        ad[3 + 3 * i : 6 + 3 * i, :3] = skew(x.cols[:, i]) @ x.r
    return ad


def q_matrix(phi, rho) -> np.ndarray:
    """Off-diagonal block of the SE_K(3) left Jacobian for one slot."""
    theta = float(np.linalg.norm(phi))
    p = skew(phi)
    r = skew(rho)
    pr = p @ r
    rp = r @ p
    prp = pr @ p
    pp = p @ p
    return (
        0.5 * r
        + coef_c(theta) * (pr + rp + prp)
        + coef_d(theta) * (pp @ r + r @ pp - 3.0 * prp)
        + coef_e(theta) * (prp @ p + pp @ rp)
    )


def sek3_left_jacobian(xi) -> np.ndarray:
    """``exp(xi + d) ~= exp(J d) exp(xi)`` to first order in ``d``."""
    xi = np.asarray(xi, dtype=float)
    phi = xi[:3]
    k = (len(xi) - 3) // 3
    jl = gamma1(phi)
    out = np.zeros((len(xi), len(xi)))
    for i in range(k + 1):
        out[3 * i : 3 * i + 3, 3 * i : 3 * i + 3] = jl
    for i in range(k):
        out[3 + 3 * i : 6 + 3 * i, :3] = q_matrix(phi, xi[3 + 3 * i : 6 + 3 * i])
    return out
