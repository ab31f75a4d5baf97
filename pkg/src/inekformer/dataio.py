"""Trajectory CSV files, signal preprocessing and TOML config loading."""
from __future__ import annotations

import csv
import sys
from pathlib import Path

import numpy as np
from scipy import signal

from .trajectory import Trajectory

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

FORMAT_TAG = "# inekformer-trajectory v1"
_GROUPS = (
    ("t", ("t",)),
    ("gyro", ("gyro_x", "gyro_y", "gyro_z")),
    ("accel", ("accel_x", "accel_y", "accel_z")),
    ("h_l", ("h_l_x", "h_l_y", "h_l_z")),
    ("h_r", ("h_r_x", "h_r_y", "h_r_z")),
    ("fz_l", ("fz_l",)),
    ("fz_r", ("fz_r",)),
    ("quat", ("gt_qw", "gt_qx", "gt_qy", "gt_qz")),
    ("vel", ("gt_vx", "gt_vy", "gt_vz")),
    ("pos", ("gt_px", "gt_py", "gt_pz")),
    ("c_l", ("gt_cl_x", "gt_cl_y", "gt_cl_z")),
    ("c_r", ("gt_cr_x", "gt_cr_y", "gt_cr_z")),
)
COLUMNS = tuple(c for _, cols in _GROUPS for c in cols)
STANCE_COLUMNS = ("stance_l", "stance_r")
QUAT_TOL = 1e-6


class TrajectoryFormatError(ValueError):
    """Schema violation in a trajectory file; ``row`` is 1-based over data rows."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(message if row is None else f"row {row}: {message}")


def _matrix(traj: Trajectory) -> np.ndarray:
    cols = [np.asarray(getattr(traj, name), dtype=float).reshape(len(traj), -1) for name, _ in _GROUPS]
    return np.hstack(cols)


def validate(traj: Trajectory) -> None:
    """Raise :class:`TrajectoryFormatError` on the first violating row."""
    if len(traj) == 0:
        raise TrajectoryFormatError("empty trajectory")
    m = _matrix(traj)
    bad = np.flatnonzero(~np.isfinite(m).all(axis=1))
    if len(bad):
        raise TrajectoryFormatError("non-finite value", int(bad[0]) + 1)
    dec = np.flatnonzero(np.diff(traj.t) <= 0.0)
    if len(dec):
        raise TrajectoryFormatError("t not strictly increasing", int(dec[0]) + 2)
    qn = np.abs(np.linalg.norm(traj.quat, axis=1) - 1.0)
    bad = np.flatnonzero(qn > QUAT_TOL)
    if len(bad):
        raise TrajectoryFormatError(f"quaternion norm off by {qn[bad[0]]:.3g}", int(bad[0]) + 1)


def save_trajectory(traj: Trajectory, path) -> None:
    """Write ``traj`` with the versioned header; values round-trip bit-exactly."""
    validate(traj)
    m = _matrix(traj)
    header = list(COLUMNS)
    if traj.stance is not None:
        m = np.hstack([m, traj.stance.astype(float)])
        header += STANCE_COLUMNS
    with open(path, "w", newline="") as fh:
        fh.write(FORMAT_TAG + "\n")
        fh.write(",".join(header) + "\n")
        for row in m:
            fh.write(",".join("%.17g" % v for v in row) + "\n")


def load_trajectory(path) -> Trajectory:
    """Read and validate a trajectory file."""
    with open(path, newline="") as fh:
        tag = fh.readline().rstrip("\r\n")
        if tag != FORMAT_TAG:
            raise TrajectoryFormatError(f"expected format tag {FORMAT_TAG!r}, got {tag[:40]!r}")
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header[: len(COLUMNS)]) != COLUMNS:
            raise TrajectoryFormatError("malformed header")
        extra = tuple(header[len(COLUMNS):])
        if extra not in ((), STANCE_COLUMNS):
            raise TrajectoryFormatError(f"unknown columns {extra}")
        rows = []
        for r, line in enumerate(reader, start=1):
            if len(line) != len(header):
                raise TrajectoryFormatError(f"expected {len(header)} fields, got {len(line)}", r)
            try:
                rows.append([float(v) for v in line])
            except ValueError as e:
                raise TrajectoryFormatError(str(e), r) from None
    if not rows:
        raise TrajectoryFormatError("no data rows")
    m = np.array(rows)
    kw, j = {}, 0
    for name, cols in _GROUPS:
        block = m[:, j:j + len(cols)]
        kw[name] = block[:, 0] if len(cols) == 1 else block
        j += len(cols)
    if extra:
        kw["stance"] = m[:, j:] > 0.5
    traj = Trajectory(**kw)
    validate(traj)
    return traj


def butterworth3_lowpass(x, fc: float, fs: float, zero_phase: bool = True) -> np.ndarray:
    """Order-3 Butterworth low-pass along axis 0.

    The digital design is the bilinear transform with the cutoff prewarped,
    so the -3 dB point lands exactly on ``fc``.  By default the filter runs
    forward and backward with mirror padding at both ends.
    """
    if not 0.0 < fc < fs / 2.0:
        raise ValueError(f"cutoff {fc} Hz outside (0, {fs / 2.0}) Hz")
    b, a = signal.butter(3, fc, btype="low", fs=fs)
    x = np.asarray(x, dtype=float)
    if not zero_phase:
        return signal.lfilter(b, a, x, axis=0)
    padlen = min(3 * max(len(a), len(b)), len(x) - 1)
    return signal.filtfilt(b, a, x, axis=0, padtype="even", padlen=padlen)


def smooth_trajectory(traj: Trajectory, fc: float) -> Trajectory:
    """Low-pass the sensor channels (IMU, kinematics, forces); ground truth is left alone."""
    fs = 1.0 / float(np.median(np.diff(traj.t)))
    lp = lambda a: butterworth3_lowpass(a, fc, fs)  # noqa: E731
    return traj.copy(
        gyro=lp(traj.gyro), accel=lp(traj.accel), h_l=lp(traj.h_l), h_r=lp(traj.h_r),
        fz_l=lp(traj.fz_l), fz_r=lp(traj.fz_r),
    )


def resample(traj: Trajectory, f_target: float) -> Trajectory:
    """Linear interpolation onto a uniform grid starting at ``t[0]``.

    Quaternions are renormalized after interpolation and stance flags take
    the nearest source sample.  The grid is ``t0 + k / f_target`` so that
    integer rate ratios land exactly on source samples.
    """
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    if not f_target > 0.0:
        raise ValueError("f_target must be positive")
    t0, t1 = float(traj.t[0]), float(traj.t[-1])
    n = int(np.floor((t1 - t0) * f_target + 1e-9)) + 1
    grid = t0 + np.arange(n) / f_target
    grid[-1] = min(grid[-1], t1)
    # snap grid points that agree with a source stamp up to rounding
    idx = np.clip(np.searchsorted(traj.t, grid), 0, len(traj) - 1)
    for cand in (idx, np.maximum(idx - 1, 0)):
        close = np.abs(traj.t[cand] - grid) <= 1e-9 * max(1.0, abs(t1))
        grid[close] = traj.t[cand][close]

    def interp(a):
        a = np.asarray(a, dtype=float)
        if a.ndim == 1:
            return np.interp(grid, traj.t, a)
        return np.column_stack([np.interp(grid, traj.t, a[:, k]) for k in range(a.shape[1])])

    kw = {name: interp(getattr(traj, name)) for name, _ in _GROUPS if name not in ("t", "quat")}
    # sign-continuous quaternions so neighbours interpolate on one hemisphere
    q = traj.quat.copy()
    flips = np.cumsum(np.r_[0, np.sum(q[1:] * q[:-1], axis=1) < 0.0]) % 2
    q[flips == 1] *= -1.0
    q = interp(q)
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    kw["quat"] = np.where(q[:, :1] < 0.0, -q, q)
    if traj.stance is not None:
        near = np.clip(np.searchsorted(traj.t, grid), 1, len(traj) - 1)
        left_closer = (grid - traj.t[near - 1]) <= (traj.t[near] - grid)
        kw["stance"] = traj.stance[np.where(left_closer, near - 1, near)]
    return Trajectory(t=grid, **kw)


def preprocess(traj: Trajectory, fc: float | None = 15.0, f_target: float | None = None) -> Trajectory:
    out = traj if fc is None else smooth_trajectory(traj, fc)
    return out if f_target is None else resample(out, f_target)


def load_config(path) -> dict:
    """Parse a TOML config file into nested dicts."""
    with open(Path(path), "rb") as fh:
        return tomllib.load(fh)


def parse_overrides(items) -> dict:
    """``section.key=value`` strings to a nested dict; values parsed as TOML scalars."""
    out: dict = {}
    for item in items or ():
        if "=" not in item:
            raise ValueError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        try:
            value = tomllib.loads(f"v = {raw}")["v"]
        except tomllib.TOMLDecodeError:
            value = raw
        node = out
        *parents, leaf = key.strip().split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return out


def merge_config(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        out[k] = merge_config(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out
