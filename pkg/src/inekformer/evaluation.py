"""Error metrics and the hybrid (learned-gain) filter loop."""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .features import FeatureHistory, ScalerParams, apply_scaler, compute_features
from .gainformer import ModelParams, predict
from .inekf import (
    FilterError,
    InEKF,
    NoiseParams,
    anchor_mask,
    correct,
    default_initial_covariance,
    propagate_state,
    reanchor_contacts,
    run_inekf,
)
from .liegroup import so3_log
from .robotstate import ContactState, FilterState
from .trajectory import Trajectory

RMSE_LABELS = ("phi_x", "phi_y", "phi_z", "v_x", "v_y", "v_z", "p_x", "p_y", "p_z")
MODES = ("AR", "1A")


def eta(x_est: FilterState, x_gt: FilterState) -> np.ndarray:
    """Orientation ``log(R_est R_gt^T)``, then velocity and position differences."""
    return np.concatenate([so3_log(x_est.rot @ x_gt.rot.T), x_est.vel - x_gt.vel, x_est.pos - x_gt.pos])


def rmse(etas) -> np.ndarray:
    e = np.asarray(etas, dtype=float)
    if e.ndim != 2 or len(e) == 0:
        raise ValueError("rmse needs at least one error vector")
    return np.sqrt(np.mean(e * e, axis=0))


def trajectory_errors(estimates: list[FilterState], traj: Trajectory) -> np.ndarray:
    return np.stack([eta(x, traj.ground_truth(i)) for i, x in enumerate(estimates)])


@dataclass
class RunReport:
    rmse: np.ndarray
    mode: str
    config_hash: str
    timing_ms: dict = field(default_factory=dict)
    n_steps: int = 0
    input_checksum: str = ""

    def __post_init__(self):
        self.rmse = np.asarray(self.rmse, dtype=float)
        if self.rmse.shape != (9,) or np.any(self.rmse < 0):
            raise ValueError("rmse must hold nine non-negative entries")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")

    def as_dict(self) -> dict:
        d = asdict(self)
        d["rmse"] = dict(zip(RMSE_LABELS, map(float, self.rmse)))
        return d

    @property
    def position_rmse(self) -> float:
        """Norm of the three position RMSE entries."""
        return float(np.linalg.norm(self.rmse[6:]))


def config_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


def timing_stats(seconds) -> dict:
    ms = 1e3 * np.asarray(seconds, dtype=float)
    if len(ms) == 0:
        return {"p50": float("nan"), "p95": float("nan"), "max": float("nan"), "n": 0}
    return {"p50": float(np.percentile(ms, 50)), "p95": float(np.percentile(ms, 95)), "max": float(ms.max()), "n": int(len(ms))}


class InputDigest:
    """Running checksum of the inputs a filter consumed (IMU, dt, observations, contacts)."""

    def __init__(self):
        self._h = hashlib.sha256()

    def add(self, traj: Trajectory, i: int) -> None:
        for a in (traj.gyro[i - 1], traj.accel[i - 1], [traj.dt(i)], traj.h_l[i], traj.h_r[i], traj.contact_array()[i]):
            self._h.update(np.asarray(a, dtype=float).tobytes())

    def hexdigest(self) -> str:
        return self._h.hexdigest()[:16]


def run_hybrid_filter(
    traj: Trajectory,
    params: ModelParams,
    scaler: ScalerParams,
    mode: str = "AR",
    noise: NoiseParams | None = None,
    x0: FilterState | None = None,
    p0: np.ndarray | None = None,
) -> tuple[list[FilterState], RunReport]:
    """InEKFormer loop: propagate, features, scaled window, gain, mask, correct.

    Until the history window fills, the analytic gain drives the correction.
    In ``1A`` mode the states entering each step are reset to ground truth;
    in ``AR`` mode the filter's own estimates are fed back.
    """
    mode = mode.upper()
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    x0 = traj.ground_truth(0) if x0 is None else x0
    analytic = InEKF(x0, default_initial_covariance() if p0 is None else p0, noise)
    analytic.mu_prev = traj.contact(0)
    hist = FeatureHistory(params.config.n_history)
    digest = InputDigest()
    est = [x0]
    times = []
    for i in range(1, len(traj)):
        tic = time.perf_counter()
        digest.add(traj, i)
        if mode == "1A":
            prev, prev2 = traj.ground_truth(i - 1), traj.ground_truth(max(i - 2, 0))
        else:
            prev, prev2 = est[i - 1], est[max(i - 2, 0)]
        mu = traj.contact(i)
        y_now, y_prev = traj.observations(i), traj.observations(i - 1)
        try:
            xbar = propagate_state(prev, traj.imu(i - 1), traj.dt(i))
            xbar = reanchor_contacts(xbar, *y_now, anchor_mask(mu, traj.contact(i - 1)))
            frame = compute_features(prev, prev2, xbar, y_now, y_prev, mu)
            hist.push(apply_scaler(frame, scaler))
            if hist.full:
                x = correct(xbar, predict(hist.window(), params), *y_now, mu)
            else:
                analytic.x = prev
                analytic.mu_prev = traj.contact(i - 1)
                analytic.propagate(traj.imu(i - 1), traj.dt(i), mu)
                x = analytic.update(*y_now, mu)
        except (FilterError, ValueError, np.linalg.LinAlgError) as e:
            raise FilterError(f"record {i}: {e}") from e
        est.append(FilterState(x.x, float(traj.t[i])))
        if hist.full:
            times.append(time.perf_counter() - tic)
    report = RunReport(
        rmse(trajectory_errors(est, traj)),
        mode,
        config_hash({"model": asdict(params.config), "noise": asdict(noise or NoiseParams())}),
        timing_stats(times),
        len(traj),
        digest.hexdigest(),
    )
    return est, report


def run_analytic_filter(
    traj: Trajectory, noise: NoiseParams | None = None, mode: str = "AR", force_mu: ContactState | None = None
) -> tuple[list[FilterState], RunReport]:
    """The analytic InEKF with the same report format (``1A`` resets the state each step)."""
    mode = mode.upper()
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    digest = InputDigest()
    times = []
    if mode == "AR":
        tic = time.perf_counter()
        est = run_inekf(traj, noise, force_mu=force_mu)
        times = [(time.perf_counter() - tic) / max(len(traj) - 1, 1)] * (len(traj) - 1)
    else:
        f = InEKF(traj.ground_truth(0), default_initial_covariance(), noise)
        f.mu_prev = traj.contact(0)
        est = [f.x]
        for i in range(1, len(traj)):
            tic = time.perf_counter()
            mu = force_mu or traj.contact(i)
            f.x = traj.ground_truth(i - 1)
            f.propagate(traj.imu(i - 1), traj.dt(i), mu)
            est.append(f.update(*traj.observations(i), mu))
            times.append(time.perf_counter() - tic)
    for i in range(1, len(traj)):
        digest.add(traj, i)
    report = RunReport(
        rmse(trajectory_errors(est, traj)), mode, config_hash({"noise": asdict(noise or NoiseParams())}),
        timing_stats(times), len(traj), digest.hexdigest(),
    )
    return est, report


def dead_reckoning(traj: Trajectory) -> list[FilterState]:
    """IMU-only integration from the true initial state."""
    x = traj.ground_truth(0)
    out = [x]
    for i in range(1, len(traj)):
        x = propagate_state(x, traj.imu(i - 1), traj.dt(i))
        out.append(FilterState(x.x, float(traj.t[i])))
    return out


def windowed_rmse(estimates: list[FilterState], traj: Trajectory, start: int, stop: int | None = None) -> np.ndarray:
    stop = len(traj) if stop is None else stop
    return rmse(trajectory_errors(estimates, traj)[start:stop])
