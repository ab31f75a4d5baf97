"""Gain-estimator inputs: the five per-step features and their robust scaling."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .liegroup import sek3_compose, sek3_inverse
from .robotstate import ContactState, FilterState, innovation

ENC_DIM = 12  # f1 || f2
DEC_DIM = 42  # f3 || f4
SCALED_DIM = ENC_DIM + DEC_DIM


@dataclass(frozen=True)
class FeatureFrame:
    """One timestep of inputs.

    f1: observation difference (left || right, first three entries each).
    f2: innovations of the propagated state.
    f3: top 3x7 block of ``X+_{t-1} (X+_{t-2})^-1``, row-major.
    f4: top 3x7 block of ``X+_{t-1} Xbar_t^-1``, row-major.
    f5: contact states; used only to mask the predicted gain.
    """

    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray
    f4: np.ndarray
    f5: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        for name, n in (("f1", 6), ("f2", 6), ("f3", 21), ("f4", 21), ("f5", 2)):
            v = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if v.size != n:
                raise ValueError(f"{name} must have {n} entries, got {v.size}")
            object.__setattr__(self, name, v)

    @property
    def encoder_input(self) -> np.ndarray:
        return np.concatenate([self.f1, self.f2])

    @property
    def decoder_input(self) -> np.ndarray:
        return np.concatenate([self.f3, self.f4])

    def scaled_part(self) -> np.ndarray:
        """The 54 dimensions touched by the scaler (f1..f4)."""
        return np.concatenate([self.f1, self.f2, self.f3, self.f4])

    @classmethod
    def from_scaled_part(cls, v: np.ndarray, f5, t: float = 0.0) -> "FeatureFrame":
        return cls(v[:6], v[6:12], v[12:33], v[33:54], f5, t)


def compute_features(
    x_corr_prev: FilterState,
    x_corr_prev2: FilterState,
    x_prop: FilterState,
    y_now: tuple[np.ndarray, np.ndarray],
    y_prev: tuple[np.ndarray, np.ndarray],
    mu: ContactState,
) -> FeatureFrame:
    f1 = np.concatenate([(np.asarray(a) - np.asarray(b))[:3] for a, b in zip(y_now, y_prev)])
    f2 = np.concatenate([innovation(x_prop, y) for y in y_now])
    f3 = sek3_compose(x_corr_prev.x, sek3_inverse(x_corr_prev2.x)).top().ravel()
    f4 = sek3_compose(x_corr_prev.x, sek3_inverse(x_prop.x)).top().ravel()
    return FeatureFrame(f1, f2, f3, f4, mu.as_array(), x_prop.t)


class FeatureHistory:
    """Fixed-length window of frames; a window is emitted only once full."""

    def __init__(self, n_history: int):
        if n_history < 1:
            raise ValueError("n_history must be >= 1")
        self.n_history = n_history
        self._frames: deque[FeatureFrame] = deque(maxlen=n_history)

    def __len__(self) -> int:
        return len(self._frames)

    def push(self, frame: FeatureFrame) -> None:
        self._frames.append(frame)

    @property
    def full(self) -> bool:
        return len(self._frames) == self.n_history

    def window(self) -> list[FeatureFrame] | None:
        return list(self._frames) if self.full else None


def sliding_windows(frames: list, n_history: int) -> list[list]:
    """All full windows of a stream, oldest first."""
    return [frames[i : i + n_history] for i in range(len(frames) - n_history + 1)]


@dataclass(frozen=True)
class ScalerParams:
    center: np.ndarray
    scale: np.ndarray
    q_low: float = 0.05
    q_high: float = 0.95

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        s = np.asarray(self.scale, dtype=float)
        if c.shape != (SCALED_DIM,) or s.shape != (SCALED_DIM,):
            raise ValueError(f"scaler needs {SCALED_DIM} centers and scales")
        if np.any(s <= 0.0):
            raise ValueError("scales must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "scale", s)

    @classmethod
    def identity(cls) -> "ScalerParams":
        return cls(np.zeros(SCALED_DIM), np.ones(SCALED_DIM))


def fit_scaler(frames, q_low: float = 0.05, q_high: float = 0.95) -> ScalerParams:
    """Median and inter-quantile range per dimension over all frames."""
    frames = list(frames)
    if len(frames) < 2:
        raise ValueError("fit_scaler needs at least two frames")
    if not 0.0 <= q_low < q_high <= 1.0:
        raise ValueError("need 0 <= q_low < q_high <= 1")
    data = np.stack([f.scaled_part() for f in frames])
    center = np.median(data, axis=0)
    lo, hi = np.quantile(data, [q_low, q_high], axis=0)  # linear interpolation
    scale = hi - lo
    scale[scale < 1e-12] = 1.0
    return ScalerParams(center, scale, q_low, q_high)


def apply_scaler(frame: FeatureFrame, params: ScalerParams) -> FeatureFrame:
    v = (frame.scaled_part() - params.center) / params.scale
    return FeatureFrame.from_scaled_part(v, frame.f5, frame.t)


def window_arrays(window: list[FeatureFrame]) -> tuple[np.ndarray, np.ndarray]:
    """Stack a window into ``(n, 12)`` encoder and ``(n, 42)`` decoder inputs."""
    return (
        np.stack([f.encoder_input for f in window]),
        np.stack([f.decoder_input for f in window]),
    )
