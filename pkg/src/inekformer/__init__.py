"""Contact-aided invariant EKF on SE_4(3) with a Transformer-predicted Kalman gain."""
from .evaluation import RunReport, eta, rmse, run_analytic_filter, run_hybrid_filter
from .gainformer import GainConfig, ModelParams, init_params, load_checkpoint, save_checkpoint
from .inekf import InEKF, NoiseParams, run_inekf
from .robotstate import FilterState
from .simgait import GaitParams, noise_preset, simulate
from .training import TrainConfig, train
from .trajectory import Trajectory

__all__ = [
    "FilterState", "GaitParams", "GainConfig", "InEKF", "ModelParams", "NoiseParams", "RunReport", "TrainConfig",
    "Trajectory", "eta", "init_params", "load_checkpoint", "noise_preset", "rmse", "run_analytic_filter",
    "run_hybrid_filter", "run_inekf", "save_checkpoint", "simulate", "train",
]
__version__ = "0.1.0"
