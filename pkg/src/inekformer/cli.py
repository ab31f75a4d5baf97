"""Command-line entry point: ``inekformer <command> [options]``.

Every command accepts ``--seed`` and ``--config`` (a TOML file with
``[simulate]``, ``[noise]``, ``[model]`` and ``[train]`` sections) plus
``--set section.key=value`` overrides.  Failures print one line
``error: <kind>: <message>`` on stderr and exit nonzero.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from .dataio import (
    TrajectoryFormatError,
    load_config,
    load_trajectory,
    merge_config,
    parse_overrides,
    preprocess,
    save_trajectory,
)
from .evaluation import RMSE_LABELS, run_analytic_filter, run_hybrid_filter
from .gainformer import GainConfig, load_checkpoint
from .inekf import FilterError, NoiseParams
from .simgait import MOTIONS, NOISE_PRESETS, GaitParams, noise_preset, simulate
from .training import TrainConfig, random_search, train
from .trajectory import rot_to_quat

EXIT_USAGE, EXIT_INPUT, EXIT_RUNTIME = 2, 3, 4


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int = EXIT_RUNTIME):
        super().__init__(message)
        self.kind, self.code = kind, code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message, EXIT_USAGE)


def _rate(text: str) -> float:
    """Accept ``0.00667`` as well as ``1/150``."""
    try:
        return float(Fraction(text))
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _config(args) -> dict:
    cfg = load_config(args.config) if args.config else {}
    return merge_config(cfg, parse_overrides(args.set))


def _noise(cfg: dict) -> NoiseParams:
    return NoiseParams.from_mapping(cfg.get("noise", {}))


def _trajectories(path: Path) -> list:
    files = sorted(path.glob("*.csv")) if path.is_dir() else [path]
    if not files:
        raise CliError("input", f"no .csv trajectories in {path}", EXIT_INPUT)
    return [load_trajectory(f) for f in files]


def _write_estimates(path: Path, traj, est) -> None:
    q = rot_to_quat(np.stack([x.rot for x in est]))
    cols = ["t", "qw", "qx", "qy", "qz", "vx", "vy", "vz", "px", "py", "pz"]
    rows = np.column_stack([traj.t, q, [x.vel for x in est], [x.pos for x in est]])
    with open(path, "w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join("%.17g" % v for v in r) + "\n")


def cmd_simulate(args, cfg):
    gait = {**cfg.get("simulate", {}), "motion": args.motion, "n_steps": args.steps, "dt": args.dt}
    gait.setdefault("jitter_seed", args.seed)
    traj = simulate(GaitParams(**gait), noise_preset(args.noise_preset, args.seed))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_trajectory(traj, args.out)
    return {"records": len(traj), "duration_s": float(traj.t[-1] - traj.t[0]), "out": str(args.out)}


def cmd_preprocess(args, cfg):
    traj = load_trajectory(args.inp)
    out = preprocess(traj, args.butterworth_fc, args.resample)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_trajectory(out, args.out)
    return {"records_in": len(traj), "records_out": len(out), "out": str(args.out)}


def cmd_train(args, cfg):
    trajs = _trajectories(Path(args.data))
    tcfg = TrainConfig.from_mapping({**cfg.get("train", {}), "mode": args.mode, "seed": args.seed})
    if args.steps is not None:
        tcfg = replace(tcfg, max_steps=args.steps)
    mcfg = GainConfig.from_mapping({"init_seed": args.seed, **cfg.get("model", {})})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res = train(trajs, tcfg, mcfg, log_path=out / "metrics.csv", ckpt_dir=out,
                checkpoint_every=int(cfg.get("train", {}).get("checkpoint_every", 0)))
    return {"steps": len(res.log), "final_train_loss": res.log[-1]["train_loss"],
            "final_val_loss": res.final_val_loss, "seconds": res.seconds, "checkpoint": str(out / "model.npz")}


def cmd_search(args, cfg):
    space = load_config(args.space)
    space = space.get("space", space)
    trajs = _trajectories(Path(args.data))
    base = {**cfg.get("model", {}), **cfg.get("train", {})}
    best, log = random_search(space, args.trials, args.budget, trajs, args.seed, base, args.out)
    return {"trials": len(log), "best": best, "log": str(args.out)}


def _hybrid(args, traj, noise, mode):
    params, scaler, _ = load_checkpoint(args.ckpt)
    return run_hybrid_filter(traj, params, scaler, mode, noise)


def _report_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_filter(args, cfg):
    traj = load_trajectory(args.traj)
    noise = _noise(cfg)
    mode = args.mode.upper()
    est, rep = _hybrid(args, traj, noise, mode) if args.ckpt else run_analytic_filter(traj, noise, mode)
    out = _report_dir(args.report)
    doc = {"filter": "inekformer" if args.ckpt else "inekf", **rep.as_dict()}
    (out / "report.json").write_text(json.dumps(doc, indent=2, default=float))
    _write_estimates(out / "estimates.csv", traj, est)
    return {"filter": doc["filter"], "mode": mode, "position_rmse": rep.position_rmse, "report": str(out)}


def cmd_compare(args, cfg):
    traj = load_trajectory(args.traj)
    noise = _noise(cfg)
    mode = args.mode.upper()
    est_a, rep_a = run_analytic_filter(traj, noise, mode)
    est_h, rep_h = _hybrid(args, traj, noise, mode)
    if rep_a.input_checksum != rep_h.input_checksum:
        raise CliError("consistency", "filters consumed different input streams")
    out = _report_dir(args.report)
    with open(out / "rmse.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["filter", "mode", *RMSE_LABELS, "p50_ms", "p95_ms", "input_checksum"])
        for name, rep in (("inekf", rep_a), ("inekformer", rep_h)):
            w.writerow([name, rep.mode, *("%.9g" % v for v in rep.rmse),
                        "%.4g" % rep.timing_ms["p50"], "%.4g" % rep.timing_ms["p95"], rep.input_checksum])
    with open(out / "tracks.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "gt_x", "gt_y", "inekf_x", "inekf_y", "inekformer_x", "inekformer_y"])
        for i in range(len(traj)):
            w.writerow(["%.17g" % v for v in (traj.t[i], *traj.pos[i, :2], *est_a[i].pos[:2], *est_h[i].pos[:2])])
    (out / "report.json").write_text(json.dumps({"inekf": rep_a.as_dict(), "inekformer": rep_h.as_dict()},
                                                indent=2, default=float))
    return {"inekf_position_rmse": rep_a.position_rmse, "inekformer_position_rmse": rep_h.position_rmse,
            "input_checksum": rep_a.input_checksum, "report": str(out)}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--config", type=Path, help="TOML config file")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="config override")

    p = _Parser(prog="inekformer", description="Contact-aided InEKF with a learned gain.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="synthesize a biped trajectory")
    s.add_argument("--motion", choices=MOTIONS, default="walk")
    s.add_argument("--steps", type=int, default=8)
    s.add_argument("--dt", type=_rate, default=1.0 / 150.0)
    s.add_argument("--noise-preset", choices=sorted(NOISE_PRESETS), default="default")
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("preprocess", parents=[common], help="Butterworth smoothing and resampling")
    s.add_argument("--in", dest="inp", type=Path, required=True)
    s.add_argument("--butterworth-fc", type=float, default=15.0)
    s.add_argument("--resample", type=float, default=None, help="target rate in Hz")
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("train", parents=[common], help="train a gain estimator")
    s.add_argument("--data", type=Path, required=True, help="trajectory CSV or directory of them")
    s.add_argument("--mode", choices=("tf", "ar", "ss"), default="tf")
    s.add_argument("--steps", type=int, default=None, help="optimizer step budget")
    s.add_argument("--out", type=Path, required=True, help="checkpoint directory")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("search", parents=[common], help="random hyperparameter search")
    s.add_argument("--space", type=Path, required=True)
    s.add_argument("--data", type=Path, required=True)
    s.add_argument("--trials", type=int, default=8)
    s.add_argument("--budget", type=int, default=200, help="optimizer steps per trial")
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_search)

    s = sub.add_parser("filter", parents=[common], help="run one filter on a trajectory")
    s.add_argument("--traj", type=Path, required=True)
    s.add_argument("--ckpt", type=Path, default=None, help="omit for the analytic InEKF")
    s.add_argument("--mode", type=str.lower, choices=("ar", "1a"), default="ar")
    s.add_argument("--report", type=Path, required=True)
    s.set_defaults(func=cmd_filter)

    s = sub.add_parser("compare", parents=[common], help="InEKF against InEKFormer")
    s.add_argument("--traj", type=Path, required=True)
    s.add_argument("--ckpt", type=Path, required=True)
    s.add_argument("--mode", type=str.lower, choices=("ar", "1a"), default="ar")
    s.add_argument("--report", type=Path, required=True)
    s.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        np.random.seed(args.seed)
        result = args.func(args, _config(args))
    except CliError as e:
        return _fail(e.kind, str(e), e.code)
    except (TrajectoryFormatError, FileNotFoundError) as e:
        return _fail("input", str(e), EXIT_INPUT)
    except FilterError as e:
        return _fail("filter", str(e), EXIT_RUNTIME)
    except (ValueError, TypeError, KeyError) as e:
        return _fail("config", str(e), EXIT_INPUT)
    print(json.dumps({"command": args.command, **result}, default=float))
    return 0


def _fail(kind: str, message: str, code: int) -> int:
    print(f"error: {kind}: {' '.join(message.split())}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
