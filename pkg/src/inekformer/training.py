"""Training the gain estimator through the filter correction.

Three modes share one loss, the squared Frobenius distance between the
corrected and the true state block, averaged over the steps of a window:

* ``tf``  teacher forcing: every step is conditioned on ground truth; steps
  are independent, so they are drawn as shuffled minibatches.
* ``ar``  autoregressive: the filter runs on its own estimates over
  truncated windows of ``truncation_len`` steps, backpropagating through
  the whole window.  The estimates carry over (detached) between windows.
* ``ss``  scheduled sampling: like ``ar``, but each step is conditioned on
  ground truth with a probability that decays over the epochs.
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.special import expit

from . import autodiff as ad
from .autodiff import Tensor
from .features import FeatureFrame, ScalerParams, fit_scaler
from .gainformer import GainConfig, ModelParams, forward_tensors, init_params, leaves_of, save_checkpoint
from .hybrid import StepInputs, correct_top, frame_tensors, innovations, predict_top, top_loss
from .inekf import GainMatrix, NoiseParams, correct, run_inekf
from .robotstate import ContactState, FilterState
from .trajectory import Trajectory

MODES = ("tf", "ar", "ss")
METRIC_COLUMNS = ("step", "epoch", "lr", "eps", "train_loss", "val_loss")


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "tf"
    epochs: int = 20
    max_steps: int | None = None
    truncation_len: int = 10
    batch_size: int = 32
    lr_max: float = 1e-3
    pct_warmup: float = 0.3
    div_factor: float = 25.0
    final_div: float = 1e4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-12
    clip_norm: float | None = 1.0
    ss_midpoint: float | None = None
    ss_steepness: float | None = None
    q_low: float = 0.05
    q_high: float = 0.95
    val_fraction: float = 0.25
    exp_grad: str = "analytic"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.truncation_len < 1:
            raise ValueError("truncation_len must be >= 1")
        if not 0.0 < self.pct_warmup < 1.0:
            raise ValueError("pct_warmup must lie in (0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.exp_grad not in ("analytic", "fd"):
            raise ValueError("exp_grad must be 'analytic' or 'fd'")

    @classmethod
    def from_mapping(cls, m: dict) -> "TrainConfig":
        return cls(**{k: m[k] for k in cls.__dataclass_fields__ if k in m})

    @property
    def midpoint(self) -> float:
        return 0.5 * self.epochs if self.ss_midpoint is None else self.ss_midpoint

    @property
    def steepness(self) -> float:
        return 10.0 / self.epochs if self.ss_steepness is None else self.ss_steepness


# loss on single states --------------------------------------------------------

def loss(k: GainMatrix, x_prop: FilterState, y_l, y_r, mu: ContactState, x_gt: FilterState) -> float:
    """Squared Frobenius error of the corrected state (top block).

    ``k`` is the raw gain; the correction applies the contact mask.
    """
    d = correct(x_prop, k, y_l, y_r, mu).top() - x_gt.top()
    return float(np.sum(d * d))


def loss_gradient(
    k: GainMatrix, x_prop: FilterState, y_l, y_r, mu: ContactState, x_gt: FilterState, exp_grad: str = "analytic"
) -> np.ndarray:
    """``d loss / d k`` (15 x 6) through the mask and the exponential."""
    kt = ad.parameter(k.k)
    z = np.concatenate([x_prop.top() @ np.asarray(y_l), x_prop.top() @ np.asarray(y_r)])
    mask = np.repeat([mu.mu_l, mu.mu_r], 3)
    xi = (kt * mask) @ z
    top_loss(correct_top(Tensor(x_prop.top()), xi, exp_grad), x_gt.top()).backward()
    return kt.grad


# schedules and optimizer -------------------------------------------------------

def ss_probability(epoch: float, cfg: TrainConfig) -> float:
    """Probability of conditioning a step on ground truth: ``1 / (1 + exp(s (e - m)))``."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return float(expit(-cfg.steepness * (epoch - cfg.midpoint)))


def step_probability(epoch: float, cfg: TrainConfig) -> float:
    if cfg.mode == "tf":
        return 1.0
    if cfg.mode == "ar":
        return 0.0
    return ss_probability(epoch, cfg)


@dataclass(frozen=True)
class OneCycle:
    lr_max: float
    total_steps: int
    pct_warmup: float = 0.3
    div_factor: float = 25.0
    final_div: float = 1e4

    @classmethod
    def from_config(cls, cfg: TrainConfig, total_steps: int) -> "OneCycle":
        return cls(cfg.lr_max, total_steps, cfg.pct_warmup, cfg.div_factor, cfg.final_div)


def onecycle_lr(step: int, sched: OneCycle) -> float:
    """Cosine rise from ``lr_max/div`` to ``lr_max``, then cosine decay to ``lr_max/(div*final_div)``."""
    if not 0 <= step <= sched.total_steps:
        raise ValueError(f"step {step} outside [0, {sched.total_steps}]")
    lr0 = sched.lr_max / sched.div_factor
    lr_min = lr0 / sched.final_div
    warm_end = sched.pct_warmup * sched.total_steps
    if step <= warm_end:
        frac, start, end = step / warm_end, lr0, sched.lr_max
    else:
        frac, start, end = (step - warm_end) / (sched.total_steps - warm_end), sched.lr_max, lr_min
    return end + (start - end) * 0.5 * (1.0 + math.cos(math.pi * frac))


@dataclass
class OptimizerState:
    m: dict
    v: dict
    step: int = 0

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "OptimizerState":
        return cls({n: np.zeros_like(t) for n, t in params.tensors.items()},
                   {n: np.zeros_like(t) for n, t in params.tensors.items()})


def clip_gradients(grads: dict, max_norm: float | None) -> tuple[dict, float]:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm is None or norm <= max_norm:
        return grads, norm
    s = max_norm / norm
    return {n: g * s for n, g in grads.items()}, norm


def adam_step(
    params: ModelParams, grads: dict, state: OptimizerState, lr: float,
    beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
) -> tuple[ModelParams, OptimizerState]:
    """Bias-corrected Adam."""
    t = state.step + 1
    m, v, new = {}, {}, {}
    c1, c2 = 1.0 - beta1**t, 1.0 - beta2**t
    for n, p in params.tensors.items():
        g = grads[n]
        m[n] = beta1 * state.m[n] + (1.0 - beta1) * g
        v[n] = beta2 * state.v[n] + (1.0 - beta2) * g * g
        new[n] = p - lr * (m[n] / c1) / (np.sqrt(v[n] / c2) + eps)
    return params.replace(new), OptimizerState(m, v, t)


# data preparation --------------------------------------------------------------

@dataclass
class Carry:
    """Filter context entering a training window: two states and past frames."""

    prev: Tensor
    prev2: Tensor
    frames: list  # (enc, dec) scaled tensors, most recent last

    def detach(self, n_keep: int) -> "Carry":
        return Carry(self.prev.detach(), self.prev2.detach(),
                     [(e.detach(), d.detach()) for e, d in self.frames[-n_keep:]] if n_keep else [])


@dataclass
class Segment:
    """One trajectory prepared for training over model steps ``[start, stop)``."""

    data: StepInputs
    start: int
    stop: int
    analytic: np.ndarray  # analytic-filter estimates for records 0..stop-1, (stop, 3, 7)

    @property
    def context(self) -> np.ndarray:
        """Estimates before the first model step."""
        return self.analytic[: self.start]

    @property
    def n_steps(self) -> int:
        return self.stop - self.start


def _raw_frame(data: StepInputs, i: int, prev, prev2) -> np.ndarray:
    with ad.no_grad():
        prev, prev2 = Tensor(prev), Tensor(prev2)
        xbar = predict_top(data, i, prev)
        enc, dec = frame_tensors(data, i, prev, prev2, xbar, ScalerParams.identity())
    return np.concatenate([enc.value, dec.value])


def teacher_frames(data: StepInputs, stop: int) -> np.ndarray:
    """Ground-truth-conditioned raw frames for records ``0..stop-1`` (row 0 unused)."""
    out = np.zeros((stop, 54))
    for i in range(1, stop):
        out[i] = _raw_frame(data, i, data.gt[i - 1], data.gt[max(i - 2, 0)])
    return out


def estimate_frames(data: StepInputs, tops: np.ndarray) -> np.ndarray:
    """Raw frames conditioned on a chain of estimates (row 0 unused)."""
    out = np.zeros((len(tops), 54))
    for i in range(1, len(tops)):
        out[i] = _raw_frame(data, i, tops[i - 1], tops[max(i - 2, 0)])
    return out


def fit_training_scaler(segments: list[Segment], q_low: float, q_high: float) -> ScalerParams:
    """Robust scaler over the training records.

    Frames conditioned on ground truth (what teacher forcing sees) are
    pooled with frames conditioned on the analytic filter's estimates, so
    the quantile ranges also cover the spread of estimate-conditioned
    inputs that autoregressive rollouts produce.
    """
    raws = np.concatenate(
        [teacher_frames(s.data, s.stop)[1:] for s in segments] + [estimate_frames(s.data, s.analytic)[1:] for s in segments]
    )
    frames = [FeatureFrame.from_scaled_part(r, (0.0, 0.0)) for r in raws]
    return fit_scaler(frames, q_low, q_high)


def prepare_segment(
    traj: Trajectory, n_history: int, start: int | None = None, stop: int | None = None,
    noise: NoiseParams | None = None,
) -> Segment:
    start = n_history if start is None else start
    stop = len(traj) if stop is None else stop
    if start < n_history:
        raise ValueError(f"model steps start at record {n_history} (need a full history window)")
    if stop <= start or stop > len(traj):
        raise ValueError(f"empty or out-of-range step range [{start}, {stop})")
    head = traj.slice(0, stop)
    est = run_inekf(head, noise)
    return Segment(StepInputs.from_trajectory(head), start, stop, np.stack([s.top() for s in est]))


def split_ranges(n_records: int, n_history: int, val_fraction: float) -> tuple[tuple[int, int], tuple[int, int]]:
    """Training and validation model-step ranges (the last fraction validates)."""
    n_model = n_records - n_history
    n_train = int(round(n_model * (1.0 - val_fraction)))
    if n_train < 1:
        raise ValueError("trajectory too short for a training split")
    return (n_history, n_history + n_train), (n_history + n_train, n_records)


def initial_carry(seg: Segment, scaler: ScalerParams, n_history: int) -> Carry:
    """Context from the analytic filter's own estimates before the first model step."""
    ctx = seg.context
    frames = []
    for i in range(max(1, seg.start - n_history + 1), seg.start):
        raw = _raw_frame(seg.data, i, ctx[i - 1], ctx[max(i - 2, 0)])
        s = (raw - scaler.center) / scaler.scale
        frames.append((Tensor(s[:12]), Tensor(s[12:])))
    return Carry(Tensor(ctx[-1]), Tensor(ctx[-2] if len(ctx) > 1 else ctx[-1]), frames)


# losses over windows -----------------------------------------------------------

@dataclass
class TeacherBatch:
    enc: np.ndarray  # B x n x 12, scaled
    dec: np.ndarray  # B x n x 42, scaled
    xbar: np.ndarray  # B x 3 x 7
    z: np.ndarray  # B x 6
    mask: np.ndarray  # B x 6
    gt: np.ndarray  # B x 3 x 7


def teacher_batch(seg_frames: list, segments: list[Segment], picks, scaler: ScalerParams, n: int) -> TeacherBatch:
    enc, dec, xbar, z, mask, gt = [], [], [], [], [], []
    for s_idx, i in picks:
        seg, raw = segments[s_idx], seg_frames[s_idx]
        w = (raw[i - n + 1 : i + 1] - scaler.center) / scaler.scale
        enc.append(w[:, :12])
        dec.append(w[:, 12:])
        d = seg.data
        m, c = d.prop[i]
        xb = (d.gt[i - 1] @ m + c) @ d.anchor[i]
        xbar.append(xb)
        z.append((xb @ d.y[i].T).T.ravel())
        mask.append(d.mask_row(i))
        gt.append(d.gt[i])
    return TeacherBatch(*(np.stack(a) for a in (enc, dec, xbar, z, mask, gt)))


def teacher_loss(leaves, batch: TeacherBatch, cfg: GainConfig, exp_grad: str = "analytic") -> Tensor:
    """Mean one-step loss over independent ground-truth-conditioned samples."""
    k = forward_tensors(leaves, batch.enc, batch.dec, cfg)
    xi = ((k * batch.mask[:, None, :]) @ batch.z[:, :, None]).reshape(len(batch.z), 15)
    return top_loss(correct_top(Tensor(batch.xbar), xi, exp_grad), batch.gt) * (1.0 / len(batch.z))


def rollout(
    leaves, seg: Segment, t0: int, t1: int, carry: Carry, scaler: ScalerParams, cfg: GainConfig,
    eps: float = 0.0, rng: np.random.Generator | None = None, exp_grad: str = "analytic",
) -> tuple[Tensor, Carry, list[np.ndarray], list[bool]]:
    """Run the hybrid filter over records ``[t0, t1)``; returns the mean loss.

    Each step is conditioned on ground truth with probability ``eps``
    (scheduled sampling); otherwise on the filter's own previous estimates.
    """
    n = cfg.n_history
    if len(carry.frames) < n - 1:
        raise ValueError(f"window needs {n - 1} context frames, got {len(carry.frames)}")
    d = seg.data
    prev, prev2, frames = carry.prev, carry.prev2, list(carry.frames)
    total = Tensor(0.0)
    tops, coins = [], []
    for i in range(t0, t1):
        use_gt = eps >= 1.0 or (eps > 0.0 and rng is not None and rng.random() < eps)
        coins.append(use_gt)
        p1, p2 = (Tensor(d.gt[i - 1]), Tensor(d.gt[max(i - 2, 0)])) if use_gt else (prev, prev2)
        xbar = predict_top(d, i, p1)
        frames.append(frame_tensors(d, i, p1, p2, xbar, scaler))
        window = frames[-n:]
        k = forward_tensors(leaves, ad.stack([e for e, _ in window]), ad.stack([f for _, f in window]), cfg)
        xi = (k.reshape(15, 6) * d.mask_row(i)) @ innovations(d, i, xbar)
        x = correct_top(xbar, xi, exp_grad)
        total = total + top_loss(x, d.gt[i])
        tops.append(x.value)
        prev2, prev = prev, x
    return total * (1.0 / (t1 - t0)), Carry(prev, prev2, frames[-(n - 1):] if n > 1 else []), tops, coins


def tbptt_ss_step(
    seg: Segment, t0: int, carry: Carry, params: ModelParams, opt: OptimizerState, cfg: TrainConfig,
    scaler: ScalerParams, epoch: int, lr: float, rng: np.random.Generator,
) -> tuple[ModelParams, OptimizerState, dict, Carry]:
    """One truncated window: roll out ``truncation_len`` steps, backpropagate, one Adam step."""
    t1 = min(t0 + cfg.truncation_len, seg.stop)
    if t0 < seg.start or t1 <= t0:
        raise ValueError(f"window [{t0}, {t1}) outside the segment [{seg.start}, {seg.stop})")
    eps = step_probability(epoch, cfg)
    leaves = leaves_of(params)
    loss_t, new_carry, _, coins = rollout(leaves, seg, t0, t1, carry, scaler, params.config, eps, rng, cfg.exp_grad)
    loss_t.backward()
    grads = {n: (np.zeros_like(t.value) if t.grad is None else t.grad) for n, t in leaves.items()}
    grads, norm = clip_gradients(grads, cfg.clip_norm)
    params, opt = adam_step(params, grads, opt, lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    metrics = {"train_loss": float(loss_t.value), "grad_norm": norm, "eps": eps, "gt_steps": int(sum(coins))}
    return params, opt, metrics, new_carry.detach(params.config.n_history - 1)


# training driver ---------------------------------------------------------------

@dataclass
class TrainResult:
    params: ModelParams
    scaler: ScalerParams
    log: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def final_val_loss(self) -> float:
        vals = [r["val_loss"] for r in self.log if r.get("val_loss") not in (None, "")]
        return vals[-1] if vals else float("nan")


class Trainer:
    """Holds prepared data so losses can be evaluated consistently before and after training."""

    def __init__(self, segments: list[Segment], cfg: TrainConfig, model_cfg: GainConfig,
                 val_segments: list[Segment] | None = None, scaler: ScalerParams | None = None):
        self.cfg = cfg
        self.model_cfg = model_cfg
        self.segments = segments
        self.val_segments = val_segments or []
        self.scaler = scaler or fit_training_scaler(segments, cfg.q_low, cfg.q_high)
        n = model_cfg.n_history
        self.frames = [teacher_frames(s.data, s.stop) for s in segments]
        self.val_frames = [teacher_frames(s.data, s.stop) for s in self.val_segments]
        self.samples = [(j, i) for j, s in enumerate(segments) for i in range(s.start, s.stop)]
        self.val_samples = [(j, i) for j, s in enumerate(self.val_segments) for i in range(s.start, s.stop)]
        for s in segments + self.val_segments:
            if s.start < n:
                raise ValueError("segments must start after a full history window")

    # evaluation
    def teacher_loss(self, params: ModelParams, validation: bool = False) -> float:
        segs, frames, samples = (
            (self.val_segments, self.val_frames, self.val_samples) if validation
            else (self.segments, self.frames, self.samples)
        )
        if not samples:
            return float("nan")
        with ad.no_grad():
            b = teacher_batch(frames, segs, samples, self.scaler, self.model_cfg.n_history)
            return float(teacher_loss(params.tensors, b, params.config).value)

    def rollout_loss(self, params: ModelParams) -> float:
        """Mean autoregressive loss over every training step (windows chained, no ground truth)."""
        total, count = 0.0, 0
        with ad.no_grad():
            for seg in self.segments:
                carry = initial_carry(seg, self.scaler, self.model_cfg.n_history)
                lt, _, _, _ = rollout(params.tensors, seg, seg.start, seg.stop, carry, self.scaler, params.config)
                total += float(lt.value) * seg.n_steps
                count += seg.n_steps
        return total / count

    def objective(self, params: ModelParams) -> float:
        """The quantity the configured mode minimizes, over the whole training set."""
        return self.teacher_loss(params) if self.cfg.mode == "tf" else self.rollout_loss(params)

    def steps_per_epoch(self) -> int:
        if self.cfg.mode == "tf":
            return math.ceil(len(self.samples) / self.cfg.batch_size)
        k = self.cfg.truncation_len
        return sum(math.ceil(s.n_steps / k) for s in self.segments)

    def run(self, params: ModelParams | None = None, log_path=None, ckpt_dir=None,
            checkpoint_every: int = 0, progress=None) -> TrainResult:
        cfg = self.cfg
        t_start = time.perf_counter()
        params = params or init_params(self.model_cfg)
        opt = OptimizerState.zeros_like(params)
        total = cfg.max_steps or cfg.epochs * self.steps_per_epoch()
        sched = OneCycle.from_config(cfg, total)
        rng = np.random.default_rng(cfg.seed)
        log: list[dict] = []
        step = 0
        epoch = 0
        while step < total:
            if cfg.mode == "tf":
                order = rng.permutation(len(self.samples))
                for b0 in range(0, len(order), cfg.batch_size):
                    if step >= total:
                        break
                    picks = [self.samples[j] for j in order[b0 : b0 + cfg.batch_size]]
                    lr = onecycle_lr(step, sched)
                    params, opt, m = self._teacher_step(params, opt, picks, lr)
                    step += 1
                    log.append({"step": step, "epoch": epoch, "lr": lr, "eps": 1.0, "train_loss": m, "val_loss": ""})
            else:
                for seg in self.segments:
                    carry = initial_carry(seg, self.scaler, self.model_cfg.n_history)
                    for t0 in range(seg.start, seg.stop, cfg.truncation_len):
                        if step >= total:
                            break
                        lr = onecycle_lr(step, sched)
                        params, opt, m, carry = tbptt_ss_step(seg, t0, carry, params, opt, cfg, self.scaler, epoch, lr, rng)
                        step += 1
                        log.append({"step": step, "epoch": epoch, "lr": lr, "eps": m["eps"],
                                    "train_loss": m["train_loss"], "val_loss": ""})
            epoch += 1
            log[-1]["val_loss"] = self.teacher_loss(params, validation=True) if self.val_samples else ""
            if progress is not None:
                progress(log[-1])
            if ckpt_dir and checkpoint_every and epoch % checkpoint_every == 0:
                save_checkpoint(Path(ckpt_dir) / f"epoch{epoch:04d}", params, self.scaler)
        if ckpt_dir:
            save_checkpoint(ckpt_dir, params, self.scaler, {"train_config": asdict(cfg)})
        if log_path:
            write_metrics(log, log_path)
        return TrainResult(params, self.scaler, log, time.perf_counter() - t_start)

    def _teacher_step(self, params, opt, picks, lr):
        leaves = leaves_of(params)
        b = teacher_batch(self.frames, self.segments, picks, self.scaler, self.model_cfg.n_history)
        lt = teacher_loss(leaves, b, params.config, self.cfg.exp_grad)
        lt.backward()
        grads = {n: (np.zeros_like(t.value) if t.grad is None else t.grad) for n, t in leaves.items()}
        grads, _ = clip_gradients(grads, self.cfg.clip_norm)
        params, opt = adam_step(params, grads, opt, lr, self.cfg.beta1, self.cfg.beta2, self.cfg.adam_eps)
        return params, opt, float(lt.value)


def build_trainer(trajs: list[Trajectory], cfg: TrainConfig, model_cfg: GainConfig,
                  noise: NoiseParams | None = None) -> Trainer:
    """Split every trajectory into a training head and a validation tail."""
    train_segs, val_segs = [], []
    for tr in trajs:
        (a, b), (c, d) = split_ranges(len(tr), model_cfg.n_history, cfg.val_fraction)
        train_segs.append(prepare_segment(tr, model_cfg.n_history, a, b, noise))
        if d > c:
            val_segs.append(prepare_segment(tr, model_cfg.n_history, c, d, noise))
    return Trainer(train_segs, cfg, model_cfg, val_segs)


def train(trajs: list[Trajectory], cfg: TrainConfig, model_cfg: GainConfig | None = None, **kw) -> TrainResult:
    return build_trainer(trajs, cfg, model_cfg or GainConfig()).run(**kw)


def write_metrics(log: list[dict], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS, extrasaction="ignore")
        w.writeheader()
        w.writerows(log)


# random search -----------------------------------------------------------------

def sample_space(space: dict, rng: np.random.Generator) -> dict:
    """One uniform draw; entries are ``{choices=[...]}``, ``{low, high[, log, int]}`` or constants."""
    out = {}
    for name in sorted(space):
        spec = space[name]
        if not isinstance(spec, dict):
            out[name] = spec
        elif "choices" in spec:
            out[name] = spec["choices"][int(rng.integers(len(spec["choices"])))]
        else:
            lo, hi = float(spec["low"]), float(spec["high"])
            if lo > hi:
                raise ValueError(f"{name}: low > high")
            v = math.exp(rng.uniform(math.log(lo), math.log(hi))) if spec.get("log") else rng.uniform(lo, hi)
            out[name] = int(round(v)) if spec.get("int") else float(v)
    return out


def random_search(space: dict, n_trials: int, budget: int, trajs: list[Trajectory], seed: int = 0,
                  base: dict | None = None, log_path=None) -> tuple[dict, list[dict]]:
    """Seeded uniform draws, each trained for ``budget`` steps and ranked by validation loss."""
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    rng = np.random.default_rng(seed)
    log = []
    for trial in range(n_trials):
        draw = {**(base or {}), **sample_space(space, rng)}
        cfg = replace(TrainConfig.from_mapping(draw), max_steps=budget, seed=seed + trial)
        model_cfg = GainConfig.from_mapping(draw)
        t0 = time.perf_counter()
        res = train(trajs, cfg, model_cfg)
        val = res.final_val_loss
        log.append({"trial": trial, "val_loss": val, "train_loss": res.log[-1]["train_loss"],
                    "seconds": time.perf_counter() - t0, "config": json.dumps(draw, sort_keys=True)})
    ranked = sorted(log, key=lambda r: (math.isnan(r["val_loss"]), r["val_loss"]))
    if log_path:
        path = Path(log_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["trial", "val_loss", "train_loss", "seconds", "config"])
            w.writeheader()
            w.writerows(log)
    return json.loads(ranked[0]["config"]), log
