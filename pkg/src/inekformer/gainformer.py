"""Encoder-decoder Transformer that predicts the 15x6 Kalman gain.

The encoder reads the embedded observation features (f1 || f2) and yields
the latent ``Z_N``; the decoder reads the embedded state features
(f3 || f4) with causal self-attention, cross-attends ``Z_N`` and yields
``Z_K``.  The head maps the last decoder position to the 90 gain entries.
Contact states never enter the network; they only mask the output.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .features import DEC_DIM, ENC_DIM, FeatureFrame, ScalerParams, window_arrays
from .inekf import GainMatrix, mask_gain  # noqa: F401  (re-exported)

GAIN_ROWS, GAIN_COLS = 15, 6
OUT_DIM = GAIN_ROWS * GAIN_COLS
CHECKPOINT_VERSION = 1
CHECKPOINT_FILE = "model.npz"


@dataclass(frozen=True)
class GainConfig:
    d_model: int = 32
    n_heads: int = 4
    n_enc: int = 2
    n_dec: int = 2
    d_ff: int = 64
    n_history: int = 10
    activation: str = "gelu"
    positional: bool = True
    init_seed: int = 0

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if self.activation not in ad.ACTIVATIONS:
            raise ValueError(f"activation must be one of {sorted(ad.ACTIVATIONS)}")
        if min(self.d_model, self.n_heads, self.d_ff, self.n_history) < 1 or min(self.n_enc, self.n_dec) < 0:
            raise ValueError("layer sizes must be positive")

    @classmethod
    def from_mapping(cls, m: dict) -> "GainConfig":
        known = {k: m[k] for k in cls.__dataclass_fields__ if k in m}
        return cls(**known)


def _attn_shapes(prefix: str, d: int) -> list[tuple[str, tuple]]:
    return [(f"{prefix}.{n}", s) for n in ("q", "k", "v", "o") for s in [(d, d)]] + [
        (f"{prefix}.b{n}", (d,)) for n in ("q", "k", "v", "o")
    ]


def _ln_shapes(prefix: str, d: int) -> list[tuple[str, tuple]]:
    return [(f"{prefix}.g", (d,)), (f"{prefix}.b", (d,))]


def _ff_shapes(prefix: str, d: int, f: int) -> list[tuple[str, tuple]]:
    return [(f"{prefix}.w1", (d, f)), (f"{prefix}.b1", (f,)), (f"{prefix}.w2", (f, d)), (f"{prefix}.b2", (d,))]


def param_shapes(cfg: GainConfig) -> list[tuple[str, tuple]]:
    """Every trainable tensor, in declared (checkpoint) order."""
    d, f = cfg.d_model, cfg.d_ff
    out = [("phi_y.w", (ENC_DIM, d)), ("phi_y.b", (d,)), ("phi_x.w", (DEC_DIM, d)), ("phi_x.b", (d,))]
    for i in range(cfg.n_enc):
        p = f"enc{i}"
        out += _ln_shapes(f"{p}.ln1", d) + _attn_shapes(f"{p}.self", d)
        out += _ln_shapes(f"{p}.ln2", d) + _ff_shapes(f"{p}.ff", d, f)
    out += _ln_shapes("enc.ln", d)
    for i in range(cfg.n_dec):
        p = f"dec{i}"
        out += _ln_shapes(f"{p}.ln1", d) + _attn_shapes(f"{p}.self", d)
        out += _ln_shapes(f"{p}.ln2", d) + _attn_shapes(f"{p}.cross", d)
        out += _ln_shapes(f"{p}.ln3", d) + _ff_shapes(f"{p}.ff", d, f)
    out += _ln_shapes("dec.ln", d)
    out += [("phi_k.w", (d, OUT_DIM)), ("phi_k.b", (OUT_DIM,))]
    return out


@dataclass(frozen=True)
class ModelParams:
    config: GainConfig
    tensors: dict = field(repr=False)

    def __post_init__(self):
        expected = param_shapes(self.config)
        if [n for n, _ in expected] != list(self.tensors):
            raise ValueError("parameter names do not match the configuration")
        for n, s in expected:
            v = self.tensors[n]
            if v.shape != s:
                raise ValueError(f"{n}: expected shape {s}, got {v.shape}")
            if not np.all(np.isfinite(v)):
                raise ValueError(f"{n} has non-finite entries")

    @property
    def n_params(self) -> int:
        return int(sum(v.size for v in self.tensors.values()))

    def replace(self, tensors: dict) -> "ModelParams":
        return ModelParams(self.config, {n: tensors[n] for n in self.tensors})

    def flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.tensors.values()])


def init_params(cfg: GainConfig | None = None, zero: bool = False) -> ModelParams:
    """Xavier-uniform weights, zero biases, unit norm gains; the head starts small."""
    cfg = cfg or GainConfig()
    rng = np.random.default_rng(cfg.init_seed)
    tensors = {}
    for name, shape in param_shapes(cfg):
        leaf = name.rsplit(".", 1)[1]
        if zero:
            v = np.zeros(shape)
        elif len(shape) == 2:
            lim = np.sqrt(6.0 / sum(shape))
            v = rng.uniform(-lim, lim, shape)
            if name == "phi_k.w":
                v *= 0.1
        elif leaf == "g" and ".ln" in f".{name}":
            v = np.ones(shape)
        else:
            v = np.zeros(shape)
        tensors[name] = v
    return ModelParams(cfg, tensors)


def positional_encoding(n: int, d: int) -> np.ndarray:
    """Sinusoidal table ``(n, d)``."""
    pos = np.arange(n)[:, None]
    i = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


def causal_mask(n: int) -> np.ndarray:
    m = np.zeros((n, n))
    m[np.triu_indices(n, 1)] = -np.inf
    return m


def attention_t(q: Tensor, k: Tensor, v: Tensor, mask: np.ndarray | None = None, store: list | None = None) -> Tensor:
    """Scaled dot-product attention over the last two axes."""
    scores = (q @ k.swapaxes(-1, -2)) * (1.0 / np.sqrt(q.shape[-1]))
    if mask is not None:
        scores = scores + mask
    w = ad.softmax(scores, axis=-1)
    if store is not None:
        store.append(w.value)
    return w @ v


def attention(q, k, v, mask: np.ndarray | None = None, causal: bool = False) -> np.ndarray:
    """``softmax(q k^T / sqrt(d) + mask) v`` on plain arrays."""
    if causal:
        mask = causal_mask(np.shape(q)[-2]) if mask is None else mask + causal_mask(np.shape(q)[-2])
    with ad.no_grad():
        return attention_t(ad.as_tensor(q), ad.as_tensor(k), ad.as_tensor(v), mask).value


@dataclass
class ForwardTrace:
    """Activations of one forward pass; enough to run :func:`backward`."""

    output: Tensor
    leaves: dict
    emb_y: np.ndarray | None = None
    emb_x: np.ndarray | None = None
    z_n: np.ndarray | None = None
    z_k: np.ndarray | None = None
    attention: list = field(default_factory=list)


def _mha(x_q: Tensor, x_kv: Tensor, p: dict, prefix: str, h: int, mask, store) -> Tensor:
    b, n, d = x_q.shape
    m = x_kv.shape[1]
    dh = d // h

    def split(t: Tensor, length: int) -> Tensor:
        return t.reshape(b, length, h, dh).transpose(0, 2, 1, 3)

    q = split(x_q @ p[f"{prefix}.q"] + p[f"{prefix}.bq"], n)
    k = split(x_kv @ p[f"{prefix}.k"] + p[f"{prefix}.bk"], m)
    v = split(x_kv @ p[f"{prefix}.v"] + p[f"{prefix}.bv"], m)
    o = attention_t(q, k, v, mask, store).transpose(0, 2, 1, 3).reshape(b, n, d)
    return o @ p[f"{prefix}.o"] + p[f"{prefix}.bo"]


def _ln(x: Tensor, p: dict, prefix: str) -> Tensor:
    return ad.layer_norm(x, p[f"{prefix}.g"], p[f"{prefix}.b"])


def _ff(x: Tensor, p: dict, prefix: str, act) -> Tensor:
    return act(x @ p[f"{prefix}.w1"] + p[f"{prefix}.b1"]) @ p[f"{prefix}.w2"] + p[f"{prefix}.b2"]


def forward_tensors(leaves: dict, enc_in, dec_in, cfg: GainConfig, trace: ForwardTrace | None = None) -> Tensor:
    """Batched forward: ``(B, n, 12)`` and ``(B, n, 42)`` inputs to ``(B, 15, 6)`` gains."""
    enc_in, dec_in = ad.as_tensor(enc_in), ad.as_tensor(dec_in)
    if enc_in.ndim == 2:
        enc_in, dec_in = enc_in.reshape(1, *enc_in.shape), dec_in.reshape(1, *dec_in.shape)
    b, n, _ = enc_in.shape
    if n != cfg.n_history or dec_in.shape[1] != n:
        raise ValueError(f"window length {n} does not match n_history={cfg.n_history}")
    p, h = leaves, cfg.n_heads
    act = ad.ACTIVATIONS[cfg.activation]
    store = trace.attention if trace is not None else None
    pe = positional_encoding(n, cfg.d_model) if cfg.positional else 0.0

    zy = enc_in @ p["phi_y.w"] + p["phi_y.b"] + pe
    zx = dec_in @ p["phi_x.w"] + p["phi_x.b"] + pe
    if trace is not None:
        trace.emb_y, trace.emb_x = zy.value, zx.value
    for i in range(cfg.n_enc):
        pre = f"enc{i}"
        a = _ln(zy, p, f"{pre}.ln1")
        zy = zy + _mha(a, a, p, f"{pre}.self", h, None, store)
        zy = zy + _ff(_ln(zy, p, f"{pre}.ln2"), p, f"{pre}.ff", act)
    z_n = _ln(zy, p, "enc.ln")
    mask = causal_mask(n)
    for i in range(cfg.n_dec):
        pre = f"dec{i}"
        a = _ln(zx, p, f"{pre}.ln1")
        zx = zx + _mha(a, a, p, f"{pre}.self", h, mask, store)
        zx = zx + _mha(_ln(zx, p, f"{pre}.ln2"), z_n, p, f"{pre}.cross", h, None, store)
        zx = zx + _ff(_ln(zx, p, f"{pre}.ln3"), p, f"{pre}.ff", act)
    z_k = _ln(zx, p, "dec.ln")
    if trace is not None:
        trace.z_n, trace.z_k = z_n.value, z_k.value
    out = z_k[:, n - 1, :] @ p["phi_k.w"] + p["phi_k.b"]
    return out.reshape(b, GAIN_ROWS, GAIN_COLS)


def leaves_of(params: ModelParams) -> dict:
    return {n: ad.parameter(v) for n, v in params.tensors.items()}


def _as_window_arrays(history) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(history, tuple):
        return np.asarray(history[0], dtype=float), np.asarray(history[1], dtype=float)
    if history and isinstance(history[0], FeatureFrame):
        return window_arrays(history)
    raise TypeError("history must be a list of FeatureFrame or an (enc, dec) array pair")


def forward(history, params: ModelParams) -> tuple[GainMatrix, ForwardTrace]:
    """Raw gain for one window of already scaled frames."""
    enc, dec = _as_window_arrays(history)
    if enc.shape[0] != params.config.n_history:
        raise ValueError(f"window length {enc.shape[0]} does not match n_history={params.config.n_history}")
    leaves = leaves_of(params)
    trace = ForwardTrace(output=None, leaves=leaves)  # type: ignore[arg-type]
    out = forward_tensors(leaves, enc, dec, params.config, trace)
    trace.output = out
    return GainMatrix(out.value[0].copy()), trace


def predict(history, params: ModelParams) -> GainMatrix:
    """Inference-only forward pass (no graph)."""
    enc, dec = _as_window_arrays(history)
    with ad.no_grad():
        out = forward_tensors(params.tensors, enc, dec, params.config)
    return GainMatrix(out.value[0].copy())


def backward(trace: ForwardTrace, dk) -> dict:
    """Gradients of ``sum(dk * K)`` for every parameter, keyed like the model tensors."""
    for leaf in trace.leaves.values():
        leaf.grad = None
    trace.output.backward(np.asarray(dk, dtype=float).reshape(trace.output.shape))
    return {n: (np.zeros_like(t.value) if t.grad is None else t.grad) for n, t in trace.leaves.items()}


# checkpoints ---------------------------------------------------------------

def checkpoint_path(path) -> Path:
    path = Path(path)
    return path / CHECKPOINT_FILE if path.suffix != ".npz" else path


def save_checkpoint(path, params: ModelParams, scaler: ScalerParams, extra: dict | None = None) -> Path:
    """Write one ``.npz`` container: config JSON, tensors in declared order, scaler, version."""
    path = checkpoint_path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "config": asdict(params.config),
        "param_names": list(params.tensors),
        "scaler_quantiles": [scaler.q_low, scaler.q_high],
        "extra": extra or {},
    }
    arrays = {f"param/{n}": v for n, v in params.tensors.items()}
    arrays["scaler/center"] = scaler.center
    arrays["scaler/scale"] = scaler.scale
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta)), **arrays)
    return path


def load_checkpoint(path) -> tuple[ModelParams, ScalerParams, dict]:
    path = checkpoint_path(path)
    if not path.exists():
        raise FileNotFoundError(f"no checkpoint at {path}")
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('format_version')}")
        cfg = GainConfig(**meta["config"])
        tensors = {n: z[f"param/{n}"] for n in meta["param_names"]}
        q_low, q_high = meta["scaler_quantiles"]
        scaler = ScalerParams(z["scaler/center"], z["scaler/scale"], q_low, q_high)
    return ModelParams(cfg, tensors), scaler, meta.get("extra", {})
