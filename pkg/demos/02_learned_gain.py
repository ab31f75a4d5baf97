"""Train a small gain Transformer on one walk and compare it to the InEKF.

The first 75% of the trajectory is used for training and the tail is held
out.  Both filters run in single-step (1A) mode on the held-out tail.
Takes about half a minute.  Run: ``python demos/02_learned_gain.py``.
"""
from inekformer import GainConfig, GaitParams, TrainConfig, noise_preset, run_analytic_filter, run_hybrid_filter, simulate
from inekformer.evaluation import RMSE_LABELS, windowed_rmse
from inekformer.training import build_trainer

walk = simulate(GaitParams(motion="walk", n_steps=8), noise_preset("default", seed=0))
model = GainConfig(d_model=16, n_heads=2, n_enc=1, n_dec=1, d_ff=32, n_history=5)
trainer = build_trainer([walk], TrainConfig(mode="tf", max_steps=300, batch_size=32), model)
result = trainer.run()
print(f"trained {len(result.log)} steps, final loss {result.log[-1]['train_loss']:.3e}")

cut = trainer.val_segments[0].start
hyb, _ = run_hybrid_filter(walk, result.params, result.scaler, mode="1A")
ana, _ = run_analytic_filter(walk, mode="1A")
print(" " * 11, " ".join(f"{lab:>8}" for lab in RMSE_LABELS))
for name, est in (("InEKF", ana), ("InEKFormer", hyb)):
    print(f"{name:<11}", " ".join(f"{v:8.1e}" for v in windowed_rmse(est, walk, cut)))
