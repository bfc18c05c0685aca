"""Train a small model on synthetic rallies and score it best-of-K."""
# %%
import logging

from shuttlenet import (SynthConfig, TrainConfig, evaluate, gen_synthetic, normalize_coords,
                        split_dataset, train, type_accuracy)
from shuttlenet.numerics import make_rng

logging.basicConfig(level=logging.INFO, format="%(message)s")

ds = gen_synthetic(SynthConfig(n_matches=6, rallies_per_match=30, n_players=4), make_rng(0))
train_ds, test_ds = split_dataset(ds)
train_ds = normalize_coords(train_ds)
test_ds = normalize_coords(test_ds, train_ds.mean)
print(f"{len(train_ds.rallies)} train / {len(test_ds.rallies)} test rallies")

# %%
cfg = TrainConfig(d=16, ff_dim=32, epochs=40, learning_rate=1e-3, tau=4)
res = train(train_ds, cfg, log_every=10)
print("teacher-forced type accuracy:", round(type_accuracy(res.model, train_ds, cfg.tau), 3))

# %% more rollouts can only lower the chosen rollout's squared error
for K in (1, 3, 10):
    m = evaluate(res.model, test_ds, cfg.tau, K=K, seed=0)
    print(f"K={K:2d}  CE {m.ce:.3f}  MSE {m.mse:.3f}  MAE {m.mae:.3f}")
