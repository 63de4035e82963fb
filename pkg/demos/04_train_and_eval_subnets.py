"""Train a small network end to end, then evaluate its subnets.

Uses generated blob data so the run takes a couple of minutes.  After
training, any subset of branches is evaluable without retraining; look for
the full set beating single paths once training has converged far enough.
"""

import numpy as np

from crescendo import BlockSpec, Network, NetworkSpec, subnet, synthetic_dataset
from crescendo.rng import stream_rng
from crescendo.trainer import (
    InitConfig,
    TrainConfig,
    evaluate_error,
    init_params,
    train_whole,
)

blocks = tuple(BlockSpec(scale=2, interval=1, in_channels=c, out_channels=w)
               for c, w in [(3, 8), (8, 16), (16, 16)])
net = Network(NetworkSpec(blocks=blocks, classes=4))
store = init_params(net, InitConfig(), stream_rng(7, "init"))

train_ds = synthetic_dataset(768, 4, seed=1, noise_sigma=0.45, mean_spread=0.15)
test_ds = synthetic_dataset(256, 4, seed=2, noise_sigma=0.45, mean_spread=0.15,
                            split="test")

cfg = TrainConfig(epochs=8, batch_size=64, optimizer="adam", seed=7,
                  droppath_rate=0.2, dropout_rate=0.3, l2_lambda=1e-4,
                  augment=True)
for rec in train_whole(net, store, train_ds, test_ds, cfg):
    print(f"epoch {rec.epoch}: loss {rec.train_loss:.3f} "
          f"train_err {rec.train_error_pct:5.1f}% "
          f"test_err {rec.eval_errors['full']:5.1f}%")

print("\nsubnet errors after training:")
for paths in [(1, 2), (2,), (1,)]:
    sub = subnet(net, store, paths)
    err = evaluate_error(net, store, test_ds, paths=paths)
    print(f"  P={set(paths)} depth {sub.depth}: {err:5.1f}%")
