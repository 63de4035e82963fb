"""Path-wise training: one branch at a time, shortest to longest.

While a path trains, every other branch is frozen bit-for-bit (the run
prints fingerprints to prove it); the frozen paths still run forward and
feed the averaging join.  The dense head stays trainable throughout.
"""

from crescendo import BlockSpec, Network, NetworkSpec, synthetic_dataset
from crescendo.rng import stream_rng
from crescendo.trainer import (
    InitConfig,
    TrainConfig,
    evaluate_error,
    init_params,
    pathwise_schedule,
    train_path,
)

blocks = tuple(BlockSpec(scale=3, interval=1, in_channels=c, out_channels=w)
               for c, w in [(3, 8), (8, 12), (12, 12)])
net = Network(NetworkSpec(blocks=blocks, classes=4))
store = init_params(net, InitConfig(), stream_rng(3, "init"))

train_ds = synthetic_dataset(512, 4, seed=5, noise_sigma=0.45, mean_spread=0.15)
test_ds = synthetic_dataset(192, 4, seed=6, noise_sigma=0.45, mean_spread=0.15,
                            split="test")
cfg = TrainConfig(epochs=6, batch_size=64, seed=3, augment=False)

print("visit schedule (path, epochs):", pathwise_schedule(6, 2, 3))

epoch = 0
for path, n_epochs in pathwise_schedule(6, 2, 3):
    others = [n for n in (1, 2, 3) if n != path]
    # learnable entries only: batchnorm running statistics keep tracking
    frozen_names = [name for name in store.names()
                    if any(f"/branch{o}/" in name for o in others)
                    and "bn_mean" not in name and "bn_var" not in name]
    before = store.fingerprint(frozen_names)
    train_path(net, store, train_ds, test_ds, cfg, path, n_epochs,
               start_epoch=epoch)
    intact = store.fingerprint(frozen_names) == before
    err = evaluate_error(net, store, test_ds)
    print(f"path {path} trained {n_epochs} epoch(s): "
          f"frozen branches intact={intact}, test_err {err:5.1f}%")
    epoch += n_epochs
