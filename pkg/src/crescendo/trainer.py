"""Training loops: whole-net, path-wise with parameter freezing, plus
parameter initialization, evaluation helpers and the training-memory
estimator.

Everything stochastic draws from labelled streams keyed by (seed, epoch,
step or item index), so a (seed, config, data) triple fully determines the
trained parameters and the per-epoch history, bit for bit.
"""

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .arch import ParameterStore, normalize_paths
from .data import draw_augment, standardize_batch
from .errors import NumericalError, UsageError
from .layers import Mode, softmax_cross_entropy
from .optim import (
    AdamConfig,
    AdamState,
    NesterovConfig,
    NesterovState,
    adam_step,
    lr_for_epoch,
    nesterov_step,
)
from .regularization import DropPathConfig, l2_penalty, sample_drop_mask
from .rng import stream_rng


@dataclass(frozen=True)
class InitConfig:
    """Truncated-normal init: resample anything outside +-2 sigma."""
    sigma_conv: float = 0.05
    sigma_fc: float = 0.04
    truncation: float = 2.0


def truncated_normal(rng, shape, sigma, truncation=2.0):
    out = rng.standard_normal(shape)
    bad = np.abs(out) > truncation
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > truncation
    return out * sigma


def init_params(net, cfg, rng, dtype=np.float32):
    """Fill the network's shape plan: conv weights ~ truncated N(0, 0.05^2),
    dense weights ~ truncated N(0, 0.04^2), biases and batchnorm beta zero,
    batchnorm gamma and running variance one."""
    store = ParameterStore()
    for name, slot in net.plan.items():
        if slot.kind == "conv_w":
            value = truncated_normal(rng, slot.shape, cfg.sigma_conv, cfg.truncation)
        elif slot.kind == "fc_w":
            value = truncated_normal(rng, slot.shape, cfg.sigma_fc, cfg.truncation)
        elif slot.kind in ("bn_gamma", "bn_var"):
            value = np.ones(slot.shape)
        else:
            value = np.zeros(slot.shape)
        store.add(name, np.ascontiguousarray(value.astype(dtype)),
                  trainable=slot.learnable)
    return store


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int = 128
    optimizer: str = "adam"  # "adam" | "nesterov"
    adam: AdamConfig = field(default_factory=AdamConfig)
    nesterov: NesterovConfig = field(default_factory=NesterovConfig)
    schedule_profile: str = "cifar"
    droppath_rate: float = 0.0
    dropout_rate: float = 0.0
    l2_lambda: float = 0.0
    seed: int = 0
    augment: bool = True
    pathwise: bool = False
    pathwise_cycles: int = 2
    track_paths: tuple = ()  # extra path sets evaluated per epoch
    stop_at_train_accuracy: float = None
    lr_override: float = None  # constant rate instead of the schedule
    dtype: object = np.float32

    def __post_init__(self):
        if self.epochs < 1:
            raise UsageError("epochs must be at least 1")
        if self.batch_size < 1:
            raise UsageError("batch size must be at least 1")
        if self.optimizer not in ("adam", "nesterov"):
            raise UsageError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    train_error_pct: float
    eval_errors: dict  # label ("full" or "P1-3") -> error percent
    wall_seconds: float


def path_label(paths):
    return "full" if paths is None else "P" + "-".join(str(p) for p in paths)


def _make_batch(ds, indices, cfg, epoch):
    images = ds.images[indices]
    if cfg.augment:
        # batch-level padding, per-item crop/flip draws keyed by the
        # dataset index so results do not depend on batch scheduling
        n, c, h, w = images.shape
        padded = np.zeros((n, c, h + 8, w + 8), dtype=images.dtype)
        padded[:, :, 4:4 + h, 4:4 + w] = images
        augmented = np.empty_like(images)
        for row, src in enumerate(indices):
            rng = stream_rng(cfg.seed, "augment", epoch, int(src))
            i, j, flip = draw_augment(rng)
            crop = padded[row, :, i:i + h, j:j + w]
            augmented[row] = crop[:, :, ::-1] if flip else crop
        images = augmented
    batch = standardize_batch(images).astype(cfg.dtype, copy=False)
    return batch, ds.labels[indices]


def _first_nonfinite_name(tape):
    for b, bt in enumerate(tape.blocks, 1):
        for n in bt.active:
            for k, cache in enumerate(bt.branch_caches[n], 1):
                if not np.isfinite(cache.relu_out).all() or \
                        not np.isfinite(cache.bn.xhat).all():
                    return f"block{b}/branch{n}/unit{k} output"
    if tape.fc is not None:
        for name, arr in (("fc1 output", tape.fc.r1), ("fc2 output", tape.fc.r2)):
            if not np.isfinite(arr).all():
                return name
    if tape.logits is not None and not np.isfinite(tape.logits).all():
        return "logits"
    return "loss"


def _train_step(net, store, xb, yb, cfg, state, epoch, step, lr, bn_update):
    """One optimizer update; returns (loss, batch error count)."""

    def loss_and_grads():
        drop_masks = None
        if cfg.droppath_rate > 0.0:
            rng = stream_rng(cfg.seed, "droppath", epoch, step)
            dcfg = DropPathConfig(cfg.droppath_rate)
            drop_masks = [sample_drop_mask(block.scale, dcfg, rng)
                          for block in net.spec.blocks]
        dropout_rng = None
        if cfg.dropout_rate > 0.0:
            dropout_rng = stream_rng(cfg.seed, "dropout", epoch, step)
        logits, tape = net.forward(
            store, xb, Mode.TRAIN, drop_masks=drop_masks,
            dropout_rate=cfg.dropout_rate, dropout_rng=dropout_rng,
            bn_update_branches=bn_update)
        loss, dlogits = softmax_cross_entropy(logits, yb)
        fc_names = net.fc_weight_names()
        l2_grads = {}
        if cfg.l2_lambda > 0.0:
            penalty, contribs = l2_penalty([store[n] for n in fc_names],
                                           cfg.l2_lambda)
            loss += penalty
            l2_grads = dict(zip(fc_names, contribs))
        if not np.isfinite(loss):
            raise NumericalError(
                f"non-finite loss at epoch {epoch} step {step}; "
                f"first non-finite tensor: {_first_nonfinite_name(tape)}")
        grads, _ = net.backward(store, tape, dlogits)
        for name, g in l2_grads.items():
            grads[name] = grads[name] + g
        errors = int((logits.argmax(axis=1) != yb).sum())
        return loss, grads, errors

    if cfg.optimizer == "adam":
        loss, grads, errors = loss_and_grads()
        adam_step(store, grads, state, cfg.adam)
    else:
        # gradients at the lookahead point params + mu * velocity
        mu = cfg.nesterov.momentum
        snapshot = {n: store[n].copy() for n in state.velocity}
        for n, v in state.velocity.items():
            arr = store[n]
            arr += mu * v
        loss, grads, errors = loss_and_grads()
        for n, orig in snapshot.items():
            store[n][...] = orig
        nesterov_step(store, grads, state, cfg.nesterov, lr)
    return loss, errors


def _optimizer_state(store, cfg):
    if cfg.optimizer == "adam":
        return AdamState.for_store(store)
    return NesterovState.for_store(store)


def _epoch_lr(cfg, epoch):
    if cfg.optimizer == "adam":
        return cfg.adam.learning_rate
    if cfg.lr_override is not None:
        return cfg.lr_override
    return lr_for_epoch(epoch, cfg.epochs, cfg.schedule_profile)


def _run_epochs(net, store, train_ds, eval_ds, cfg, state, start_epoch, n_epochs,
                bn_update=None, progress=None):
    records = []
    n = len(train_ds)
    for epoch in range(start_epoch, start_epoch + n_epochs):
        t0 = time.perf_counter()
        order = stream_rng(cfg.seed, "shuffle", epoch).permutation(n)
        lr = _epoch_lr(cfg, epoch)
        loss_sum = 0.0
        error_count = 0
        for step, lo in enumerate(range(0, n, cfg.batch_size)):
            sel = order[lo:lo + cfg.batch_size]  # last partial batch kept
            xb, yb = _make_batch(train_ds, sel, cfg, epoch)
            loss, errors = _train_step(net, store, xb, yb, cfg, state, epoch,
                                       step, lr, bn_update)
            loss_sum += loss * len(sel)
            error_count += errors
        evals = {}
        if eval_ds is not None:
            evals[path_label(None)] = evaluate_error(net, store, eval_ds,
                                                     batch_size=cfg.batch_size)
            for paths in cfg.track_paths:
                evals[path_label(tuple(paths))] = evaluate_error(
                    net, store, eval_ds, paths=paths, batch_size=cfg.batch_size)
        train_error = 100.0 * error_count / n
        records.append(EpochRecord(
            epoch=epoch, lr=lr, train_loss=loss_sum / n,
            train_error_pct=train_error, eval_errors=evals,
            wall_seconds=time.perf_counter() - t0))
        if progress is not None:
            progress(records[-1])
        if cfg.stop_at_train_accuracy is not None and \
                100.0 - train_error >= cfg.stop_at_train_accuracy:
            break
    return records


def train_whole(net, store, train_ds, eval_ds, cfg, progress=None):
    """Mini-batch training of every trainable parameter at once."""
    state = _optimizer_state(store, cfg)
    return _run_epochs(net, store, train_ds, eval_ds, cfg, state, 0, cfg.epochs,
                       progress=progress)


def set_pathwise_trainable(net, store, path):
    """Mark exactly branch ``path`` (in every block) plus the dense layers
    trainable; every other branch is frozen."""
    keep = set(net.branch_param_names(path))
    for name in store.names():
        if name.startswith(("fc", "head")):
            store.set_trainable(name, True)
        elif name.startswith("block"):
            store.set_trainable(name, name in keep)


def set_all_trainable(net, store):
    for name, slot in net.plan.items():
        store.set_trainable(name, slot.learnable)


def pathwise_schedule(total_epochs, cycles, scale):
    """Visit order over one run: cycles of (path 1, ..., path S), epochs
    split as evenly as possible with earlier visits taking the remainder."""
    visits = cycles * scale
    base, extra = divmod(total_epochs, visits)
    lengths = [base + (1 if i < extra else 0) for i in range(visits)]
    return [((i % scale) + 1, lengths[i]) for i in range(visits) if lengths[i] > 0]


def train_path(net, store, train_ds, eval_ds, cfg, path, n_epochs, start_epoch=0,
               progress=None):
    """One path-wise visit: freeze all other branches, reset optimizer
    state, train ``path`` for ``n_epochs``.

    Freezing covers learnable parameters (conv weights/biases, batchnorm
    scale/shift).  Every branch still runs forward in train mode, so
    batchnorm running statistics keep tracking for frozen branches too;
    otherwise inference would normalize their features with stale
    statistics and the averaging join would mix garbage.
    """
    set_pathwise_trainable(net, store, path)
    state = _optimizer_state(store, cfg)
    return _run_epochs(net, store, train_ds, eval_ds, cfg, state, start_epoch,
                       n_epochs, progress=progress)


def train_pathwise(net, store, train_ds, eval_ds, cfg, progress=None):
    """Cycle the paths from shortest to longest, training one at a time."""
    scales = {b.scale for b in net.spec.blocks}
    if len(scales) != 1:
        raise UsageError("path-wise training assumes a homogeneous scale")
    scale = scales.pop()
    records = []
    epoch = 0
    for path, n_epochs in pathwise_schedule(cfg.epochs, cfg.pathwise_cycles, scale):
        records.extend(train_path(net, store, train_ds, eval_ds, cfg, path,
                                  n_epochs, start_epoch=epoch, progress=progress))
        epoch += n_epochs
    set_all_trainable(net, store)
    return records


def train(net, store, train_ds, eval_ds, cfg, progress=None):
    if cfg.pathwise:
        return train_pathwise(net, store, train_ds, eval_ds, cfg, progress=progress)
    return train_whole(net, store, train_ds, eval_ds, cfg, progress=progress)


def _infer_batches(net, store, ds, paths, batch_size, dtype):
    for lo in range(0, len(ds), batch_size):
        images = ds.images[lo:lo + batch_size]
        xb = standardize_batch(images).astype(dtype, copy=False)
        logits, _ = net.forward(store, xb, Mode.INFER, paths=paths)
        yield logits, ds.labels[lo:lo + batch_size]


def evaluate_error(net, store, ds, paths=None, batch_size=256, dtype=np.float32):
    """Infer-mode classification error percentage, optionally restricted
    to a path set."""
    wrong = 0
    for logits, labels in _infer_batches(net, store, ds, paths, batch_size, dtype):
        wrong += int((logits.argmax(axis=1) != labels).sum())
    return 100.0 * wrong / len(ds)


def evaluate_loss(net, store, ds, paths=None, batch_size=256, dtype=np.float32):
    """Infer-mode mean cross-entropy."""
    total = 0.0
    for logits, labels in _infer_batches(net, store, ds, paths, batch_size, dtype):
        loss, _ = softmax_cross_entropy(logits, labels)
        total += loss * len(labels)
    return total / len(ds)


def estimate_training_memory(spec, mode, path=None):
    """Trainable fraction of the per-parameter optimizer/gradient footprint
    for the convolutional branches, counted in units.

    mode "whole" -> 1.0; mode "path" -> units of branch ``path`` over all
    units; mode "amortized" -> mean of the path ratios over one cycle.
    """
    total = sum(block.interval * block.scale * (block.scale + 1) // 2
                for block in spec.blocks)
    if mode == "whole":
        return 1.0
    if mode == "path":
        if path is None:
            raise UsageError("mode 'path' needs a path index")
        for block in spec.blocks:
            if not 1 <= path <= block.scale:
                raise UsageError(f"path {path} out of range [1, {block.scale}]")
        active = sum(block.interval * path for block in spec.blocks)
        return active / total
    if mode == "amortized":
        scales = {b.scale for b in spec.blocks}
        if len(scales) != 1:
            raise UsageError("amortized estimate assumes a homogeneous scale")
        scale = scales.pop()
        return float(np.mean([estimate_training_memory(spec, "path", k)
                              for k in range(1, scale + 1)]))
    raise UsageError(f"unknown mode {mode!r}")


def trainable_unit_ratio(net, store):
    """Fraction of conv units whose learnables are currently trainable;
    cross-checks the analytic memory estimate against the live flags."""
    total = 0
    trainable = 0
    for b in range(1, len(net.spec.blocks) + 1):
        for n, branch in enumerate(net.branches[b - 1], 1):
            for k in range(1, len(branch.units) + 1):
                prefix = f"block{b}/branch{n}/unit{k}"
                total += 1
                trainable += store.trainable(f"{prefix}/conv_w")
    return trainable / total


HISTORY_FIXED_COLUMNS = ("epoch", "lr", "train_loss", "train_error_pct")


def history_to_csv(records):
    """Render epoch records as CSV text.

    Wall-clock timings stay in memory only; every emitted value is a pure
    function of (seed, config, data), so reruns are byte-identical.
    """
    eval_labels = []
    for rec in records:
        for label in rec.eval_errors:
            if label not in eval_labels:
                eval_labels.append(label)
    header = list(HISTORY_FIXED_COLUMNS) + [f"eval_error_pct_{l}" for l in eval_labels]
    lines = [",".join(header)]
    for rec in records:
        row = [str(rec.epoch), repr(float(rec.lr)), repr(float(rec.train_loss)),
               repr(float(rec.train_error_pct))]
        row += [repr(float(rec.eval_errors[l])) if l in rec.eval_errors else ""
                for l in eval_labels]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def write_history_csv(records, path):
    with open(path, "w", newline="") as fh:
        fh.write(history_to_csv(records))


def read_history_csv(path):
    """Parse a history CSV back into (header list, list of row dicts)."""
    with open(path) as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    header = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        values = line.split(",")
        rows.append({k: v for k, v in zip(header, values)})
    return header, rows
