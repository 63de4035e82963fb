"""Initialization, training loops, freezing, memory estimator, history."""

import numpy as np
import pytest

from conftest import make_spec
from crescendo.arch import Network
from crescendo.data import Dataset, synthetic_dataset
from crescendo.errors import UsageError
from crescendo.rng import stream_rng
from crescendo.trainer import (
    EpochRecord,
    InitConfig,
    TrainConfig,
    estimate_training_memory,
    evaluate_error,
    evaluate_loss,
    history_to_csv,
    init_params,
    path_label,
    pathwise_schedule,
    read_history_csv,
    set_pathwise_trainable,
    train,
    train_path,
    train_pathwise,
    train_whole,
    trainable_unit_ratio,
    truncated_normal,
    write_history_csv,
)


def small_net(scale=2, widths=(8, 8, 8), classes=2, input_shape=(3, 16, 16)):
    return Network(make_spec(scale=scale, interval=1, widths=widths,
                             classes=classes, input_shape=input_shape,
                             fc_units=(16, 12)))


def small_data(n, classes=2, seed=0, hw=16, split="train"):
    ds = synthetic_dataset(n, classes, seed, split=split)
    return Dataset(split=split, images=ds.images[:, :, :hw, :hw].copy(),
                   labels=ds.labels, classes=classes)


def quick_cfg(**kw):
    defaults = dict(epochs=2, batch_size=32, optimizer="adam", augment=False,
                    seed=0)
    defaults.update(kw)
    return TrainConfig(**defaults)


class TestInit:
    def test_conv_weights_within_two_sigma(self):
        net = small_net()
        store = init_params(net, InitConfig(), stream_rng(0, "init"))
        for name, slot in net.plan.items():
            if slot.kind == "conv_w":
                assert np.abs(store[name]).max() <= 0.1

    def test_truncated_normal_effective_sigma(self):
        # resampling outside +-2 sigma shrinks the sample std to ~0.88 sigma
        rng = stream_rng(1, "init")
        draws = truncated_normal(rng, (10 ** 5,), 0.05)
        assert draws.std() == pytest.approx(0.044, abs=0.002)

    def test_bn_and_bias_values(self):
        net = small_net()
        store = init_params(net, InitConfig(), stream_rng(2, "init"))
        assert np.all(store["block1/branch1/unit1/bn_gamma"] == 1.0)
        assert np.all(store["block1/branch1/unit1/bn_beta"] == 0.0)
        assert np.all(store["block1/branch1/unit1/conv_b"] == 0.0)
        assert np.all(store["block1/branch1/unit1/bn_var"] == 1.0)
        assert np.all(store["fc1/b"] == 0.0)

    def test_fc_weights_use_smaller_sigma(self):
        net = small_net()
        store = init_params(net, InitConfig(), stream_rng(3, "init"))
        assert np.abs(store["fc1/w"]).max() <= 0.08

    def test_deterministic_given_stream(self):
        net = small_net()
        a = init_params(net, InitConfig(), stream_rng(4, "init"))
        b = init_params(net, InitConfig(), stream_rng(4, "init"))
        assert a.fingerprint() == b.fingerprint()


class TestTrainWhole:
    def test_untrained_loss_is_log_k(self):
        net = small_net(classes=10)
        store = init_params(net, InitConfig(), stream_rng(5, "init"))
        ds = small_data(200, classes=10, seed=1)
        loss = evaluate_loss(net, store, ds)
        assert loss == pytest.approx(np.log(10), rel=0.05)

    def test_overfits_tiny_dataset(self):
        net = small_net(scale=2, widths=(8, 8, 8), classes=2,
                        input_shape=(3, 32, 32))
        store = init_params(net, InitConfig(), stream_rng(6, "init"))
        ds = synthetic_dataset(64, 2, seed=2)
        cfg = quick_cfg(epochs=200, batch_size=64,
                        stop_at_train_accuracy=100.0)
        history = train_whole(net, store, ds, None, cfg)
        assert history[-1].train_error_pct == 0.0
        assert history[-1].epoch < 200

    def test_loss_decreases_for_both_optimizers(self):
        for optimizer in ("adam", "nesterov"):
            net = small_net(classes=2)
            store = init_params(net, InitConfig(), stream_rng(7, "init"))
            ds = small_data(256, classes=2, seed=3)
            cfg = quick_cfg(epochs=21, optimizer=optimizer, batch_size=64)
            history = train_whole(net, store, ds, None, cfg)
            assert history[20].train_loss < history[0].train_loss

    def test_identical_seeds_give_identical_parameters(self):
        results = []
        for _ in range(2):
            net = small_net(classes=3)
            store = init_params(net, InitConfig(), stream_rng(8, "init"))
            train_ds = small_data(96, classes=3, seed=4)
            eval_ds = small_data(48, classes=3, seed=5, split="test")
            cfg = quick_cfg(epochs=3, droppath_rate=0.3, dropout_rate=0.4,
                            l2_lambda=1e-4, seed=11,
                            track_paths=((1,), (1, 2)))
            history = train(net, store, train_ds, eval_ds, cfg)
            results.append((store.fingerprint(), history_to_csv(history)))
        assert results[0] == results[1]

    def test_history_records_are_well_formed(self):
        net = small_net(classes=2)
        store = init_params(net, InitConfig(), stream_rng(9, "init"))
        train_ds = small_data(64, classes=2, seed=6)
        eval_ds = small_data(32, classes=2, seed=7, split="test")
        history = train_whole(net, store, train_ds, eval_ds, quick_cfg(epochs=3))
        assert [r.epoch for r in history] == [0, 1, 2]
        for rec in history:
            assert 0.0 <= rec.train_error_pct <= 100.0
            assert 0.0 <= rec.eval_errors["full"] <= 100.0
            assert rec.wall_seconds >= 0.0


class TestPathwise:
    def test_schedule_visits_shortest_to_longest(self):
        schedule = pathwise_schedule(8, 2, 4)
        assert [p for p, _ in schedule] == [1, 2, 3, 4, 1, 2, 3, 4]
        assert sum(n for _, n in schedule) == 8

    def test_schedule_distributes_remainder(self):
        schedule = pathwise_schedule(10, 2, 4)
        assert sum(n for _, n in schedule) == 10
        assert [n for _, n in schedule] == [2, 2, 1, 1, 1, 1, 1, 1]

    def test_trainable_set_during_path_two(self):
        net = small_net(scale=4)
        store = init_params(net, InitConfig(), stream_rng(10, "init"))
        set_pathwise_trainable(net, store, 2)
        for name in store.names():
            slot = net.plan[name]
            if name.startswith("block"):
                want = slot.learnable and "/branch2/" in name
                assert store.trainable(name) == want
            elif slot.learnable:
                assert store.trainable(name)

    def test_frozen_branch_bit_identical_through_other_path_training(self):
        net = small_net(scale=3, classes=2)
        store = init_params(net, InitConfig(), stream_rng(11, "init"))
        ds = small_data(64, classes=2, seed=8)
        # the freeze contract covers learnable parameters; batchnorm
        # running statistics are accumulated state and keep tracking
        branch1 = [n for n in store.names() if "/branch1/" in n
                   and "bn_mean" not in n and "bn_var" not in n]
        branch1_stats = [n for n in store.names() if "/branch1/" in n
                         and ("bn_mean" in n or "bn_var" in n)]
        before = store.fingerprint(branch1)
        before_stats = store.fingerprint(branch1_stats)
        train_path(net, store, ds, None, quick_cfg(epochs=1), path=3, n_epochs=1)
        assert store.fingerprint(branch1) == before
        assert store.fingerprint(branch1_stats) != before_stats
        branch3 = [n for n in store.names() if "/branch3/" in n]
        # sanity: the active branch did move
        assert store.fingerprint(branch3) != init_params(
            net, InitConfig(), stream_rng(11, "init")).fingerprint(branch3)

    def test_dense_layers_stay_trainable_every_phase(self):
        net = small_net(scale=3)
        store = init_params(net, InitConfig(), stream_rng(12, "init"))
        for path in (1, 2, 3):
            set_pathwise_trainable(net, store, path)
            assert store.trainable("fc1/w")
            assert store.trainable("head/b")

    def test_full_pathwise_run_restores_flags_and_learns(self):
        net = small_net(scale=2, classes=2)
        store = init_params(net, InitConfig(), stream_rng(13, "init"))
        ds = small_data(96, classes=2, seed=9)
        cfg = quick_cfg(epochs=8, pathwise=True, pathwise_cycles=2)
        history = train_pathwise(net, store, ds, None, cfg)
        assert len(history) == 8
        assert history[-1].train_loss < history[0].train_loss
        assert store.trainable_names() == tuple(
            n for n, s in net.plan.items() if s.learnable)


class TestMemoryEstimate:
    def test_reference_ratios(self):
        spec = make_spec(scale=4, interval=1)
        assert estimate_training_memory(spec, "path", 4) == pytest.approx(0.40)
        assert estimate_training_memory(spec, "amortized") == pytest.approx(0.25)
        assert estimate_training_memory(spec, "whole") == 1.0

    def test_single_branch_always_full(self):
        spec = make_spec(scale=1, interval=1)
        for mode, path in (("whole", None), ("path", 1), ("amortized", None)):
            assert estimate_training_memory(spec, mode, path) == 1.0

    def test_interval_cancels_in_ratio(self):
        spec = make_spec(scale=4, interval=2)
        assert estimate_training_memory(spec, "path", 4) == pytest.approx(0.40)

    def test_matches_live_trainable_flags(self):
        net = small_net(scale=4)
        store = init_params(net, InitConfig(), stream_rng(14, "init"))
        spec = net.spec
        for path in (1, 2, 3, 4):
            set_pathwise_trainable(net, store, path)
            assert trainable_unit_ratio(net, store) == pytest.approx(
                estimate_training_memory(spec, "path", path))

    def test_unknown_mode_rejected(self):
        with pytest.raises(UsageError):
            estimate_training_memory(make_spec(), "banana")


class TestHistoryCsv:
    def _records(self):
        return [
            EpochRecord(0, 0.001, 2.5, 90.0, {"full": 88.0, "P1": 91.5}, 1.0),
            EpochRecord(1, 0.001, 1.25, 45.5, {"full": 50.25, "P1": 60.0}, 1.1),
        ]

    def test_header_and_rows(self):
        text = history_to_csv(self._records())
        lines = text.strip().split("\n")
        assert lines[0] == ("epoch,lr,train_loss,train_error_pct,"
                            "eval_error_pct_full,eval_error_pct_P1")
        assert lines[1].startswith("0,0.001,2.5,90.0")
        assert len(lines) == 3

    def test_wall_clock_not_emitted(self):
        assert "wall" not in history_to_csv(self._records())

    def test_round_trip(self, tmp_path):
        path = tmp_path / "history.csv"
        write_history_csv(self._records(), path)
        header, rows = read_history_csv(path)
        assert header[0] == "epoch"
        assert float(rows[1]["eval_error_pct_full"]) == 50.25

    def test_path_label(self):
        assert path_label(None) == "full"
        assert path_label((1, 3)) == "P1-3"


class TestEvaluate:
    def test_errors_bounded_and_deterministic(self):
        net = small_net(classes=2)
        store = init_params(net, InitConfig(), stream_rng(15, "init"))
        ds = small_data(50, classes=2, seed=10, split="test")
        a = evaluate_error(net, store, ds)
        b = evaluate_error(net, store, ds, batch_size=7)
        assert a == b
        assert 0.0 <= a <= 100.0

    def test_subnet_evaluation_differs_from_full(self):
        net = small_net(scale=2, classes=2)
        store = init_params(net, InitConfig(), stream_rng(16, "init"))
        ds = small_data(64, classes=2, seed=11)
        cfg = quick_cfg(epochs=4, batch_size=32)
        train_whole(net, store, ds, None, cfg)
        full = evaluate_error(net, store, ds)
        single = evaluate_error(net, store, ds, paths=(1,))
        assert 0.0 <= full <= 100.0 and 0.0 <= single <= 100.0
