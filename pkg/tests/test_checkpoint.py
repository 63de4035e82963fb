"""Checkpoint serialization round-trips."""

import numpy as np
import pytest

from conftest import make_spec, random_store
from crescendo.arch import Network, ParameterStore
from crescendo.checkpoint import load_checkpoint, save_checkpoint
from crescendo.errors import FormatError


def test_round_trip_bit_exact(tmp_path):
    net = Network(make_spec(scale=2, widths=(4, 5, 6), input_shape=(3, 16, 16),
                            fc_units=(8, 7), classes=3))
    store = random_store(net, seed=0, dtype=np.float32)
    config = "scale = 2\ninterval = 1\n"
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, store, config)
    loaded, echo = load_checkpoint(path)
    assert echo == config
    assert loaded.names() == store.names()
    assert loaded.fingerprint() == store.fingerprint()
    for name in store.names():
        assert loaded.trainable(name) == store.trainable(name)
        assert loaded[name].dtype == store[name].dtype


def test_round_trip_float64(tmp_path):
    store = ParameterStore()
    store.add("w", np.random.default_rng(1).standard_normal((3, 4)))
    store.add("frozen", np.ones(2), trainable=False)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, store, "")
    loaded, _ = load_checkpoint(path)
    assert loaded.fingerprint() == store.fingerprint()
    assert not loaded.trainable("frozen")


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"NOTACKPT" + b"\x00" * 32)
    with pytest.raises(FormatError, match="magic"):
        load_checkpoint(path)


def test_truncated_file_rejected(tmp_path):
    net = Network(make_spec(scale=1, widths=(4,), input_shape=(3, 16, 16),
                            fc_units=(8, 7), classes=3))
    store = random_store(net, seed=2)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, store, "echo")
    data = path.read_bytes()
    path.write_bytes(data[:len(data) - 10])
    with pytest.raises(FormatError, match="truncated"):
        load_checkpoint(path)
