import numpy as np
import pytest

from crescendo.arch import BlockSpec, Network, NetworkSpec, ParameterStore, WidthMode


def make_spec(scale=4, interval=1, widths=(128, 256, 512), classes=10,
              width_mode=WidthMode.EQUAL_WITHIN_BLOCK, input_shape=(3, 32, 32),
              fc_units=(384, 192)):
    blocks = []
    cin = input_shape[0]
    for w in widths:
        blocks.append(BlockSpec(scale=scale, interval=interval, in_channels=cin,
                                out_channels=w, width_mode=width_mode))
        cin = w
    return NetworkSpec(blocks=tuple(blocks), classes=classes, fc_units=fc_units,
                       input_shape=input_shape)


def random_store(net, seed=0, dtype=np.float64, scale=0.3):
    """Fill a network's parameter plan with small random weights."""
    store = ParameterStore()
    rng = np.random.default_rng(seed)
    for name, slot in net.plan.items():
        if slot.kind in ("conv_w", "fc_w"):
            val = rng.standard_normal(slot.shape) * scale
        elif slot.kind in ("bn_gamma", "bn_var"):
            val = np.ones(slot.shape)
        else:
            val = np.zeros(slot.shape)
        store.add(name, np.ascontiguousarray(val.astype(dtype)),
                  trainable=slot.learnable)
    return store


@pytest.fixture
def tiny_net():
    spec = make_spec(scale=2, interval=1, widths=(4, 5, 6), classes=3,
                     input_shape=(3, 16, 16), fc_units=(8, 7))
    return Network(spec)
