"""Walk through the building blocks: units, branches, the averaging join.

A Crescendo block holds S parallel branches; branch n is a chain of
n * I conv-ReLU-batchnorm units, and every branch ends at the block's
output width so the outputs can be averaged element-wise.
"""

import numpy as np

from crescendo import (
    BlockSpec,
    Mode,
    Network,
    NetworkSpec,
    WidthMode,
    block_forward,
    build_branch,
    width_schedule,
)
from crescendo.rng import stream_rng
from crescendo.trainer import InitConfig, init_params

# --- branch structure -----------------------------------------------------

block = BlockSpec(scale=4, interval=1, in_channels=128, out_channels=256)
print("equal-width block, branch unit chains:")
for n in range(1, 5):
    print(f"  branch {n}: {build_branch(block, n).units}")

# the increasing-width mode interpolates feature maps linearly; with
# 128 -> 256 the two- and four-unit branches get (192, 256) and
# (160, 192, 224, 256)
print("\nwidth schedules from 128 to 256 maps:")
print("  2 layers:", width_schedule(128, 256, 2))
print("  4 layers:", width_schedule(128, 256, 4))

widening = BlockSpec(scale=4, interval=1, in_channels=128, out_channels=256,
                     width_mode=WidthMode.INCREASING_WITHIN_BRANCH)
print("widening block, branch 4:", build_branch(widening, 4).units)

# --- the averaging join in action ------------------------------------------

spec = NetworkSpec(
    blocks=(BlockSpec(scale=2, interval=1, in_channels=3, out_channels=8),
            BlockSpec(scale=2, interval=1, in_channels=8, out_channels=8),
            BlockSpec(scale=2, interval=1, in_channels=8, out_channels=8)),
    classes=10, input_shape=(3, 32, 32))
net = Network(spec)
store = init_params(net, InitConfig(), stream_rng(0, "init"))

x = np.random.default_rng(1).standard_normal((2, 3, 32, 32)).astype(np.float32)
both = block_forward(net, store, 1, x, Mode.INFER)
b1 = block_forward(net, store, 1, x, Mode.INFER, active=(1,))
b2 = block_forward(net, store, 1, x, Mode.INFER, active=(2,))
print("\njoin(z) equals the mean of the branch outputs:",
      np.allclose(both, (b1 + b2) / 2, atol=1e-6))
