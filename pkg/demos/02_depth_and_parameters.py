"""Depth and parameter accounting.

Reproduces the structural numbers of the reference configuration: depth 15
for three blocks of scale 4 at interval 1, roughly 27.7M parameters at
block widths (128, 256, 512), and parameter growth that is linear in the
number of added units rather than exponential in the scale.
"""

from crescendo import (
    BlockSpec,
    NetworkSpec,
    count_parameters,
    count_parameters_by_section,
    depth,
)


def make_spec(scale, widths, in_channels=3):
    blocks = []
    cin = in_channels
    for w in widths:
        blocks.append(BlockSpec(scale=scale, interval=1, in_channels=cin,
                                out_channels=w))
        cin = w
    return NetworkSpec(blocks=tuple(blocks), classes=10,
                       input_shape=(in_channels, 32, 32))


reference = make_spec(4, (128, 256, 512))
print(f"depth: {depth(reference)}")
for section, count in count_parameters_by_section(reference).items():
    print(f"  {section}: {count:,}")
print(f"  total: {count_parameters(reference):,}")

print("\nsubnet depths by path set:")
for paths in [(1, 2, 3, 4), (1, 2, 3), (1, 2), (1,)]:
    print(f"  P={set(paths)}: {depth(reference, paths)}")

# parameter growth: the total is affine in the number of units, so doubling
# the scale roughly quadruples (never exponentiates) the conv parameters
print("\nparameter counts vs scale (width 64 everywhere):")
for scale in range(1, 7):
    spec = make_spec(scale, (64, 64, 64), in_channels=64)
    units = 3 * scale * (scale + 1) // 2
    print(f"  S={scale}: {units:3d} units, {count_parameters(spec):,} params")
