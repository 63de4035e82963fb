"""Crescendo blocks, network assembly, parameter accounting, subnets.

A block is a set of ``scale`` parallel branches; branch n is a chain of
n * interval conv-ReLU-batchnorm units whose outputs are joined by
element-wise averaging, so every branch must end at the block's output
width.  The full network stacks blocks with a 2x2 max-pool after each one
(including the last), then flattens into two hidden dense layers and a
classifier.
"""

import enum
import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import StructuralError, UsageError
from .layers import (
    Mode,
    UnitCache,
    UnitParams,
    dropout,
    dropout_backward,
    relu,
    relu_backward,
    unit_backward,
    unit_forward,
)
from .tensor import (
    elementwise_average,
    matmul_bias,
    matmul_bias_backward,
    maxpool2x2,
    maxpool2x2_backward,
)


class WidthMode(enum.Enum):
    EQUAL_GLOBAL = "equal_global"
    EQUAL_WITHIN_BLOCK = "equal_within_block"
    INCREASING_WITHIN_BRANCH = "increasing_within_branch"


@dataclass(frozen=True)
class BlockSpec:
    """Structure of one block before parameter allocation."""
    scale: int
    interval: int
    in_channels: int
    out_channels: int
    width_mode: WidthMode = WidthMode.EQUAL_WITHIN_BLOCK

    def __post_init__(self):
        for name in ("scale", "interval", "in_channels", "out_channels"):
            if getattr(self, name) < 1:
                raise UsageError(f"BlockSpec.{name} must be positive")


@dataclass(frozen=True)
class BranchSpec:
    """Per-unit (in_channels, out_channels) pairs of one branch."""
    units: tuple

    def __post_init__(self):
        for (_, prev_out), (nxt_in, _) in zip(self.units, self.units[1:]):
            if prev_out != nxt_in:
                raise StructuralError("BranchSpec channels do not chain")


@dataclass(frozen=True)
class NetworkSpec:
    blocks: tuple
    classes: int
    fc_units: tuple = (384, 192)
    input_shape: tuple = (3, 32, 32)

    def __post_init__(self):
        if not self.blocks:
            raise UsageError("NetworkSpec needs at least one block")
        if self.classes < 2:
            raise UsageError("NetworkSpec.classes must be at least 2")
        if self.blocks[0].in_channels != self.input_shape[0]:
            raise StructuralError(
                f"first block expects {self.blocks[0].in_channels} channels, "
                f"input has {self.input_shape[0]}")
        for a, b in zip(self.blocks, self.blocks[1:]):
            if a.out_channels != b.in_channels:
                raise StructuralError("block output/input channels do not chain")


def width_schedule(n_inmaps, n_outmaps, n_layers):
    """Linearly interpolated per-layer widths from input to output maps.

    Layer i (1-based) gets n_inmaps + i * (n_outmaps - n_inmaps) / n_layers,
    rounded half up; the last layer always equals n_outmaps exactly.
    """
    if n_layers < 1:
        raise UsageError("width_schedule requires n_layers >= 1")
    if n_inmaps < 1 or n_outmaps < 1:
        raise UsageError("width_schedule requires positive map counts")
    step = (n_outmaps - n_inmaps) / n_layers
    return [int(np.floor(n_inmaps + i * step + 0.5)) for i in range(1, n_layers + 1)]


def build_branch(block, n):
    """Unit widths of branch ``n`` (1-based); the branch has n * interval units."""
    if not 1 <= n <= block.scale:
        raise UsageError(f"branch index {n} out of range [1, {block.scale}]")
    n_units = n * block.interval
    if block.width_mode is WidthMode.INCREASING_WITHIN_BRANCH:
        outs = width_schedule(block.in_channels, block.out_channels, n_units)
    else:
        outs = [block.out_channels] * n_units
    ins = [block.in_channels] + outs[:-1]
    return BranchSpec(units=tuple(zip(ins, outs)))


def normalize_paths(paths, scale):
    """Validate a branch-index set and return it sorted."""
    out = sorted(set(int(p) for p in paths))
    if not out:
        raise UsageError("path set must not be empty")
    if out[0] < 1 or out[-1] > scale:
        raise UsageError(f"path set {out} outside [1, {scale}]")
    return tuple(out)


LEARNABLE_KINDS = frozenset(
    {"conv_w", "conv_b", "bn_gamma", "bn_beta", "fc_w", "fc_b"})


@dataclass(frozen=True)
class ParamSlot:
    shape: tuple
    kind: str  # conv_w | conv_b | bn_gamma | bn_beta | bn_mean | bn_var | fc_w | fc_b

    @property
    def learnable(self):
        return self.kind in LEARNABLE_KINDS


class ParameterStore:
    """Named flat parameter storage with per-entry trainable flags.

    Arrays are mutated in place by optimizer steps; entries flagged
    non-trainable are never touched by a step.
    """

    def __init__(self):
        self._values = {}
        self._trainable = {}

    def add(self, name, value, trainable=True):
        if name in self._values:
            raise UsageError(f"duplicate parameter name {name!r}")
        self._values[name] = value
        self._trainable[name] = bool(trainable)

    def __getitem__(self, name):
        return self._values[name]

    def __contains__(self, name):
        return name in self._values

    def __len__(self):
        return len(self._values)

    def names(self):
        return tuple(self._values)

    def items(self):
        return self._values.items()

    def trainable(self, name):
        return self._trainable[name]

    def set_trainable(self, name, flag):
        if name not in self._values:
            raise UsageError(f"unknown parameter {name!r}")
        self._trainable[name] = bool(flag)

    def trainable_names(self):
        return tuple(n for n in self._values if self._trainable[n])

    def fingerprint(self, names=None):
        """SHA-256 over the raw bytes of the given entries (all by default);
        bit-identical values give identical digests."""
        h = hashlib.sha256()
        for name in names if names is not None else self.names():
            h.update(name.encode())
            arr = self._values[name]
            h.update(str(arr.dtype).encode())
            h.update(arr.tobytes())
        return h.hexdigest()


@dataclass
class _BlockTape:
    active: tuple
    branch_caches: dict
    pool_in: np.ndarray


@dataclass
class _FcTape:
    feats: np.ndarray
    conv_shape: tuple
    r1: np.ndarray
    drop1: object
    h1: np.ndarray
    r2: np.ndarray
    drop2: object
    h2: np.ndarray


@dataclass
class _Tape:
    blocks: list
    fc: _FcTape = None
    logits: np.ndarray = None


class Network:
    """Assembled topology plus the parameter shape plan.

    Parameters live in a :class:`ParameterStore` under hierarchical names
    like ``block1/branch2/unit1/conv_w``; the network itself is stateless,
    so several evaluations may share a frozen store concurrently.
    """

    def __init__(self, spec):
        p = len(spec.blocks)
        _, H, W = spec.input_shape
        if H % (2 ** p) or W % (2 ** p):
            raise StructuralError(
                f"input spatial extent {H}x{W} not divisible by 2^{p} pools")
        self.spec = spec
        self.branches = [
            [build_branch(block, n) for n in range(1, block.scale + 1)]
            for block in spec.blocks
        ]
        self.flat_features = (H >> p) * (W >> p) * spec.blocks[-1].out_channels
        self.plan = self._build_plan()

    def _build_plan(self):
        plan = {}
        for b, block in enumerate(self.spec.blocks, 1):
            for n, branch in enumerate(self.branches[b - 1], 1):
                for k, (cin, cout) in enumerate(branch.units, 1):
                    prefix = f"block{b}/branch{n}/unit{k}"
                    plan[f"{prefix}/conv_w"] = ParamSlot((cout, cin, 3, 3), "conv_w")
                    plan[f"{prefix}/conv_b"] = ParamSlot((cout,), "conv_b")
                    plan[f"{prefix}/bn_gamma"] = ParamSlot((cout,), "bn_gamma")
                    plan[f"{prefix}/bn_beta"] = ParamSlot((cout,), "bn_beta")
                    plan[f"{prefix}/bn_mean"] = ParamSlot((cout,), "bn_mean")
                    plan[f"{prefix}/bn_var"] = ParamSlot((cout,), "bn_var")
        sizes = [self.flat_features, *self.spec.fc_units, self.spec.classes]
        names = [f"fc{i}" for i in range(1, len(self.spec.fc_units) + 1)] + ["head"]
        for name, (fin, fout) in zip(names, zip(sizes, sizes[1:])):
            plan[f"{name}/w"] = ParamSlot((fin, fout), "fc_w")
            plan[f"{name}/b"] = ParamSlot((fout,), "fc_b")
        return plan

    # -- parameter name helpers -------------------------------------------

    def branch_param_names(self, n):
        """All learnable parameter names of branch ``n`` across every block."""
        key = f"/branch{n}/"
        return [name for name, slot in self.plan.items()
                if key in name and slot.learnable]

    def fc_weight_names(self):
        return [name for name, slot in self.plan.items() if slot.kind == "fc_w"]

    def _unit_params(self, store, b, n, k):
        prefix = f"block{b}/branch{n}/unit{k}"
        return UnitParams(
            conv_w=store[f"{prefix}/conv_w"], conv_b=store[f"{prefix}/conv_b"],
            gamma=store[f"{prefix}/bn_gamma"], beta=store[f"{prefix}/bn_beta"],
            running_mean=store[f"{prefix}/bn_mean"],
            running_var=store[f"{prefix}/bn_var"])

    # -- forward / backward ------------------------------------------------

    def forward(self, store, x, mode, *, paths=None, drop_masks=None,
                dropout_rate=0.0, dropout_rng=None, bn_update_branches=None):
        """Run the network, returning (logits, tape).

        ``paths`` restricts every block to the given branch indices;
        ``drop_masks`` (one boolean array per block, from the drop-path
        sampler) restricts each block independently and takes precedence.
        The join averages over the active branches only, so the output
        scale does not depend on how many survive.
        ``bn_update_branches`` limits Train-mode running-statistic updates
        to the given branch indices (None updates all); frozen branches
        keep their running statistics bit-identical this way.
        """
        if paths is not None:
            paths = normalize_paths(paths, min(b.scale for b in self.spec.blocks))
        tape = _Tape(blocks=[])
        h = x
        for b, block in enumerate(self.spec.blocks, 1):
            if drop_masks is not None:
                mask = drop_masks[b - 1]
                active = tuple(n for n in range(1, block.scale + 1) if mask[n - 1])
                if not active:
                    raise UsageError(f"drop mask for block {b} has no active branch")
            elif paths is not None:
                active = paths
            else:
                active = tuple(range(1, block.scale + 1))
            outs = []
            caches = {}
            for n in active:
                t = h
                unit_caches = []
                update = mode is Mode.TRAIN and (
                    bn_update_branches is None or n in bn_update_branches)
                for k in range(1, len(self.branches[b - 1][n - 1].units) + 1):
                    t, c = unit_forward(t, self._unit_params(store, b, n, k), mode,
                                        update_running=update)
                    unit_caches.append(c)
                outs.append(t)
                caches[n] = unit_caches
            joined = elementwise_average(outs)
            tape.blocks.append(_BlockTape(active=active, branch_caches=caches,
                                          pool_in=joined))
            h = maxpool2x2(joined)

        B = x.shape[0]
        conv_shape = h.shape
        feats = h.reshape(B, self.flat_features)
        a1 = matmul_bias(feats, store["fc1/w"], store["fc1/b"])
        r1 = relu(a1)
        d1, drop1 = dropout(r1, dropout_rate, mode, dropout_rng)
        a2 = matmul_bias(d1, store["fc2/w"], store["fc2/b"])
        r2 = relu(a2)
        d2, drop2 = dropout(r2, dropout_rate, mode, dropout_rng)
        logits = matmul_bias(d2, store["head/w"], store["head/b"])
        tape.fc = _FcTape(feats=feats, conv_shape=conv_shape, r1=r1, drop1=drop1,
                          h1=d1, r2=r2, drop2=drop2, h2=d2)
        tape.logits = logits
        return logits, tape

    def backward(self, store, tape, dlogits, need_input_grad=False):
        """Reverse pass over a forward tape.

        Returns a gradient for every learnable parameter; branches that
        were inactive in the forward pass get exact zeros.  The gradient
        w.r.t. the network input is only computed (second return value)
        when ``need_input_grad`` is set; training discards it.
        """
        grads = {}

        def put(name, g):
            grads[name] = g

        fc = tape.fc
        dh2, dw, db = matmul_bias_backward(dlogits, fc.h2, store["head/w"])
        put("head/w", dw)
        put("head/b", db)
        dr2 = dropout_backward(dh2, fc.drop2)
        da2 = relu_backward(dr2, fc.r2)
        dh1, dw, db = matmul_bias_backward(da2, fc.h1, store["fc2/w"])
        put("fc2/w", dw)
        put("fc2/b", db)
        dr1 = dropout_backward(dh1, fc.drop1)
        da1 = relu_backward(dr1, fc.r1)
        dfeats, dw, db = matmul_bias_backward(da1, fc.feats, store["fc1/w"])
        put("fc1/w", dw)
        put("fc1/b", db)
        dh = dfeats.reshape(fc.conv_shape)

        for b in range(len(self.spec.blocks), 0, -1):
            bt = tape.blocks[b - 1]
            djoin = maxpool2x2_backward(dh, bt.pool_in)
            dbranch = djoin / len(bt.active)
            dh = None
            for n in bt.active:
                d = dbranch
                unit_caches = bt.branch_caches[n]
                for k in range(len(unit_caches), 0, -1):
                    # the image batch is a leaf: skip its gradient unless asked
                    need_dx = b > 1 or k > 1 or need_input_grad
                    d, g = unit_backward(d, unit_caches[k - 1],
                                         need_input_grad=need_dx)
                    prefix = f"block{b}/branch{n}/unit{k}"
                    put(f"{prefix}/conv_w", g.conv_w)
                    put(f"{prefix}/conv_b", g.conv_b)
                    put(f"{prefix}/bn_gamma", g.gamma)
                    put(f"{prefix}/bn_beta", g.beta)
                if b > 1 or need_input_grad:
                    dh = d if dh is None else dh + d

        for name, slot in self.plan.items():
            if slot.learnable and name not in grads:
                grads[name] = np.zeros(slot.shape, dtype=store[name].dtype)
        return grads, dh

    def forward_block(self, store, block_index, z, mode, active=None,
                      update_running=True):
        """Run a single block (1-based index) outside the full network."""
        block = self.spec.blocks[block_index - 1]
        if active is None:
            active = tuple(range(1, block.scale + 1))
        else:
            active = normalize_paths(active, block.scale)
        outs = []
        for n in active:
            t = z
            for k in range(1, len(self.branches[block_index - 1][n - 1].units) + 1):
                t, _ = unit_forward(t, self._unit_params(store, block_index, n, k),
                                    mode,
                                    update_running=update_running and mode is Mode.TRAIN)
            outs.append(t)
        return elementwise_average(outs)


def assemble_network(spec):
    """Build the topology and parameter shape plan for a NetworkSpec."""
    return Network(spec)


def block_forward(net, store, block_index, z, mode, active=None):
    """Module-level convenience wrapper around :meth:`Network.forward_block`."""
    return net.forward_block(store, block_index, z, mode, active=active)


def count_parameters(spec):
    """Exact number of learnable scalars (running statistics excluded)."""
    net = spec if isinstance(spec, Network) else Network(spec)
    return sum(int(np.prod(slot.shape)) for slot in net.plan.values()
               if slot.learnable)


def count_parameters_by_section(spec):
    """Learnable-scalar counts per block plus the dense head."""
    net = spec if isinstance(spec, Network) else Network(spec)
    sections = {}
    for name, slot in net.plan.items():
        if not slot.learnable:
            continue
        section = name.split("/")[0] if name.startswith("block") else "dense"
        sections[section] = sections.get(section, 0) + int(np.prod(slot.shape))
    return sections


def depth(spec, paths=None):
    """Longest-path convolution count plus the two hidden dense layers and
    the classifier; with a path set, the longest active branch rules."""
    scales = {b.scale for b in spec.blocks}
    intervals = {b.interval for b in spec.blocks}
    if len(scales) != 1 or len(intervals) != 1:
        raise UsageError("depth accounting assumes homogeneous (scale, interval)")
    scale, interval = scales.pop(), intervals.pop()
    longest = scale if paths is None else max(normalize_paths(paths, scale))
    return len(spec.blocks) * longest * interval + 3


@dataclass
class Subnet:
    """The network restricted to a branch-index set, sharing parameters."""
    net: Network
    store: ParameterStore
    paths: tuple

    def __post_init__(self):
        scale = min(b.scale for b in self.net.spec.blocks)
        object.__setattr__(self, "paths", normalize_paths(self.paths, scale))

    @property
    def depth(self):
        return depth(self.net.spec, self.paths)

    def logits(self, x):
        out, _ = self.net.forward(self.store, x, Mode.INFER, paths=self.paths)
        return out

    def predict(self, x):
        return self.logits(x).argmax(axis=1)


def subnet(net, store, paths):
    """Evaluable sub-network using only the given branches in every block."""
    return Subnet(net=net, store=store, paths=tuple(paths))
