"""Dense-array kernels every layer is built from.

Tensors are plain ``numpy.ndarray`` values in row-major order with the
canonical layouts (batch, channel, height, width) for feature maps and
(batch, feature) for dense activations.  Outputs of these kernels are
treated as immutable; internals (im2col here) are not part of the
contract.  Summation order is fixed, so every kernel is bit-deterministic
for identical inputs.
"""

import numpy as np

from . import _kernels
from .errors import StructuralError, UsageError


def elementwise_average(inputs):
    """Arithmetic mean of equally shaped arrays.

    The gradient contract: with k inputs, each input receives 1/k of the
    upstream gradient (callers implement this split; no cache is needed).
    """
    if len(inputs) == 0:
        raise UsageError("elementwise_average requires at least one input")
    ref = inputs[0].shape
    for i, t in enumerate(inputs):
        if t.shape != ref:
            raise StructuralError(
                f"elementwise_average: input {i} has shape {t.shape}, expected {ref}")
    if len(inputs) == 1:
        return inputs[0]
    acc = inputs[0].copy()
    for t in inputs[1:]:
        acc += t
    acc /= len(inputs)
    return acc


def _pad1(x):
    B, C, H, W = x.shape
    xp = np.zeros((B, C, H + 2, W + 2), dtype=x.dtype)
    xp[:, :, 1:-1, 1:-1] = x
    return xp


def conv2d(x, w, b):
    """3x3 convolution, stride 1, same zero padding.

    x: (B, Cin, H, W); w: (Cout, Cin, 3, 3); b: (Cout,).  Output spatial
    extents equal the input's, which the averaging join of a block relies
    on.  The inner loops are compiled (see _kernels) with a fixed
    accumulation order.
    """
    if x.ndim != 4 or w.ndim != 4:
        raise StructuralError(f"conv2d expects 4-D input/weights, got {x.ndim}-D/{w.ndim}-D")
    if w.shape[2:] != (3, 3):
        raise StructuralError(f"conv2d kernels must be 3x3, got {w.shape[2:]}")
    if w.shape[1] != x.shape[1]:
        raise StructuralError(
            f"conv2d channel mismatch: input has {x.shape[1]}, weights expect {w.shape[1]}")
    if b.shape != (w.shape[0],):
        raise StructuralError(f"conv2d bias shape {b.shape} != ({w.shape[0]},)")
    B, _, H, W = x.shape
    y = np.empty((B, w.shape[0], H, W), dtype=x.dtype)
    _kernels.conv3x3_forward(_pad1(x), np.ascontiguousarray(w),
                             np.ascontiguousarray(b), y)
    return y


def _grad_weights_gemm(xp, dy):
    """dw as one tall GEMM over patch columns; wins at small spatial
    extents where width-vectorized accumulation starves."""
    B, C, Hp, Wp = xp.shape
    H, W = Hp - 2, Wp - 2
    Co = dy.shape[1]
    col = np.empty((C, 3, 3, B, H, W), dtype=xp.dtype)
    for u in range(3):
        for v in range(3):
            col[:, u, v] = xp[:, :, u:u + H, v:v + W].transpose(1, 0, 2, 3)
    col = col.reshape(C * 9, B * H * W)
    dy_all = np.ascontiguousarray(dy.transpose(1, 0, 2, 3)).reshape(Co, B * H * W)
    return (dy_all @ col.T).reshape(Co, C, 3, 3)


def conv2d_backward(dy, x, w, need_input_grad=True):
    """Gradients of conv2d w.r.t. input, weights and bias.

    dx is itself a 3x3 same-padded convolution of dy with the spatially
    flipped, channel-transposed weights, so no scatter (col2im) is needed.
    With ``need_input_grad`` false (the input is a leaf, e.g. the image
    batch), dx is skipped and returned as None.
    """
    B, C, H, W = x.shape
    Co = w.shape[0]
    db = dy.sum(axis=(0, 2, 3))
    xp = _pad1(x)
    if H * W >= 1024:
        dw = np.empty_like(w)
        _kernels.conv3x3_grad_weights(xp, np.ascontiguousarray(dy), dw)
    else:
        dw = _grad_weights_gemm(xp, dy)
    dx = None
    if need_input_grad:
        w_flip = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
        dx = np.empty_like(x)
        _kernels.conv3x3_forward(_pad1(dy), w_flip, np.zeros(C, dtype=dy.dtype), dx)
    return dx, dw, db


def _pool_windows(x):
    B, C, H, W = x.shape
    return (x.reshape(B, C, H // 2, 2, W // 2, 2)
             .transpose(0, 1, 2, 4, 3, 5)
             .reshape(B, C, H // 2, W // 2, 4))


def maxpool2x2(x):
    """2x2 max pooling with stride 2; spatial extents must be even."""
    if x.ndim != 4:
        raise StructuralError(f"maxpool2x2 expects a 4-D input, got {x.ndim}-D")
    B, C, H, W = x.shape
    if H % 2 or W % 2:
        raise StructuralError(f"maxpool2x2 needs even spatial extents, got {H}x{W}")
    return _pool_windows(x).max(axis=-1)


def maxpool2x2_backward(dy, x):
    """Route dy to the argmax of each window (first occurrence on ties)."""
    B, C, H, W = x.shape
    win = _pool_windows(x)
    idx = win.argmax(axis=-1)  # numpy argmax takes the first maximum
    g = np.zeros_like(win)
    np.put_along_axis(g, idx[..., None], dy[..., None], axis=-1)
    dx = (g.reshape(B, C, H // 2, W // 2, 2, 2)
           .transpose(0, 1, 2, 4, 3, 5)
           .reshape(B, C, H, W))
    return np.ascontiguousarray(dx)


def matmul_bias(x, w, b):
    """Affine map x @ w + b for (B, F) inputs."""
    if x.ndim != 2 or w.ndim != 2:
        raise StructuralError(f"matmul_bias expects 2-D operands, got {x.ndim}-D/{w.ndim}-D")
    if x.shape[1] != w.shape[0]:
        raise StructuralError(
            f"matmul_bias inner extents disagree: {x.shape[1]} vs {w.shape[0]}")
    if b.shape != (w.shape[1],):
        raise StructuralError(f"matmul_bias bias shape {b.shape} != ({w.shape[1]},)")
    return x @ w + b


def matmul_bias_backward(dy, x, w):
    return dy @ w.T, x.T @ dy, dy.sum(axis=0)
