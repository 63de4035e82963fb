"""Differentiable layer primitives with explicit forward/backward pairs.

Forward functions return (output, cache); the matching backward consumes
the cache and upstream gradient.  The conv-ReLU-batchnorm unit is the
single building block every branch is made of, applied in exactly that
order: convolution, then ReLU, then batch normalization.
"""

import enum
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import NumericalError, StructuralError, UsageError
from .tensor import conv2d, conv2d_backward


class Mode(enum.Enum):
    """Train uses batch statistics and live stochastic regularizers;
    Infer uses running statistics and disables them."""
    TRAIN = "train"
    INFER = "infer"


BN_EPSILON = 1e-5
BN_MOMENTUM = 0.9


def relu(x):
    return np.maximum(x, 0)


def relu_backward(dy, y):
    # y is the forward output; y > 0 iff the input was > 0, and the
    # subgradient at 0 is taken as 0
    return dy * (y > 0)


@dataclass
class BnCache:
    xhat: np.ndarray
    inv_std: np.ndarray  # (C,) 1/sqrt(var + eps)
    gamma: np.ndarray


def batchnorm_forward(x, gamma, beta, running_mean, running_var, mode,
                      momentum=BN_MOMENTUM, eps=BN_EPSILON, update_running=True):
    """Per-channel batch normalization over (batch, height, width).

    Train mode normalizes by the biased batch statistics and, when
    ``update_running`` is set, folds them into the running estimates with
    exponential moving average in place.  Infer mode normalizes by the
    running statistics.
    """
    if x.ndim != 4:
        raise StructuralError(f"batchnorm expects a 4-D input, got {x.ndim}-D")
    C = x.shape[1]
    for name, arr in (("gamma", gamma), ("beta", beta),
                      ("running_mean", running_mean), ("running_var", running_var)):
        if arr.shape != (C,):
            raise StructuralError(f"batchnorm {name} shape {arr.shape} != ({C},)")
    if mode is Mode.TRAIN:
        n = x.shape[0] * x.shape[2] * x.shape[3]
        if n == 0:
            raise UsageError("batchnorm: variance undefined over an empty batch")
        mean, var = _kernels.bn_channel_stats(x)
        if not np.isfinite(var).all():
            raise NumericalError("batchnorm: non-finite batch variance")
        if update_running:
            running_mean *= momentum
            running_mean += (1.0 - momentum) * mean
            running_var *= momentum
            running_var += (1.0 - momentum) * var
    else:
        mean, var = running_mean, running_var
    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype, copy=False)
    xhat = np.empty_like(x)
    y = np.empty_like(x)
    _kernels.bn_normalize(x, mean.astype(x.dtype, copy=False), inv_std,
                          gamma, beta, xhat, y)
    return y, BnCache(xhat=xhat, inv_std=inv_std, gamma=gamma)


def batchnorm_backward(dy, cache):
    """Train-mode gradient through the batch statistics."""
    xhat, inv_std, gamma = cache.xhat, cache.inv_std, cache.gamma
    n = xhat.shape[0] * xhat.shape[2] * xhat.shape[3]
    dbeta, dgamma = _kernels.bn_backward_reduce(dy, xhat)
    # dx = g*s*dy - (g*s/n)*dbeta - (g*s/n)*dgamma*xhat, per channel
    scale = gamma * inv_std
    _dtype = dy.dtype
    dx = np.empty_like(dy)
    _kernels.bn_backward_dx(dy, xhat, scale.astype(_dtype, copy=False),
                            (scale * dbeta / n).astype(_dtype, copy=False),
                            (scale * dgamma / n).astype(_dtype, copy=False), dx)
    return dx, dgamma, dbeta


def dropout(x, rate, mode, rng=None):
    """Inverted dropout: Train zeroes elements with probability ``rate``
    and scales survivors by 1/(1-rate), so Infer is exactly the identity."""
    if not 0.0 <= rate < 1.0:
        raise UsageError(f"dropout rate must be in [0, 1), got {rate}")
    if mode is Mode.INFER or rate == 0.0:
        return x, None
    keep = (rng.random(x.shape) >= rate).astype(x.dtype)
    keep /= (1.0 - rate)
    return x * keep, keep


def dropout_backward(dy, cache):
    return dy if cache is None else dy * cache


@dataclass
class UnitParams:
    """Parameters of one conv-ReLU-batchnorm unit (views into the store)."""
    conv_w: np.ndarray
    conv_b: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray


@dataclass
class UnitCache:
    x: np.ndarray
    conv_w: np.ndarray
    relu_out: np.ndarray
    bn: BnCache


def unit_forward(z, p, mode, update_running=True):
    """conv -> ReLU -> batchnorm, in that order."""
    a = conv2d(z, p.conv_w, p.conv_b)
    r = relu(a)
    y, bn_cache = batchnorm_forward(r, p.gamma, p.beta, p.running_mean,
                                    p.running_var, mode,
                                    update_running=update_running)
    return y, UnitCache(x=z, conv_w=p.conv_w, relu_out=r, bn=bn_cache)


@dataclass
class UnitGrads:
    conv_w: np.ndarray
    conv_b: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray


def unit_backward(dy, cache, need_input_grad=True):
    dr, dgamma, dbeta = batchnorm_backward(dy, cache.bn)
    da = relu_backward(dr, cache.relu_out)
    dz, dw, db = conv2d_backward(da, cache.x, cache.conv_w,
                                 need_input_grad=need_input_grad)
    return dz, UnitGrads(conv_w=dw, conv_b=db, gamma=dgamma, beta=dbeta)


def softmax_cross_entropy(logits, labels):
    """Mean negative log-softmax of the true class.

    Returns (loss, dlogits) with dlogits = (softmax - onehot) / batch.
    Stabilized by subtracting the per-row maximum before exponentiating.
    """
    B, K = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (B,):
        raise StructuralError(f"labels shape {labels.shape} != ({B},)")
    if labels.min() < 0 or labels.max() >= K:
        raise UsageError(f"labels must lie in [0, {K})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    denom = exp.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(denom)
    loss = float(-log_probs[np.arange(B), labels].mean())
    grad = exp / denom
    grad[np.arange(B), labels] -= 1.0
    grad /= B
    return loss, grad.astype(logits.dtype)


def grad_check(loss_fn, grad_fn, params, x, epsilon=1e-5):
    """Compare analytic gradients with central finite differences.

    loss_fn(params, x) -> float must be deterministic (stochastic
    regularizers frozen to fixed masks) and evaluated in 64-bit precision;
    grad_fn(params, x) -> (dict of parameter gradients, input gradient).
    Returns the maximum relative error
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-8) over every
    element of every parameter and of the input.
    """
    param_grads, dx = grad_fn(params, x)
    worst = 0.0

    def probe(arr, analytic):
        nonlocal worst
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + epsilon
            hi = loss_fn(params, x)
            arr[idx] = orig - epsilon
            lo = loss_fn(params, x)
            arr[idx] = orig
            numeric = (hi - lo) / (2 * epsilon)
            a = float(analytic[idx])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)

    for name, arr in params.items():
        probe(arr, param_grads[name])
    probe(x, dx)
    return worst
