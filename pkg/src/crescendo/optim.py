"""Adam and Nesterov-momentum updates plus the piecewise learning-rate
schedules used for whole-net training.

Both optimizers mutate the store's trainable arrays in place and keep
per-parameter state only for the names that were trainable when the state
was created, so frozen parameters are untouched by construction.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import StructuralError, UsageError


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise UsageError("Adam betas must lie in [0, 1)")
        if self.epsilon <= 0:
            raise UsageError("Adam epsilon must be positive")


@dataclass(frozen=True)
class NesterovConfig:
    momentum: float = 0.9

    def __post_init__(self):
        if not 0.0 <= self.momentum < 1.0:
            raise UsageError("momentum must lie in [0, 1)")


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0

    @classmethod
    def for_store(cls, store):
        state = cls()
        for name in store.trainable_names():
            state.m[name] = np.zeros_like(store[name])
            state.v[name] = np.zeros_like(store[name])
        return state


@dataclass
class NesterovState:
    velocity: dict = field(default_factory=dict)

    @classmethod
    def for_store(cls, store):
        state = cls()
        for name in store.trainable_names():
            state.velocity[name] = np.zeros_like(store[name])
        return state


def _check_shape(name, grad, param):
    if grad.shape != param.shape:
        raise StructuralError(
            f"gradient for {name!r} has shape {grad.shape}, parameter {param.shape}")


def adam_step(store, grads, state, cfg):
    """One bias-corrected Adam update over the state's parameters.

    m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2;
    p <- p - lr * m_hat / (sqrt(v_hat) + eps).
    """
    state.t += 1
    bc1 = 1.0 - cfg.beta1 ** state.t
    bc2 = 1.0 - cfg.beta2 ** state.t
    for name, m in state.m.items():
        g = grads[name]
        p = store[name]
        _check_shape(name, g, p)
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * np.square(g)
        p -= cfg.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + cfg.epsilon)


def nesterov_step(store, grads, state, cfg, lr):
    """Velocity update with gradients taken at the lookahead point.

    The caller must have evaluated ``grads`` at params + momentum *
    velocity; this function then applies v <- mu*v - lr*g and
    p <- p + v.
    """
    for name, v in state.velocity.items():
        g = grads[name]
        p = store[name]
        _check_shape(name, g, p)
        v *= cfg.momentum
        v -= lr * g
        p += v


CIFAR_REFERENCE_EPOCHS = 700
SVHN_REFERENCE_EPOCHS = 70


def lr_schedule(epoch, profile):
    """Piecewise-constant rates; the decay epoch itself already uses the
    lower rate."""
    if epoch < 0:
        raise UsageError("epoch must be non-negative")
    if profile == "cifar":
        return 0.1 if epoch < 512 else 0.01
    if profile == "svhn":
        if epoch < 42:
            return 0.05
        return 0.005 if epoch < 63 else 0.0005
    raise UsageError(f"unknown schedule profile {profile!r}")


def lr_for_epoch(epoch, total_epochs, profile):
    """Schedule rate for shortened runs: breakpoints scale with the run
    length so the decay happens at the same fraction of training."""
    reference = CIFAR_REFERENCE_EPOCHS if profile == "cifar" else SVHN_REFERENCE_EPOCHS
    if total_epochs == reference:
        return lr_schedule(epoch, profile)
    scaled = int(np.floor(epoch * reference / max(total_epochs, 1)))
    return lr_schedule(scaled, profile)
