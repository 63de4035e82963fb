"""Drop-path mask sampling and the L2 penalty on dense-layer weights."""

from dataclasses import dataclass

import numpy as np

from .errors import UsageError


@dataclass(frozen=True)
class DropPathConfig:
    """Per-branch drop probability; an all-dropped draw keeps one branch."""
    rate: float

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise UsageError(f"drop-path rate must be in [0, 1), got {self.rate}")


def sample_drop_mask(scale, cfg, rng):
    """Boolean keep-mask of length ``scale``.

    Each branch is dropped independently with probability ``cfg.rate``; if
    every branch is dropped, one chosen uniformly is re-activated so the
    block always has at least one live branch.  A fresh mask is drawn per
    block per training step; inference never drops.
    """
    if scale < 1:
        raise UsageError("scale must be at least 1")
    keep = rng.random(scale) >= cfg.rate
    if not keep.any():
        keep[rng.integers(scale)] = True
    return keep


def l2_penalty(weights, lam):
    """lam * sum of squared entries over the given weight matrices.

    Applies to dense-layer weight matrices only (biases and conv weights
    are excluded by the caller).  Returns (penalty, per-tensor gradient
    contributions 2 * lam * w).
    """
    if lam < 0:
        raise UsageError(f"l2 lambda must be non-negative, got {lam}")
    penalty = lam * sum(float(np.sum(np.square(w))) for w in weights)
    return penalty, [2.0 * lam * w for w in weights]
