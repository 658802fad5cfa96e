"""Adam and the L2 penalty used by the trainer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .errors import ConfigurationError, ShapeError, TrainingDivergenceError

DEFAULT_LEARNING_RATE = 1e-5
DEFAULT_L2 = 5e-4


@dataclass
class AdamState:
    learning_rate: float = DEFAULT_LEARNING_RATE
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state):
    """Apply one bias-corrected Adam update, in place.

    ``params`` and ``grads`` are dicts of arrays keyed by parameter name.
    The update descends, so pass gradients of the loss to minimize.
    Returns ``(params, state)``.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingDivergenceError(
                f"non-finite gradient for parameter {name!r}", parameter=name, step=state.step
            )
        if np.shape(params[name]) != np.shape(g):
            raise ShapeError(f"gradient shape {np.shape(g)} != parameter shape {np.shape(params[name])} for {name!r}")

    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for name, g in grads.items():
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        # epsilon placement follows the reference algorithm (outside the bias correction)
        step = state.learning_rate * (m / (1.0 - b1 ** t)) / (np.sqrt(v / (1.0 - b2 ** t)) + state.eps)
        params[name] -= step
    return params, state


def l2_penalty(params, coefficient=DEFAULT_L2):
    """``coefficient * sum ||p||^2`` over tape leaves (or plain arrays)."""
    if coefficient < 0:
        raise ConfigurationError(f"L2 coefficient must be non-negative, got {coefficient}")
    values = params.values() if isinstance(params, dict) else params
    total = dc.Tensor(0.0)
    for p in values:
        total = total + dc.tsum(dc.square(p))
    return total * float(coefficient)
