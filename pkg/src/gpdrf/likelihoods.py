"""Gaussian (regression) and softmax (classification) likelihoods."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from . import rng as rngmod
from .errors import ConfigurationError, InputError

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class LikelihoodSpec:
    kind: str  # "gaussian" | "softmax"
    n_classes: int = 1
    log_noise: np.ndarray = field(default_factory=lambda: np.array(0.0))  # log sigma^2, gaussian only

    def __post_init__(self):
        if self.kind not in ("gaussian", "softmax"):
            raise ConfigurationError(f"unknown likelihood {self.kind!r}")
        if self.kind == "softmax" and self.n_classes < 2:
            raise ConfigurationError("softmax likelihood needs at least 2 classes")
        if self.kind == "gaussian":
            self.n_classes = 1
        self.log_noise = np.array(self.log_noise, dtype=np.float64)

    @classmethod
    def gaussian(cls, noise_var=1.0):
        return cls("gaussian", 1, np.array(np.log(noise_var)))

    @classmethod
    def softmax(cls, n_classes):
        return cls("softmax", n_classes)

    @property
    def output_dim(self):
        return 1 if self.kind == "gaussian" else self.n_classes

    def param_arrays(self):
        return {"log_noise": self.log_noise} if self.kind == "gaussian" else {}


def log_likelihood(y, g, spec, params=None):
    """Elementwise log P(y | g).

    ``g`` has trailing axis d_L and any leading axes (e.g. samples x batch);
    ``y`` broadcasts against ``g``'s leading axes.  With tensors in ``g`` or
    ``params`` the result stays on the tape.
    """
    params = spec.param_arrays() if params is None else params
    y = np.asarray(y)
    tape = isinstance(g, dc.Tensor) or any(isinstance(v, dc.Tensor) for v in params.values())
    if spec.kind == "gaussian":
        log_noise = params["log_noise"]
        if tape:
            g = dc.const(g)
            log_noise = dc.const(log_noise)
            r = dc.reshape(g, g.shape[:-1]) - y
            return -0.5 * LOG_2PI - 0.5 * log_noise - 0.5 * dc.square(r) * dc.exp(-log_noise)
        g = np.asarray(g, dtype=np.float64)
        r = g[..., 0] - y
        return -0.5 * LOG_2PI - 0.5 * log_noise - 0.5 * r * r * np.exp(-log_noise)
    K = spec.n_classes
    yi = y.astype(np.int64)
    if np.any(yi != y) or np.any(yi < 0) or np.any(yi >= K):
        raise InputError(f"class index out of range for {K} classes")
    gv = g.value if isinstance(g, dc.Tensor) else np.asarray(g, dtype=np.float64)
    onehot = np.broadcast_to(np.eye(K)[yi], gv.shape)
    if tape:
        g = dc.const(g)
        return dc.tsum(g * onehot, axis=-1) - dc.logsumexp(g, axis=-1)
    m = gv.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(gv - m).sum(axis=-1)) + m[..., 0]
    return (gv * onehot).sum(axis=-1) - lse


def softmax(g):
    g = np.asarray(g, dtype=np.float64)
    z = np.exp(g - g.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def sample_target(g, spec, seed):
    """Draw y from P(y | g); ``seed`` is an int or a numpy Generator.

    ``g`` may carry leading axes; one draw is made per leading index.
    """
    gen = seed if isinstance(seed, np.random.Generator) else rngmod.keyed(seed, rngmod.TAG_TARGET)
    g = np.asarray(g, dtype=np.float64)
    if spec.kind == "gaussian":
        sd = float(np.exp(0.5 * spec.log_noise))
        return g[..., 0] + sd * gen.standard_normal(g.shape[:-1])
    p = softmax(g)
    u = gen.random(g.shape[:-1] + (1,))
    cdf = np.cumsum(p, axis=-1)
    idx = (u > cdf).sum(axis=-1)
    return np.minimum(idx, spec.n_classes - 1)
