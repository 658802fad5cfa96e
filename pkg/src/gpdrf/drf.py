"""Deep random-feature layers with factorized Gaussian posteriors over the
weights W^l and spectra Omega^l."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .errors import ConfigurationError, ShapeError
from .random_features import rff_map


class SpectraOption(str, enum.Enum):
    PRIOR_FIXED = "prior-fixed"
    VAR_FIXED = "var-fixed"
    VAR_RESAMPLED = "var-resampled"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        for opt in cls:
            if opt.value == key:
                return opt
        raise ConfigurationError(f"unknown spectra option {value!r}; expected one of {[o.value for o in cls]}")


PARAM_NAMES = ("w_mean", "w_logscale", "omega_mean", "omega_logscale", "log_lambda", "log_alpha")


@dataclass
class DrfLayerState:
    w_mean: np.ndarray  # (2M, d_out)
    w_logscale: np.ndarray
    omega_mean: np.ndarray  # (d_in, M)
    omega_logscale: np.ndarray
    log_lambda: np.ndarray  # (d_in,)
    log_alpha: np.ndarray  # ()

    @classmethod
    def create(cls, d_in, d_out, n_features, rng, lambda_scale=1.0, alpha=1.0, w_scale=1.0):
        """Means ~ N(0, 0.01), weight scales s = ``w_scale``, beta^2 = lambda."""
        if min(d_in, d_out, n_features) < 1:
            raise ConfigurationError(f"layer sizes must be positive, got {d_in}->{d_out} with {n_features} features")
        log_lambda = np.full(d_in, np.log(lambda_scale))
        return cls(
            w_mean=0.1 * rng.standard_normal((2 * n_features, d_out)),
            w_logscale=np.full((2 * n_features, d_out), np.log(w_scale)),
            omega_mean=0.1 * rng.standard_normal((d_in, n_features)),
            omega_logscale=np.tile(0.5 * log_lambda[:, None], (1, n_features)),
            log_lambda=log_lambda,
            log_alpha=np.array(np.log(alpha)),
        )

    @property
    def d_in(self):
        return self.omega_mean.shape[0]

    @property
    def d_out(self):
        return self.w_mean.shape[1]

    @property
    def n_features(self):
        return self.omega_mean.shape[1]

    def param_arrays(self):
        return {name: getattr(self, name) for name in PARAM_NAMES}


def _params(layer):
    return layer.param_arrays() if isinstance(layer, DrfLayerState) else layer


def _is_tape(*xs):
    return any(isinstance(x, dc.Tensor) for x in xs)


def reparam_weights(layer, e):
    """W = m + s * e (e may carry a leading sample axis)."""
    p = _params(layer)
    m, logs = p["w_mean"], p["w_logscale"]
    if _is_tape(m, logs):
        return dc.const(m) + dc.exp(dc.const(logs)) * np.asarray(e)
    return np.asarray(m) + np.exp(logs) * np.asarray(e)


def reparam_spectra(layer, tau, option=SpectraOption.VAR_RESAMPLED):
    """Omega = eta + beta * tau, or sqrt(Lambda) * tau drawn from the prior under PRIOR-FIXED."""
    p = _params(layer)
    option = SpectraOption.parse(option)
    tau = np.asarray(tau)
    if option is SpectraOption.PRIOR_FIXED:
        loglam = p["log_lambda"]
        if _is_tape(loglam):
            loglam = dc.const(loglam)
            return dc.reshape(dc.exp(0.5 * loglam), (loglam.shape[0], 1)) * tau
        return np.exp(0.5 * np.asarray(loglam))[:, None] * tau
    eta, logb = p["omega_mean"], p["omega_logscale"]
    if _is_tape(eta, logb):
        return dc.const(eta) + dc.exp(dc.const(logb)) * tau
    return np.asarray(eta) + np.exp(logb) * tau


def layer_forward(h, W, omega, alpha):
    """W^T phi(h; Omega) with the interleaved cos/sin feature map."""
    Wv = W.value if isinstance(W, dc.Tensor) else np.asarray(W)
    Ov = omega.value if isinstance(omega, dc.Tensor) else np.asarray(omega)
    if Wv.shape[-2] != 2 * Ov.shape[-1]:
        raise ShapeError(f"weights have {Wv.shape[-2]} rows but the feature map has {2 * Ov.shape[-1]} entries")
    phi = rff_map(h, omega, alpha)
    if _is_tape(phi, W):
        return dc.matmul(phi, W)
    return np.matmul(phi, Wv)


def feed_forward(F, layers, samples):
    """Compose layer_forward over all layers.

    ``layers`` are :class:`DrfLayerState` objects or param dicts;
    ``samples`` is a list of (W, Omega) pairs, one per layer.  With no
    layers this is the identity.
    """
    if len(layers) != len(samples):
        raise ShapeError(f"{len(layers)} layers but {len(samples)} samples")
    h = F
    for layer, (W, omega) in zip(layers, samples):
        p = _params(layer)
        log_alpha = p["log_alpha"]
        alpha = dc.exp(log_alpha) if isinstance(log_alpha, dc.Tensor) else float(np.exp(log_alpha))
        h = layer_forward(h, W, omega, alpha)
    return h


def kl_weights(layer):
    """KL(q(W) || N(0, I)) summed over entries."""
    p = _params(layer)
    m, logs = p["w_mean"], p["w_logscale"]
    if _is_tape(m, logs):
        m, logs = dc.const(m), dc.const(logs)
        return 0.5 * dc.tsum(dc.exp(2.0 * logs) + dc.square(m) - 1.0 - 2.0 * logs)
    return float(0.5 * np.sum(np.exp(2.0 * logs) + m * m - 1.0 - 2.0 * logs))


def kl_spectra(layer):
    """KL(q(Omega) || N(0, Lambda)) with Lambda a per-row variance."""
    p = _params(layer)
    eta, logb, loglam = p["omega_mean"], p["omega_logscale"], p["log_lambda"]
    if _is_tape(eta, logb, loglam):
        eta, logb, loglam = dc.const(eta), dc.const(logb), dc.const(loglam)
        ll = dc.reshape(loglam, (loglam.shape[0], 1))
        inv = dc.exp(-ll)
        return 0.5 * dc.tsum((dc.exp(2.0 * logb) + dc.square(eta)) * inv - 1.0 + ll - 2.0 * logb)
    ll = np.asarray(loglam)[:, None]
    return float(0.5 * np.sum((np.exp(2.0 * logb) + eta * eta) * np.exp(-ll) - 1.0 + ll - 2.0 * logb))
