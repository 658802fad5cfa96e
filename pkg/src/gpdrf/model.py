"""GP-DRF model: configuration, parameter bookkeeping and the sampled forward pass.

The GP-only and DRF-only baselines are the same object with the DRF stack
emptied (``kind="gp"``) or the GP layer removed (``kind="drf"``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from . import gp_layer
from . import rng as rngmod
from .drf import DrfLayerState, SpectraOption, reparam_spectra, reparam_weights, feed_forward
from .errors import ConfigurationError, ModelStateError
from .gp_layer import InducingState, PreparedInputs
from .kernels import DEFAULT_JITTER
from .likelihoods import LikelihoodSpec

MODEL_KINDS = ("gpdrf", "gp", "drf")


@dataclass
class ModelConfig:
    """Architecture.  ``widths`` is d_0..d_L and ``features`` is M_0..M_{L-1}."""

    kind: str = "gpdrf"
    widths: tuple = (2, 1)
    features: tuple = (16,)
    likelihood: str = "gaussian"
    n_classes: int = 1
    shared_kernel: bool = True
    jitter: float = DEFAULT_JITTER
    noise_var: float = 0.1
    fix_gp_noise: bool = False
    gp_init_scale: float = 0.1  # initial q(F̄) scale relative to the prior
    w_init_scale: float = 0.05  # initial posterior sd of the DRF weights

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        self.features = tuple(int(m) for m in self.features)
        self.validate()

    @property
    def n_layers(self):
        return len(self.features)

    @property
    def output_dim(self):
        return 1 if self.likelihood == "gaussian" else self.n_classes

    def validate(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigurationError(f"model kind must be one of {MODEL_KINDS}, got {self.kind!r}")
        if self.likelihood not in ("gaussian", "softmax"):
            raise ConfigurationError(f"unknown likelihood {self.likelihood!r}")
        if not self.widths or any(w < 1 for w in self.widths):
            raise ConfigurationError(f"widths must be positive, got {self.widths}")
        if any(m < 1 for m in self.features):
            raise ConfigurationError(f"feature counts must be positive, got {self.features}")
        if len(self.widths) != len(self.features) + 1:
            raise ConfigurationError(
                f"layer chain mismatch: {len(self.widths)} widths need {len(self.widths) - 1} feature counts, "
                f"got {len(self.features)}"
            )
        if self.widths[-1] != self.output_dim:
            raise ConfigurationError(
                f"layer chain mismatch: final width d_L={self.widths[-1]} but the {self.likelihood} "
                f"likelihood needs {self.output_dim}"
            )
        if self.kind == "gp" and self.n_layers:
            raise ConfigurationError("the gp baseline has no DRF layers")
        if self.kind == "drf" and not self.n_layers:
            raise ConfigurationError("the drf baseline needs at least one DRF layer")
        if self.jitter < 0:
            raise ConfigurationError("jitter must be non-negative")
        if self.gp_init_scale <= 0 or self.w_init_scale <= 0:
            raise ConfigurationError("initial scales must be positive")


@dataclass
class GPDRF:
    config: ModelConfig
    gp: InducingState  # None for the drf baseline
    layers: list
    likelihood: LikelihoodSpec
    option: SpectraOption = SpectraOption.VAR_FIXED
    standardizer: object = None
    classes: tuple = None
    input_kind: str = "vector"
    frozen_noise: dict = None  # {"seed", "samples"} of the VAR-FIXED training draws

    # -- parameters ----------------------------------------------------------------
    def parameters(self):
        """Name -> array references (updated in place by the optimizer)."""
        out = {}
        if self.gp is not None:
            for k, v in self.gp.param_arrays().items():
                out[f"gp.{k}"] = v
        for l, layer in enumerate(self.layers):
            for k, v in layer.param_arrays().items():
                out[f"drf.{l}.{k}"] = v
        for k, v in self.likelihood.param_arrays().items():
            out[f"lik.{k}"] = v
        return out

    def trainable_names(self):
        names = list(self.parameters())
        if self.option is SpectraOption.PRIOR_FIXED:
            names = [n for n in names if not (n.endswith(".omega_mean") or n.endswith(".omega_logscale"))]
        return names

    def leaves(self, names=None):
        params = self.parameters()
        names = self.trainable_names() if names is None else names
        return {n: dc.param(params[n], name=n) for n in names}

    def resolve(self, leaves=None):
        """Full name -> (tensor or array) map, leaves overriding stored arrays."""
        out = dict(self.parameters())
        if leaves:
            out.update(leaves)
        return out

    def set_parameters(self, values):
        params = self.parameters()
        for name, v in values.items():
            if name not in params:
                raise ConfigurationError(f"unknown parameter {name!r}")
            target = params[name]
            v = np.asarray(v, dtype=np.float64)
            if v.shape != target.shape:
                raise ConfigurationError(f"parameter {name!r} has shape {target.shape}, got {v.shape}")
            target[...] = v

    def check_finite(self):
        for name, v in self.parameters().items():
            if not np.all(np.isfinite(v)):
                raise ModelStateError(f"parameter {name!r} contains non-finite values")

    # -- inputs ----------------------------------------------------------------------
    def prepare(self, inputs):
        if self.gp is None:
            x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
            if x.shape[1] != self.config.widths[0]:
                raise ConfigurationError(f"input dim {x.shape[1]} does not match d_0={self.config.widths[0]}")
            return PreparedInputs("ard", x=x)
        return self.gp.prepare(inputs)

    # -- sampled forward pass ---------------------------------------------------------
    def layer_samples(self, params, noise):
        samples = []
        for l in range(len(self.layers)):
            lp = _group(params, f"drf.{l}.")
            W = reparam_weights(lp, noise["e"][l])
            omega = reparam_spectra(lp, noise["tau"][l], self.option)
            samples.append((W, omega))
        return samples

    def latent(self, params, prepared, eps, L=None):
        """F^(s) for the batch, (S, B, d0); constants for the drf baseline."""
        if self.gp is None:
            return dc.const(prepared.x)
        mean, var = gp_layer.moments_terms(self.gp, _group(params, "gp."), prepared, L)
        return gp_layer.sample_latent(mean, eps, var)

    def forward(self, params, prepared, noise, L=None):
        """Sampled outputs G(F^(s)) for every sample s and batch row, (S, B, d_L)."""
        F = self.latent(params, prepared, noise.get("eps"), L)
        layers = [_group(params, f"drf.{l}.") for l in range(len(self.layers))]
        return feed_forward(F, layers, self.layer_samples(params, noise))

    def noise_shapes(self, S, B):
        shapes = {"e": [(S,) + l.w_mean.shape for l in self.layers],
                  "tau": [(S,) + l.omega_mean.shape for l in self.layers]}
        if self.gp is not None:
            shapes["eps"] = (S, B, self.gp.n_latent)
        return shapes


def _group(params, prefix):
    return {k[len(prefix):]: v for k, v in params.items() if k.startswith(prefix)}


def build_model(config, inducing_inputs=None, kernel=None, seed=0, option=SpectraOption.VAR_FIXED,
                standardizer=None, classes=None, input_kind="vector"):
    """Fresh model; ``inducing_inputs`` and ``kernel`` are required unless ``kind='drf'``."""
    config.validate()
    option = SpectraOption.parse(option)
    if config.likelihood == "gaussian":
        lik = LikelihoodSpec.gaussian(config.noise_var)
    else:
        lik = LikelihoodSpec.softmax(config.n_classes)
    gp = None
    if config.kind != "drf":
        if inducing_inputs is None or kernel is None:
            raise ConfigurationError("the GP layer needs inducing inputs and a kernel")
        gp = InducingState.create(inducing_inputs, kernel, config.widths[0], config.shared_kernel, config.jitter,
                                  init_scale=config.gp_init_scale)
    elif input_kind != "vector":
        raise ConfigurationError("the drf baseline needs fixed-size vector inputs")
    g = rngmod.keyed(seed, rngmod.TAG_INIT)
    layers = [
        DrfLayerState.create(config.widths[l], config.widths[l + 1], config.features[l], g,
                             w_scale=config.w_init_scale)
        for l in range(config.n_layers)
    ]
    return GPDRF(config, gp, layers, lik, option, standardizer, classes, input_kind)
