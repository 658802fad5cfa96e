"""Random Fourier features for the ARD kernel."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from . import rng as rngmod
from .errors import ConfigurationError, ShapeError


@dataclass(frozen=True)
class SpectraMatrix:
    omega: np.ndarray  # d_l x M_l
    layer: int = 0

    @property
    def n_features(self):
        return self.omega.shape[1]


def sample_spectra(lambda_scales, M, seed, layer=0):
    """Draw M frequencies, column-wise i.i.d. N(0, diag(lambda_scales)).

    ``lambda_scales`` are variances (1 / gamma_i for an ARD kernel).
    """
    scales = np.atleast_1d(np.asarray(lambda_scales, dtype=np.float64))
    if np.any(~(scales > 0)):
        raise ConfigurationError("spectral scales must be positive")
    g = rngmod.keyed(seed, rngmod.TAG_SPECTRA, layer)
    z = g.standard_normal((scales.size, int(M)))
    return SpectraMatrix(np.sqrt(scales)[:, None] * z, layer)


def rff_map(h, spectra, alpha):
    """sqrt(alpha/M) [cos(w_1.h), sin(w_1.h), ..., cos(w_M.h), sin(w_M.h)].

    Works on plain arrays or tape tensors.  ``h`` may carry leading batch
    axes (..., d); ``spectra`` is a :class:`SpectraMatrix`, an array or a
    tensor of shape (..., d, M).  The result has shape (..., 2M).
    """
    omega = spectra.omega if isinstance(spectra, SpectraMatrix) else spectra
    tape = any(isinstance(v, dc.Tensor) for v in (h, omega, alpha))
    if not tape:
        h = np.asarray(h, dtype=np.float64)
        omega = np.asarray(omega, dtype=np.float64)
        if h.shape[-1] != omega.shape[-2]:
            raise ShapeError(f"input dim {h.shape[-1]} does not match spectra rows {omega.shape[-2]}")
        M = omega.shape[-1]
        z = np.matmul(h, omega)
        feats = np.stack([np.cos(z), np.sin(z)], axis=-1).reshape(z.shape[:-1] + (2 * M,))
        return np.sqrt(alpha / M) * feats
    h, omega, alpha = dc.const(h), dc.const(omega), dc.const(alpha)
    if h.shape[-1] != omega.shape[-2]:
        raise ShapeError(f"input dim {h.shape[-1]} does not match spectra rows {omega.shape[-2]}")
    M = omega.shape[-1]
    z = dc.matmul(h, omega)
    feats = dc.stack([dc.cos(z), dc.sin(z)], axis=-1)
    feats = dc.reshape(feats, z.shape[:-1] + (2 * M,))
    return dc.sqrt(alpha / float(M)) * feats
