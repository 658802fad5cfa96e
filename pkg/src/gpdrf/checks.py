"""Fast verification battery run by ``gpdrf check``."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import gp_layer, oracles
from .drf import SpectraOption, kl_spectra, kl_weights
from .inference import Batch, elbo_estimate, frozen_noise
from .kernels import ArdKernel, ard_matrix
from .model import ModelConfig, build_model
from .random_features import rff_map, sample_spectra
from . import diffcore as dc


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def tiny_model(seed=0, option=SpectraOption.VAR_FIXED, n=6, n_inducing=3, widths=(2, 3, 1), features=(4, 4),
               samples=3):
    """Small GP-DRF at a generic (non-initial) parameter point, with a batch and frozen noise."""
    g = np.random.default_rng(seed)
    X = g.standard_normal((n, 2))
    y = g.standard_normal(n)
    cfg = ModelConfig(widths=widths, features=features, noise_var=0.3)
    model = build_model(cfg, X[:n_inducing], ArdKernel(1.2, (0.8, 1.5)), seed=seed, option=option)
    for name, v in model.parameters().items():
        v += 0.2 * g.standard_normal(v.shape)
    batch = Batch(model.prepare(X), y, n)
    noise = frozen_noise(model, samples, n, seed=seed)
    return model, batch, noise


def gradient_errors(model, batch, noise, step=1e-5):
    """Relative error between tape and central-difference ELBO gradients, per parameter array."""
    leaves = model.leaves()
    grads = dc.grad(elbo_estimate(batch, model, noise, leaves), leaves)
    arrays = {k: model.parameters()[k] for k in leaves}
    fd = oracles.fd_gradient(lambda: float(elbo_estimate(batch, model, noise).value), arrays, step)
    return {k: oracles.relative_error(grads[k], fd[k]) for k in leaves}


def rff_errors(n_features, n_pairs=20, dim=5, seed=0):
    g = np.random.default_rng(seed)
    kern = ArdKernel(1.0, (1.0,) * dim)
    spectra = sample_spectra(np.ones(dim), n_features, seed)
    x, x2 = g.standard_normal((n_pairs, dim)), g.standard_normal((n_pairs, dim))
    approx = (rff_map(x, spectra, 1.0) * rff_map(x2, spectra, 1.0)).sum(axis=1)
    exact = np.array([ard_matrix(a[None], b[None], kern)[0, 0] for a, b in zip(x, x2)])
    return np.abs(approx - exact)


def _check_rff(n_features):
    err = rff_errors(n_features)
    # the estimate averages M terms bounded by 1, so its sd is below 1 / sqrt(M)
    tol = 4.0 / np.sqrt(n_features)
    return CheckResult("rff-vs-kernel", bool(err.max() <= tol),
                       f"max |phi.phi' - k| = {err.max():.4f} over 20 pairs, M={n_features}, tol {tol:.4f}")


def _check_gradients():
    model, batch, noise = tiny_model()
    errs = gradient_errors(model, batch, noise)
    worst = max(errs, key=errs.get)
    return CheckResult("gradient-vs-finite-difference", errs[worst] <= 1e-4,
                       f"worst relative error {errs[worst]:.2e} ({worst}) over {len(errs)} arrays")


def _check_kl(seed=0):
    g = np.random.default_rng(seed)
    values = []
    for _ in range(10):
        model, _, _ = tiny_model(seed=int(g.integers(1 << 30)))
        values.append(gp_layer.kl_inducing(model.gp))
        for layer in model.layers:
            values.append(kl_weights(layer))
            values.append(kl_spectra(layer))
    return CheckResult("kl-non-negative", min(values) >= 0.0, f"min over {len(values)} KL values = {min(values):.3g}")


def _check_conditioning(seed=0):
    g = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(5):
        M = int(g.integers(1, 5))
        Z = g.standard_normal((M, 2))
        x = g.standard_normal(2)
        kern = ArdKernel(float(g.uniform(0.5, 2)), tuple(g.uniform(0.5, 2, 2)))
        state = gp_layer.InducingState.create(Z, kern, 1, whiten=False)
        A = g.standard_normal((M, M))
        Sigma = A @ A.T + 0.1 * np.eye(M)
        state.set_posterior(g.standard_normal((M, 1)), Sigma[None])
        mom = gp_layer.marginal_moments(x, state)
        P = np.vstack([Z, x[None]])
        K = ard_matrix(P, P, kern)
        K[np.arange(M), np.arange(M)] += state.jitter * kern.alpha
        mean, var = oracles.conditioned_moments(K, state.mu[:, 0], Sigma)
        worst = max(worst, abs(mean - mom.mean[0]), abs(var - mom.var[0]))
    return CheckResult("conditioning-oracle", worst <= 1e-8, f"max deviation {worst:.2e}")


def run_checks(n_features=4096):
    out = []
    for fn, args in ((_check_rff, (n_features,)), (_check_gradients, ()), (_check_kl, ()), (_check_conditioning, ())):
        t = time.perf_counter()
        res = fn(*args)
        res.detail += f" [{time.perf_counter() - t:.2f}s]"
        out.append(res)
    return out
