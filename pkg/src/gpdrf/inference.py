"""Stochastic variational inference for GP-DRF.

The objective is the reparameterized Monte-Carlo ELBO

    (N / |B|) * sum_{n in B} (1/S) sum_s log P(y_n | G(F_n^(s); W^(s), Omega^(s)))
        - KL(q(F̄) || p(F̄)) - sum_l KL(q(W^l) || p(W^l)) - sum_l KL(q(Omega^l) || p(Omega^l | Lambda^l)),

with the spectra KL dropped under PRIOR-FIXED.  Training ascends it with Adam
after subtracting an L2 penalty on every trainable array.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import diffcore as dc
from . import gp_layer
from . import rng as rngmod
from .data import batch_iter
from .drf import SpectraOption, kl_spectra, kl_weights
from .errors import ConfigurationError, TrainingDivergenceError
from .kernels import gram
from .likelihoods import LOG_2PI, log_likelihood
from .model import _group
from .optim import DEFAULT_L2, DEFAULT_LEARNING_RATE, AdamState, adam_step, l2_penalty

log = logging.getLogger(__name__)

INDUCING_STRATEGIES = ("random", "kernel-medoids")
MEDOID_SWEEPS = 20
MEDOID_MAX_POINTS = 4000


@dataclass
class TrainConfig:
    epochs: int = 1000
    learning_rate: float = DEFAULT_LEARNING_RATE
    batch_size: int = 1
    samples: int = 100
    eval_draws: int = 100
    option: SpectraOption = SpectraOption.VAR_FIXED
    seed: int = 0
    l2: float = DEFAULT_L2
    n_inducing: int = 200
    inducing_strategy: str = "kernel-medoids"

    def __post_init__(self):
        self.option = SpectraOption.parse(self.option)
        if self.samples < 1:
            raise ConfigurationError("samples S must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch size must be >= 1")
        if self.epochs < 0:
            raise ConfigurationError("epochs must be >= 0")
        if self.learning_rate < 0:
            raise ConfigurationError("learning rate must be >= 0")
        if self.l2 < 0:
            raise ConfigurationError("L2 coefficient must be >= 0")
        if self.inducing_strategy not in INDUCING_STRATEGIES:
            raise ConfigurationError(f"inducing strategy must be one of {INDUCING_STRATEGIES}")


class Batch(NamedTuple):
    prepared: object
    targets: np.ndarray
    n_total: int


@dataclass
class NoiseBank:
    """Standard-normal draws for e (weights), tau (spectra) and eps (GP layer).

    Under VAR-FIXED, e and tau are drawn once and reused every step.  The GP
    noise eps is indexed by datum, so it is redrawn per batch unless
    ``fix_gp_noise`` is set, in which case one (S, N, d0) table is drawn once
    and rows are looked up by data index.  Under VAR-RESAMPLED and
    PRIOR-FIXED everything is redrawn every step.
    """

    seed: int
    option: SpectraOption
    samples: int
    fix_gp_noise: bool = False
    n_data: int = None
    _fixed: dict = field(default=None, repr=False)

    def draw(self, model, epoch, step, batch_idx):
        S, B = self.samples, len(batch_idx)
        shapes = model.noise_shapes(S, B)
        fixed = self.option is SpectraOption.VAR_FIXED
        out = {}
        if fixed:
            if self._fixed is None:
                self._fixed = {
                    "e": [rngmod.keyed(self.seed, rngmod.TAG_W, l).standard_normal(s) for l, s in enumerate(shapes["e"])],
                    "tau": [rngmod.keyed(self.seed, rngmod.TAG_OMEGA, l).standard_normal(s)
                            for l, s in enumerate(shapes["tau"])],
                }
            out["e"], out["tau"] = self._fixed["e"], self._fixed["tau"]
        else:
            out["e"] = [rngmod.keyed(self.seed, rngmod.TAG_W, l, epoch, step).standard_normal(s)
                        for l, s in enumerate(shapes["e"])]
            out["tau"] = [rngmod.keyed(self.seed, rngmod.TAG_OMEGA, l, epoch, step).standard_normal(s)
                          for l, s in enumerate(shapes["tau"])]
        if "eps" in shapes:
            if fixed and self.fix_gp_noise:
                if "eps" not in self._fixed:
                    d0 = shapes["eps"][-1]
                    self._fixed["eps"] = rngmod.keyed(self.seed, rngmod.TAG_EPS).standard_normal((S, self.n_data, d0))
                out["eps"] = self._fixed["eps"][:, batch_idx, :]
            else:
                out["eps"] = rngmod.keyed(self.seed, rngmod.TAG_EPS, epoch, step).standard_normal(shapes["eps"])
        return out


def fixed_layer_noise(model, seed, samples):
    """The e and tau draws a VAR-FIXED run with this seed and S keeps for its whole optimization."""
    bank = NoiseBank(seed, SpectraOption.VAR_FIXED, samples)
    noise = bank.draw(model, 0, 0, np.arange(1))
    return noise["e"], noise["tau"]


def frozen_noise(model, samples, batch_size, seed=0):
    """One fixed noise draw, handy for deterministic ELBO evaluations."""
    bank = NoiseBank(seed, SpectraOption.VAR_RESAMPLED, samples)
    return bank.draw(model, 0, 0, np.arange(batch_size))


def elbo_parts(batch, model, noise, params=None):
    """Tape scalars for the data term and each KL term."""
    params = model.resolve(params)
    L = None
    parts = {}
    if model.gp is not None:
        L = gp_layer.inducing_factor(model.gp, _group(params, "gp."))
        parts["kl_inducing"] = gp_layer.kl_terms(model.gp, _group(params, "gp."), L)
    else:
        parts["kl_inducing"] = dc.Tensor(0.0)
    out = model.forward(params, batch.prepared, noise, L)
    ll = log_likelihood(batch.targets, out, model.likelihood, _group(params, "lik."))
    S = out.shape[0]
    B = len(batch.targets)
    parts["expected_loglik"] = dc.tsum(ll) * (float(batch.n_total) / (B * S))
    kw = dc.Tensor(0.0)
    ko = dc.Tensor(0.0)
    for l in range(len(model.layers)):
        lp = {k: dc.const(v) for k, v in _group(params, f"drf.{l}.").items()}
        kw = kw + kl_weights(lp)
        if model.option is not SpectraOption.PRIOR_FIXED:
            ko = ko + kl_spectra(lp)
    parts["kl_weights"] = kw
    parts["kl_spectra"] = ko
    return parts


def elbo_estimate(batch, model, noise, params=None):
    """Unbiased mini-batch ELBO estimate as a tape scalar."""
    p = elbo_parts(batch, model, noise, params)
    return p["expected_loglik"] - p["kl_inducing"] - p["kl_weights"] - p["kl_spectra"]


@dataclass
class TrainResult:
    model: object
    trace: list  # per-epoch mean ELBO
    step_trace: list


def train(dataset, model, config, callback=None):
    """Maximize the ELBO minus the L2 penalty with Adam.

    Runs ``epochs * ceil(N / batch_size)`` steps.  Each step draws a uniform
    batch, refreshes the noise per the spectra option, and applies one Adam
    update.  Deterministic given ``config.seed``.
    """
    model.option = config.option
    prepared_all = model.prepare(dataset.inputs)
    targets = np.asarray(dataset.targets)
    N = len(targets)
    if model.gp is not None and model.gp.n_inducing > N:
        raise ConfigurationError(f"{model.gp.n_inducing} inducing points for {N} data points")
    bank = NoiseBank(config.seed, config.option, config.samples, model.config.fix_gp_noise, N)
    model.frozen_noise = None
    if config.option is SpectraOption.VAR_FIXED:
        model.frozen_noise = {"seed": config.seed, "samples": config.samples}
    adam = AdamState(learning_rate=config.learning_rate)
    params = model.parameters()
    trace, step_trace = [], []
    global_step = 0
    for epoch in range(config.epochs):
        epoch_vals = []
        for step, idx in batch_iter(N, config.batch_size, config.seed, epoch):
            noise = bank.draw(model, epoch, step, idx)
            batch = Batch(prepared_all.take(idx), targets[idx], N)
            leaves = model.leaves()
            try:
                elbo = elbo_estimate(batch, model, noise, leaves)
            except ArithmeticError as exc:
                raise type(exc)(f"step {global_step} (epoch {epoch}): {exc}") from exc
            value = float(elbo.value)
            if not math.isfinite(value):
                raise TrainingDivergenceError(f"ELBO became non-finite at step {global_step}", step=global_step)
            loss = l2_penalty(leaves, config.l2) - elbo
            grads = dc.grad(loss, leaves)
            try:
                adam_step(params, grads, adam)
            except TrainingDivergenceError as exc:
                raise TrainingDivergenceError(f"step {global_step}: {exc}", exc.parameter, global_step) from exc
            epoch_vals.append(value)
            step_trace.append(value)
            global_step += 1
        trace.append(float(np.mean(epoch_vals)))
        log.debug("epoch %d elbo %.6g", epoch, trace[-1])
        if callback is not None:
            callback(epoch, trace[-1])
    return TrainResult(model, trace, step_trace)


# -- inducing points -------------------------------------------------------------

def kernel_distances(X, kernel):
    K = gram(X, None, kernel, jitter=0.0).entries
    d = np.diag(K)
    return np.sqrt(np.maximum(d[:, None] + d[None, :] - 2.0 * K, 0.0))


def k_medoids(D, M, seed, sweeps=MEDOID_SWEEPS):
    """Medoid indices for a precomputed distance matrix (++ seeding, then alternating refinement)."""
    n = D.shape[0]
    g = rngmod.keyed(seed, rngmod.TAG_INDUCING)
    medoids = [int(g.integers(n))]
    closest = D[medoids[0]].copy()
    for _ in range(1, M):
        w = closest ** 2
        total = w.sum()
        if total <= 0:
            rest = np.setdiff1d(np.arange(n), medoids)
            nxt = int(g.choice(rest))
        else:
            nxt = int(g.choice(n, p=w / total))
        medoids.append(nxt)
        closest = np.minimum(closest, D[nxt])
    medoids = np.array(medoids)
    for _ in range(sweeps):
        assign = np.argmin(D[:, medoids], axis=1)
        assign[medoids] = np.arange(M)
        new = medoids.copy()
        for c in range(M):
            members = np.flatnonzero(assign == c)
            cost = D[np.ix_(members, members)].sum(axis=1)
            new[c] = members[np.argmin(cost)]
        if np.array_equal(new, medoids):
            break
        medoids = new
    return np.sort(medoids)


def select_inducing(X, M, strategy, kernel, seed):
    """Pick M pseudo inputs from X, uniformly at random or as kernel k-medoids.

    Medoids use the kernel-induced distance sqrt(k(x,x) + k(x',x') - 2 k(x,x')),
    so sequences work as well as vectors.  Above ``MEDOID_MAX_POINTS``
    inputs the medoids are searched on a seeded random subset.
    """
    N = len(X)
    if M > N:
        raise ConfigurationError(f"cannot select {M} inducing points from {N} inputs")
    if M < 1:
        raise ConfigurationError("need at least one inducing point")
    if strategy not in INDUCING_STRATEGIES:
        raise ConfigurationError(f"inducing strategy must be one of {INDUCING_STRATEGIES}")
    is_seq = not isinstance(X, np.ndarray)

    def pick(idx):
        return [X[i] for i in idx] if is_seq else np.asarray(X)[idx]

    if M == N:
        return pick(np.arange(N))
    if strategy == "random":
        return pick(np.sort(rngmod.keyed(seed, rngmod.TAG_INDUCING).choice(N, M, replace=False)))
    pool = np.arange(N)
    if N > MEDOID_MAX_POINTS:
        pool = np.sort(rngmod.keyed(seed, rngmod.TAG_INDUCING, 1).choice(N, MEDOID_MAX_POINTS, replace=False))
    D = kernel_distances(pick(pool), kernel)
    return pick(pool[k_medoids(D, M, seed)])


# -- closed forms for the GP-only Gaussian case -----------------------------------

def gp_log_evidence(X, y, kernel, noise_var):
    """log N(y; 0, K + noise_var I), the exact GP regression evidence."""
    K = gram(X, None, kernel, jitter=0.0).entries + noise_var * np.eye(len(y))
    L = np.linalg.cholesky(K)
    a = np.linalg.solve(L, np.asarray(y, dtype=np.float64))
    return float(-0.5 * a @ a - np.log(np.diag(L)).sum() - 0.5 * len(y) * LOG_2PI)


def exact_gp_elbo(model, dataset):
    """ELBO without Monte-Carlo error for an L=0 model with a Gaussian likelihood.

    E_q[log N(y; f, s2)] = log N(y; a, s2) - b / (2 s2).
    """
    if model.layers or model.likelihood.kind != "gaussian" or model.gp is None:
        raise ConfigurationError("exact ELBO is only available for the gp baseline with a Gaussian likelihood")
    mom = gp_layer.marginal_moments(dataset.inputs, model.gp)
    s2 = float(np.exp(model.likelihood.log_noise))
    y = np.asarray(dataset.targets, dtype=np.float64)
    a, b = mom.mean[:, 0], mom.var[:, 0]
    ell = -0.5 * LOG_2PI - 0.5 * np.log(s2) - 0.5 * (y - a) ** 2 / s2 - 0.5 * b / s2
    return float(ell.sum() - gp_layer.kl_inducing(model.gp))
