"""Exact GP input layer with an inducing-point variational posterior.

Each of the ``d0`` latent functions has a full-covariance Gaussian over its
values at the pseudo inputs, q(F̄_j) = N(mu_j, S_j S_j^T), stored as a mean,
a strictly-lower factor part and a log-diagonal.  Kernel hyperparameters are
shared across the latent functions unless ``shared_kernel=False``.

With ``whiten=True`` (the default) the stored mean and factor are u and V
with mu = L u and S = L V, where L L^T = K̄.  This is the same family of
posteriors; it only changes the coordinates the optimizer moves in, which
matters because K̄ is close to singular for dense pseudo inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .errors import ConfigurationError, NotPositiveDefiniteError, NumericalError, ShapeError
from .kernels import (
    DEFAULT_JITTER,
    ArdKernel,
    SpectrumKernel,
    gram,
    psd_factor,
    spectrum_base,
    spectrum_base_diag,
)

# tolerated round-off below zero in a marginal variance, relative to k(x, x)
VARIANCE_FLOOR_RTOL = 1e-10


@dataclass
class MarginalMoments:
    mean: np.ndarray  # (d0,) or (B, d0)
    var: np.ndarray


@dataclass
class PreparedInputs:
    """Kernel-ready constants for a set of inputs against the pseudo inputs."""

    kind: str
    x: np.ndarray = None  # ARD: (B, d)
    cross_base: np.ndarray = None  # spectrum: (B, M)
    diag_base: np.ndarray = None  # spectrum: (B,)

    def __len__(self):
        return len(self.x) if self.kind == "ard" else len(self.diag_base)

    def take(self, idx):
        if self.kind == "ard":
            return PreparedInputs("ard", x=self.x[idx])
        return PreparedInputs("spectrum", cross_base=self.cross_base[idx], diag_base=self.diag_base[idx])


@dataclass
class InducingState:
    pseudo_inputs: object  # (M, d) array or list of M sequences
    kernel: object  # ArdKernel or SpectrumKernel (structure + initial values)
    mu: np.ndarray  # (M, d0)
    sigma_offdiag: np.ndarray  # (d0, M, M); only the strict lower triangle is used
    sigma_logdiag: np.ndarray  # (d0, M)
    log_alpha: np.ndarray  # (J,)
    log_gamma: np.ndarray = None  # (J, d) for ARD
    log_sigma: np.ndarray = None  # (J,) spectrum bandwidth
    jitter: float = DEFAULT_JITTER
    whiten: bool = True
    _inducing_base: np.ndarray = field(default=None, repr=False)

    @classmethod
    def create(cls, pseudo_inputs, kernel, n_latent, shared_kernel=True, jitter=DEFAULT_JITTER, init="prior",
               whiten=True, init_scale=1.0):
        """Fresh state with mu = 0 and Sigma = init_scale^2 K̄ (``init="prior"``) or Sigma = I.

        ``init_scale=1`` starts exactly at the prior (zero KL).  A smaller
        scale starts with nearly deterministic latent values, which helps
        the layers above learn before the GP posterior widens.
        """
        if init_scale <= 0:
            raise ConfigurationError("init_scale must be positive")
        if init not in ("prior", "identity"):
            raise ConfigurationError(f"unknown covariance init {init!r}")
        M = len(pseudo_inputs)
        J = 1 if shared_kernel else n_latent
        if kernel.kind == "ard":
            pseudo_inputs = np.atleast_2d(np.asarray(pseudo_inputs, dtype=np.float64))
            if pseudo_inputs.shape[1] != kernel.dim:
                raise ShapeError(f"pseudo inputs have dim {pseudo_inputs.shape[1]}, kernel expects {kernel.dim}")
            log_gamma = np.tile(np.log(np.asarray(kernel.gamma)), (J, 1))
            log_sigma = None
        else:
            if not kernel.normalize:
                raise ConfigurationError("the GP layer needs the normalized spectrum kernel")
            pseudo_inputs = list(pseudo_inputs)
            log_gamma = None
            log_sigma = None if kernel.sigma is None else np.full(J, np.log(kernel.sigma))
        state = cls(
            pseudo_inputs=pseudo_inputs,
            kernel=kernel,
            mu=np.zeros((M, n_latent)),
            sigma_offdiag=np.zeros((n_latent, M, M)),
            sigma_logdiag=np.zeros((n_latent, M)),
            log_alpha=np.full(J, np.log(kernel.alpha)),
            log_gamma=log_gamma,
            log_sigma=log_sigma,
            jitter=jitter,
            whiten=whiten,
        )
        if init == "prior" and not whiten:
            for j in range(n_latent):
                kern = state.current_kernel(j)
                L = psd_factor(gram(state.pseudo_inputs, None, kern, jitter=jitter * kern.alpha).entries)
                state.sigma_offdiag[j] = np.tril(L, -1)
                state.sigma_logdiag[j] = np.log(np.diag(L)) + np.log(init_scale)
        elif init == "prior":
            state.sigma_logdiag[...] = np.log(init_scale)
        elif init == "identity" and whiten:
            state.set_posterior(state.mu, np.tile(np.eye(M), (n_latent, 1, 1)))
        return state

    @property
    def n_inducing(self):
        return self.mu.shape[0]

    @property
    def n_latent(self):
        return self.mu.shape[1]

    @property
    def n_kernels(self):
        return self.log_alpha.shape[0]

    def param_arrays(self):
        out = {
            "mu": self.mu,
            "sigma_offdiag": self.sigma_offdiag,
            "sigma_logdiag": self.sigma_logdiag,
            "log_alpha": self.log_alpha,
        }
        if self.kernel.kind == "ard":
            out["log_gamma"] = self.log_gamma
        elif self.log_sigma is not None:
            out["log_sigma"] = self.log_sigma
        return out

    def inducing_base(self):
        if self.kernel.kind != "spectrum":
            return None
        if self._inducing_base is None:
            K = spectrum_base(self.pseudo_inputs, None, self.kernel)
            self._inducing_base = (0.5 * (K + K.T), spectrum_base_diag(self.pseudo_inputs, self.kernel))
        return self._inducing_base

    def prepare(self, inputs):
        if self.kernel.kind == "ard":
            x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
            if x.shape[1] != self.pseudo_inputs.shape[1]:
                raise ShapeError(f"input dim {x.shape[1]} does not match kernel dim {self.pseudo_inputs.shape[1]}")
            return PreparedInputs("ard", x=x)
        inputs = list(inputs)
        return PreparedInputs(
            "spectrum",
            cross_base=spectrum_base(inputs, self.pseudo_inputs, self.kernel),
            diag_base=spectrum_base_diag(inputs, self.kernel),
        )

    def posterior(self):
        """(mu (M, d0), Sigma (d0, M, M)) of q(F̄) in function-value coordinates."""
        S = sigma_factor(self.param_arrays()).value
        mu = self.mu
        if self.whiten:
            L = inducing_factor(self, self.param_arrays()).value
            L = np.broadcast_to(L, S.shape)
            mu = np.einsum("jmk,kj->mj", L, mu)
            S = L @ S
        return mu.copy(), S @ np.swapaxes(S, -1, -2)

    def set_posterior(self, mu, Sigma):
        """Store q(F̄) = N(mu, Sigma) given in function-value coordinates."""
        mu = np.asarray(mu, dtype=np.float64).reshape(self.mu.shape)
        Sigma = np.asarray(Sigma, dtype=np.float64).reshape(self.sigma_offdiag.shape)
        S = np.linalg.cholesky(Sigma)
        if self.whiten:
            L = np.broadcast_to(inducing_factor(self, self.param_arrays()).value, S.shape)
            S = np.stack([np.linalg.solve(L[j], S[j]) for j in range(len(S))])
            mu = np.stack([np.linalg.solve(L[j], mu[:, j]) for j in range(len(S))], axis=1)
            # V = L^{-1} S_chol is lower triangular up to round-off with a positive diagonal
            S = np.tril(S)
        self.mu[...] = mu
        self.sigma_offdiag[...] = np.tril(S, -1)
        self.sigma_logdiag[...] = np.log(np.diagonal(S, axis1=-2, axis2=-1))

    def current_kernel(self, j=0):
        """The kernel for latent dimension ``j`` at the current hyperparameters."""
        jj = 0 if self.n_kernels == 1 else j
        alpha = float(np.exp(self.log_alpha[jj]))
        if self.kernel.kind == "ard":
            return ArdKernel(alpha=alpha, gamma=tuple(np.exp(self.log_gamma[jj])))
        k = self.kernel
        sigma = None if self.log_sigma is None else float(np.exp(self.log_sigma[jj]))
        return SpectrumKernel(k=k.k, m=k.m, alphabet=k.alphabet, alpha=alpha, normalize=k.normalize, sigma=sigma)


# -- tape-level building blocks ---------------------------------------------------

def _p(params, name):
    return dc.const(params[name])


def _ard_sqdist(x, z, log_gamma):
    """Scaled squared distances, (J, B, M)."""
    inv_len = dc.exp(-0.5 * log_gamma)  # J x d
    xs = dc.mul(x[None, :, :], dc.reshape(inv_len, (inv_len.shape[0], 1, inv_len.shape[1])))
    zs = dc.mul(z[None, :, :], dc.reshape(inv_len, (inv_len.shape[0], 1, inv_len.shape[1])))
    xx = dc.tsum(dc.square(xs), axis=-1, keepdims=True)  # J x B x 1
    zz = dc.reshape(dc.tsum(dc.square(zs), axis=-1), (zs.shape[0], 1, zs.shape[1]))  # J x 1 x M
    return xx + zz - 2.0 * dc.matmul(xs, dc.swap_last(zs))


def _col(v):
    return dc.reshape(v, (v.shape[0], 1, 1))


def inducing_gram(state, params):
    """K̄ with jitter * alpha on the diagonal, (J, M, M)."""
    log_alpha = _p(params, "log_alpha")
    alpha = _col(dc.exp(log_alpha))
    M = state.n_inducing
    eye = np.eye(M) * state.jitter
    if state.kernel.kind == "ard":
        z = state.pseudo_inputs
        sq = _ard_sqdist(z, z, _p(params, "log_gamma"))
        base = dc.exp(-0.5 * sq)
    else:
        base0, valid = state.inducing_base()
        if "log_sigma" in params:
            inv_sigma = _col(dc.exp(-_p(params, "log_sigma")))
            base = dc.exp((base0[None] - 1.0) * inv_sigma) * np.outer(valid, valid)
        else:
            base = dc.const(base0[None])
    K = alpha * (base + eye)
    return 0.5 * (K + dc.swap_last(K))


def cross_terms(state, params, prepared):
    """k̄(x_n) as (J, B, M) and k(x_n, x_n) as (J, B)."""
    log_alpha = _p(params, "log_alpha")
    alpha = _col(dc.exp(log_alpha))
    B = len(prepared)
    if state.kernel.kind == "ard":
        sq = _ard_sqdist(prepared.x, state.pseudo_inputs, _p(params, "log_gamma"))
        cross = alpha * dc.exp(-0.5 * dc.clamp_min(sq, 0.0))
        diag = dc.broadcast_to(dc.reshape(dc.exp(log_alpha), (-1, 1)), (state.n_kernels, B))
    else:
        if "log_sigma" in params:
            inv_sigma = _col(dc.exp(-_p(params, "log_sigma")))
            mask = np.outer(prepared.diag_base, state.inducing_base()[1])
            cross = alpha * dc.exp((prepared.cross_base[None] - 1.0) * inv_sigma) * mask
        else:
            cross = alpha * prepared.cross_base[None]
        # k(x, x) = alpha for any sequence of length >= k, else 0
        diag = dc.reshape(alpha, (-1, 1)) * prepared.diag_base[None]
    return cross, diag


def sigma_factor(params):
    """Lower-triangular S_j with positive diagonal, (d0, M, M)."""
    off = _p(params, "sigma_offdiag")
    logd = _p(params, "sigma_logdiag")
    M = logd.shape[-1]
    strict = np.tril(np.ones((M, M)), -1)
    diag = dc.reshape(dc.exp(logd), logd.shape + (1,)) * np.eye(M)
    return off * strict + diag


def inducing_factor(state, params):
    K = inducing_gram(state, params)
    try:
        return dc.cholesky(K)
    except NotPositiveDefiniteError:
        bad = 0
        for j, Kj in enumerate(K.value):
            try:
                np.linalg.cholesky(Kj)
            except np.linalg.LinAlgError:
                bad = j
                break
        raise NotPositiveDefiniteError(
            f"inducing Gram matrix for latent dimension {bad} is not positive definite; increase the jitter"
        ) from None


def moments_terms(state, params, prepared, L=None):
    """Tape tensors (a, b), each (B, d0), for q(F_n) = N(a_n, diag(b_n))."""
    if L is None:
        L = inducing_factor(state, params)
    cross, diag = cross_terms(state, params, prepared)
    kT = dc.swap_last(cross)  # J x M x B
    A = dc.solve_triangular(L, kT)  # L^{-1} k̄
    # whitened coordinates project with L^{-1} k̄, plain ones with K̄^{-1} k̄
    Z = A if state.whiten else dc.solve_triangular_t(L, A)
    mu = _p(params, "mu")  # M x d0
    d0 = mu.shape[1]
    muT = dc.reshape(dc.transpose(mu), (d0, mu.shape[0], 1))
    mean = dc.transpose(dc.tsum(Z * muT, axis=1))  # B x d0
    quad = dc.tsum(dc.square(A), axis=1)  # J x B
    S = sigma_factor(params)
    SZ = dc.matmul(dc.swap_last(S), Z)  # d0 x M x B
    corr = dc.tsum(dc.square(SZ), axis=1)  # d0 x B
    var = diag - quad + corr  # d0 x B
    lowest = np.min(var.value / np.maximum(np.broadcast_to(diag.value, var.shape), 1e-300)) if var.size else 0.0
    if lowest < -VARIANCE_FLOOR_RTOL:
        j = int(np.unravel_index(np.argmin(var.value), var.shape)[0])
        raise NumericalError(
            f"marginal variance of latent dimension {j} is negative beyond round-off ({lowest:.3g} relative)"
        )
    return mean, dc.transpose(dc.clamp_min(var, 0.0))


def kl_terms(state, params, L=None):
    """Sum over j of KL(N(mu_j, S_j S_j^T) || N(0, K̄_j)) as a tape scalar."""
    if state.whiten:
        u = _p(params, "mu")
        V = sigma_factor(params)
        M, d0 = u.shape
        return 0.5 * (dc.tsum(dc.square(V)) + dc.tsum(dc.square(u)) - float(M * d0)
                      - 2.0 * dc.tsum(_p(params, "sigma_logdiag")))
    if L is None:
        L = inducing_factor(state, params)
    mu = _p(params, "mu")
    M, d0 = mu.shape
    S = sigma_factor(params)
    LS = dc.solve_triangular(L, S)  # d0 x M x M
    trace = dc.tsum(dc.square(LS))
    muT = dc.reshape(dc.transpose(mu), (d0, M, 1))
    Lmu = dc.solve_triangular(L, muT)
    maha = dc.tsum(dc.square(Lmu))
    logdet_K = 2.0 * dc.tsum(dc.log(dc.diagonal(L)))
    if L.shape[0] == 1:
        logdet_K = logdet_K * float(d0)
    logdet_S = 2.0 * dc.tsum(_p(params, "sigma_logdiag"))
    return 0.5 * (trace + maha - float(M * d0) + logdet_K - logdet_S)


# -- array-level API -------------------------------------------------------------

def gp_prior_logdensity(F_cols, grams):
    """sum_j log N(F^j; 0, K_j) for an (N, d0) matrix and one Gram per column."""
    F = np.atleast_2d(np.asarray(F_cols, dtype=np.float64))
    if F.shape[1] != len(grams):
        raise ShapeError(f"{F.shape[1]} columns but {len(grams)} Gram matrices")
    total = 0.0
    for j, G in enumerate(grams):
        K = G.entries if hasattr(G, "entries") else np.asarray(G)
        try:
            L = np.linalg.cholesky(K)
        except np.linalg.LinAlgError:
            raise NotPositiveDefiniteError(f"prior Gram for dimension {j} is not positive definite") from None
        alpha = np.linalg.solve(L, F[:, j])
        total += -0.5 * alpha @ alpha - np.log(np.diag(L)).sum() - 0.5 * len(K) * np.log(2 * np.pi)
    return float(total)


def marginal_moments(x_n, state):
    """q(F_n) moments at one input (or a batch when given a 2-D array / list of sequences)."""
    single = (state.kernel.kind == "ard" and np.ndim(x_n) == 1) or isinstance(x_n, str)
    prepared = state.prepare([x_n] if single else x_n)
    mean, var = moments_terms(state, state.param_arrays(), prepared)
    if single:
        return MarginalMoments(mean.value[0], var.value[0])
    return MarginalMoments(mean.value, var.value)


def sample_latent(moments_or_mean, epsilon, var=None):
    """F = a + sqrt(b) * eps.

    Accepts a :class:`MarginalMoments` or explicit ``(mean, epsilon, var)``;
    tensors keep the result on the tape (no gradient flows to ``epsilon``).
    """
    if isinstance(moments_or_mean, MarginalMoments):
        mean, var = moments_or_mean.mean, moments_or_mean.var
    else:
        mean = moments_or_mean
    if isinstance(mean, dc.Tensor) or isinstance(var, dc.Tensor):
        return dc.const(mean) + dc.sqrt(dc.const(var)) * np.asarray(epsilon)
    return np.asarray(mean) + np.sqrt(np.asarray(var)) * np.asarray(epsilon)


def kl_inducing(state):
    return float(kl_terms(state, state.param_arrays()).value)
