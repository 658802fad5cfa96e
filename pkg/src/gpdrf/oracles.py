"""Slow, independent reference computations used by the check battery and tests.

Nothing here reuses the code paths it is meant to verify: gradients come
from central differences, conditioning goes through the joint precision
matrix, KL divergences from Monte-Carlo log-density ratios via scipy, and
the spectrum kernel from an explicit enumeration of k-mers.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy import stats


def fd_gradient(fn, arrays, step=1e-5):
    """Central-difference gradient of scalar ``fn()`` w.r.t. every entry of the arrays (mutated in place)."""
    out = {}
    for name, a in arrays.items():
        g = np.zeros_like(a)
        flat = a.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + step
            up = fn()
            flat[i] = old - step
            down = fn()
            flat[i] = old
            gflat[i] = (up - down) / (2.0 * step)
        out[name] = g
    return out


def relative_error(a, b):
    """||a - b|| / max(||a||, ||b||), 0 when both vanish."""
    den = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if den == 0 else float(np.linalg.norm(a - b) / den)


def conditioned_moments(K_joint, mu, Sigma):
    """q(f) for the last variable of a joint prior whose leading block is the inducing set.

    p(f | F̄) is read off the joint precision P: var = 1 / P_ff and
    mean = -P_fF̄ F̄ / P_ff.  Integrating against q(F̄) = N(mu, Sigma) gives
    mean A mu and variance 1 / P_ff + A Sigma A^T with A = -P_fF̄ / P_ff.
    """
    P = np.linalg.inv(K_joint)
    pff = P[-1, -1]
    A = -P[-1, :-1] / pff
    return float(A @ mu), float(1.0 / pff + A @ Sigma @ A)


def kl_mc(mean_q, cov_q, mean_p, cov_p, n, seed=0):
    """Monte-Carlo KL(q || p) between multivariate normals: (estimate, standard error)."""
    g = np.random.default_rng(seed)
    q = stats.multivariate_normal(mean_q, cov_q)
    p = stats.multivariate_normal(mean_p, cov_p)
    x = q.rvs(size=n, random_state=g)
    r = q.logpdf(x) - p.logpdf(x)
    return float(r.mean()), float(r.std(ddof=1) / np.sqrt(n))


def kl_diag_mc(mean_q, sd_q, mean_p, sd_p, n, seed=0):
    """Monte-Carlo KL between fully factorized normals (arrays of any shape)."""
    g = np.random.default_rng(seed)
    shape = np.broadcast(mean_q, sd_q).shape
    total = np.zeros(n)
    chunk = max(1, 2_000_000 // max(1, int(np.prod(shape))))
    for start in range(0, n, chunk):
        m = min(chunk, n - start)
        x = mean_q + sd_q * g.standard_normal((m,) + shape)
        r = stats.norm.logpdf(x, mean_q, sd_q) - stats.norm.logpdf(x, mean_p, sd_p)
        total[start:start + m] = r.reshape(m, -1).sum(axis=1)
    return float(total.mean()), float(total.std(ddof=1) / np.sqrt(n))


def brute_spectrum(s, s2, k, m, alphabet, normalize=False):
    """sum over k-mer occurrence pairs of #{g in alphabet^k : d(g, a) <= m and d(g, b) <= m}."""

    def kmers(x):
        return [x[i:i + k] for i in range(len(x) - k + 1)]

    def hamming(a, b):
        return sum(c1 != c2 for c1, c2 in zip(a, b))

    universe = ["".join(t) for t in itertools.product(alphabet, repeat=k)]

    def raw(x, y):
        total = 0
        for a in kmers(x):
            for b in kmers(y):
                if m == 0:
                    total += a == b
                else:
                    total += sum(1 for g in universe if hamming(g, a) <= m and hamming(g, b) <= m)
        return float(total)

    v = raw(s, s2)
    if not normalize:
        return v
    d = np.sqrt(raw(s, s) * raw(s2, s2))
    return v / d if d > 0 else 0.0
