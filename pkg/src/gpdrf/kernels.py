"""Exact kernels: ARD on fixed-size vectors and a (k, m)-mismatch spectrum
kernel on symbol sequences, plus Gram construction and PD linear algebra."""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse

from .errors import InputError, NotPositiveDefiniteError, ShapeError, ConfigurationError

DEFAULT_JITTER = 1e-6


@dataclass(frozen=True)
class ArdKernel:
    """alpha * exp(-0.5 * sum_i (x_i - x'_i)^2 / gamma_i)."""

    alpha: float = 1.0
    gamma: tuple = (1.0,)

    def __post_init__(self):
        gamma = tuple(float(g) for g in np.atleast_1d(self.gamma))
        object.__setattr__(self, "gamma", gamma)
        if not self.alpha > 0 or not all(g > 0 for g in gamma):
            raise ConfigurationError("ARD alpha and gamma must be positive")

    @property
    def dim(self):
        return len(self.gamma)

    @property
    def kind(self):
        return "ard"


@dataclass(frozen=True)
class SpectrumKernel:
    """Mismatch spectrum kernel: k-mers matched with up to ``m`` substitutions.

    With a ``sigma`` the normalized value c is passed through
    alpha * exp((c - 1) / sigma), a Gaussian kernel on the unit-norm k-mer
    embedding, so sigma acts as a bandwidth and every Gram stays PSD.
    Sequences shorter than k score 0 against everything either way.
    """

    k: int = 5
    m: int = 1
    alphabet: tuple = ()
    alpha: float = 1.0
    normalize: bool = True
    sigma: float = None
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        alphabet = tuple(self.alphabet)
        object.__setattr__(self, "alphabet", alphabet)
        if self.k < 1 or self.m < 0 or self.m >= self.k:
            raise ConfigurationError(f"need k >= 1 and 0 <= m < k, got k={self.k}, m={self.m}")
        if not alphabet:
            raise ConfigurationError("spectrum kernel alphabet is empty")
        if len(set(alphabet)) != len(alphabet):
            raise ConfigurationError("spectrum kernel alphabet has repeated symbols")
        if not self.alpha > 0:
            raise ConfigurationError("spectrum alpha must be positive")
        if self.sigma is not None:
            if not self.sigma > 0:
                raise ConfigurationError("spectrum sigma must be positive")
            if not self.normalize:
                raise ConfigurationError("spectrum sigma needs the normalized kernel")
        object.__setattr__(self, "_index", {a: i for i, a in enumerate(alphabet)})

    @property
    def kind(self):
        return "spectrum"

    def encode(self, seq):
        codes = np.empty(len(seq), dtype=np.int64)
        for pos, sym in enumerate(seq):
            try:
                codes[pos] = self._index[sym]
            except KeyError:
                raise InputError(f"symbol {sym!r} at position {pos} is not in the kernel alphabet") from None
        return codes

    def neighborhood_offsets(self):
        return _substitution_patterns(self.k, self.m, len(self.alphabet))


@functools.lru_cache(maxsize=64)
def _substitution_patterns(k, m, A):
    """Every way to substitute at most m of k positions with a different symbol.

    Returns a list of (positions, shifts); ``shifts`` has one row per
    assignment of non-zero symbol shifts (mod A) to ``positions``.  The
    patterns enumerate each Hamming neighbour exactly once.
    """
    patterns = []
    for r in range(m + 1):
        for positions in itertools.combinations(range(k), r):
            combos = list(itertools.product(range(1, A), repeat=r))
            shifts = np.array(combos, dtype=np.int64).reshape(len(combos), r)
            patterns.append((positions, shifts))
    return patterns


def kmer_profile(seq, spec):
    """Sorted k-mer ids and their (mismatch-expanded) occurrence counts for one sequence."""
    codes = spec.encode(seq)
    n = len(codes) - spec.k + 1
    if n <= 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64)
    A = len(spec.alphabet)
    digits = np.lib.stride_tricks.sliding_window_view(codes, spec.k)  # n x k
    weights = A ** np.arange(spec.k - 1, -1, -1, dtype=np.int64)
    base_ids = digits @ weights
    ids = []
    for positions, shifts in spec.neighborhood_offsets():
        if not positions:
            ids.append(base_ids)
            continue
        pos = list(positions)
        orig = digits[:, pos]  # n x r
        new = (orig[:, None, :] + shifts[None, :, :]) % A  # n x s x r
        delta = ((new - orig[:, None, :]) * weights[pos]).sum(axis=-1)
        ids.append((base_ids[:, None] + delta).ravel())
    uniq, counts = np.unique(np.concatenate(ids), return_counts=True)
    return uniq, counts.astype(np.float64)


def _profile_dot(p1, p2):
    ids1, c1 = p1
    ids2, c2 = p2
    _, i1, i2 = np.intersect1d(ids1, ids2, assume_unique=True, return_indices=True)
    return float(np.dot(c1[i1], c2[i2]))


def spectrum_eval(s, s2, p):
    """alpha * <c(s), c(s2)>, optionally cosine-normalized (and bandwidth-transformed)."""
    a, b = kmer_profile(s, p), kmer_profile(s2, p)
    value = _profile_dot(a, b)
    if p.normalize:
        norm = np.sqrt(_profile_dot(a, a) * _profile_dot(b, b))
        value = value / norm if norm > 0 else 0.0
        if p.sigma is not None and norm > 0:
            value = float(np.exp((value - 1.0) / p.sigma))
    return p.alpha * value


def bandwidth_transform(base, valid_rows, valid_cols, sigma):
    """exp((base - 1) / sigma) on pairs of valid sequences, 0 elsewhere."""
    mask = np.outer(valid_rows, valid_cols)
    return np.exp((base - 1.0) / sigma) * mask


def profile_matrix(seqs, spec, vocab=None):
    """Sparse (len(seqs) x V) count matrix over a shared compact k-mer vocabulary.

    Returns ``(matrix, vocab)``; pass ``vocab`` back in to featurize more
    sequences in the same column space (unseen k-mers are dropped, which
    leaves inner products with the original set unchanged).
    """
    profiles = []
    for i, s in enumerate(seqs):
        try:
            profiles.append(kmer_profile(s, spec))
        except InputError as exc:
            raise InputError(f"sequence {i}: {exc}") from None
    if vocab is None:
        vocab = np.unique(np.concatenate([ids for ids, _ in profiles] or [np.empty(0, np.int64)]))
    rows, cols, vals = [], [], []
    for r, (ids, counts) in enumerate(profiles):
        col = np.searchsorted(vocab, ids)
        keep = (col < len(vocab)) & (vocab[np.minimum(col, len(vocab) - 1)] == ids) if len(vocab) else np.zeros(len(ids), bool)
        rows.append(np.full(int(keep.sum()), r))
        cols.append(col[keep])
        vals.append(counts[keep])
    mat = scipy.sparse.csr_matrix(
        (np.concatenate(vals) if vals else [], (np.concatenate(rows) if rows else [], np.concatenate(cols) if cols else [])),
        shape=(len(seqs), len(vocab)),
    )
    return mat, vocab


def spectrum_base(X, X2, spec):
    """Unit-scale spectrum kernel matrix (alpha ignored)."""
    same = X2 is None or X2 is X
    C1, vocab = profile_matrix(X, spec)
    C2 = C1 if same else profile_matrix(X2, spec, vocab)[0]
    K = np.asarray((C1 @ C2.T).todense(), dtype=np.float64)
    if spec.normalize:
        d1 = np.asarray(C1.multiply(C1).sum(axis=1)).ravel()
        if same:
            d2 = d1
        else:
            # self-similarity must use the full profile, not the truncated vocabulary
            d2 = spectrum_self(X2, spec)
        norm = np.sqrt(np.outer(d1, d2))
        K = np.divide(K, norm, out=np.zeros_like(K), where=norm > 0)
    return K


def spectrum_self(X, spec):
    """Unnormalized self-similarities <c(s), c(s)>."""
    out = np.empty(len(X))
    for i, s in enumerate(X):
        ids, counts = kmer_profile(s, spec)
        out[i] = float(np.dot(counts, counts))
    return out


def spectrum_base_diag(X, spec):
    if spec.normalize:
        return (spectrum_self(X, spec) > 0).astype(np.float64)
    return spectrum_self(X, spec)


def ard_eval(x, x2, p):
    x = np.asarray(x, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    gamma = np.asarray(p.gamma)
    if x.shape != gamma.shape or x2.shape != gamma.shape:
        raise ShapeError(f"ARD input dims {x.shape}, {x2.shape} do not match gamma {gamma.shape}")
    d = x - x2
    return float(p.alpha * np.exp(-0.5 * np.sum(d * d / gamma)))


def ard_matrix(X, X2, p):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    X2 = np.atleast_2d(np.asarray(X2, dtype=np.float64))
    gamma = np.asarray(p.gamma)
    if X.shape[1] != gamma.size or X2.shape[1] != gamma.size:
        raise ShapeError(f"ARD input dims {X.shape[1]}, {X2.shape[1]} do not match gamma size {gamma.size}")
    A = X / np.sqrt(gamma)
    B = X2 / np.sqrt(gamma)
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return p.alpha * np.exp(-0.5 * np.maximum(sq, 0.0))


@dataclass(frozen=True)
class GramMatrix:
    entries: np.ndarray
    jitter: float = 0.0


def gram(X, X2=None, kernel=None, jitter=None):
    """Kernel matrix between two input lists; jitter only on the square X = X2 case.

    ``X2=None`` (or ``X2 is X``) means the square case.  The default jitter is
    ``1e-6 * alpha``.
    """
    same = X2 is None or X2 is X
    if jitter is None:
        jitter = DEFAULT_JITTER * kernel.alpha
    if kernel.kind == "ard":
        K = ard_matrix(X, X if same else X2, kernel)
    else:
        base = spectrum_base(X, None if same else X2, kernel)
        if kernel.sigma is not None:
            v1 = spectrum_base_diag(X, kernel)
            v2 = v1 if same else spectrum_base_diag(X2, kernel)
            base = bandwidth_transform(base, v1, v2, kernel.sigma)
        K = kernel.alpha * base
    if same:
        K = 0.5 * (K + K.T)
        K[np.diag_indices_from(K)] += jitter
        return GramMatrix(K, float(jitter))
    return GramMatrix(K, 0.0)


def psd_factor(G):
    """Lower Cholesky factor of a symmetric positive-definite matrix."""
    A = G.entries if isinstance(G, GramMatrix) else np.asarray(G, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeError(f"psd_factor needs a square matrix, got {A.shape}")
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError(
            "Gram matrix is not positive definite; increase the jitter"
        ) from None


def psd_solve(factor, B):
    """X with (factor factor^T) X = B."""
    return scipy.linalg.cho_solve((factor, True), np.asarray(B, dtype=np.float64), check_finite=False)
