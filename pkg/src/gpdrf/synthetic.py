"""Synthetic benchmark data: a 1-D sinc regression toy and planted-motif sequences."""

from __future__ import annotations

import numpy as np

from .data import Dataset

PROTEIN_ALPHABET = "ACDEFGHIKLMNPQRSTVWY"


def sinc_toy(n, noise_sd=0.05, seed=0, low=-3.0, high=3.0):
    """x ~ U(low, high), y = sin(pi x) / (pi x) + noise_sd * N(0, 1)."""
    g = np.random.default_rng(seed)
    x = g.uniform(low, high, size=(n, 1))
    y = np.sinc(x[:, 0]) + noise_sd * g.standard_normal(n)
    return Dataset(x, y, "regression", "vector", feature_names=("x",), label_name="y", raw_inputs=x)


def motif_sequences(n, motifs=("WKHCM", "FYPQD"), min_len=20, max_len=40, both_fraction=0.04,
                    alphabet=PROTEIN_ALPHABET, seed=0):
    """Random background sequences with the class motif planted once.

    Class c gets ``motifs[c]`` at a uniform position.  A ``both_fraction`` of
    sequences also carries another class's motif, so they are genuinely
    ambiguous.  Background letters never spell a motif by construction.
    """
    g = np.random.default_rng(seed)
    K = len(motifs)
    k = len(motifs[0])
    letters = np.array(list(alphabet))
    seqs, labels = [], np.empty(n, dtype=np.int64)
    for i in range(n):
        c = int(g.integers(K))
        length = int(g.integers(min_len, max_len + 1))
        while True:
            s = "".join(g.choice(letters, size=length))
            if not any(m in s for m in motifs):
                break
        plant = [motifs[c]]
        if g.random() < both_fraction:
            plant.append(motifs[(c + 1 + int(g.integers(K - 1))) % K])
        # non-overlapping slots so planting one motif cannot destroy another
        slots = g.choice(length // k, size=len(plant), replace=False)
        s = list(s)
        for m, slot in zip(plant, slots):
            s[slot * k:slot * k + k] = m
        seqs.append("".join(s))
        labels[i] = c
    classes = tuple(f"class{c}" for c in range(K))
    return Dataset(seqs, labels, "classification", "sequence", classes, tuple(sorted(alphabet)))


def flip_labels(dataset, fraction, seed=0):
    """Copy with ``round(fraction * N)`` labels moved to a different uniformly chosen class."""
    g = np.random.default_rng(seed)
    K = dataset.n_classes
    y = dataset.targets.copy()
    idx = g.choice(len(y), size=int(round(fraction * len(y))), replace=False)
    y[idx] = (y[idx] + 1 + g.integers(K - 1, size=len(idx))) % K
    out = dataset.subset(np.arange(len(y)))
    out.targets = y
    return out
