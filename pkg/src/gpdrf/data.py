"""Dataset loading (CSV tables and labelled sequences), splits and batches."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng as rngmod
from .errors import ConfigurationError, ParseError


@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray
    constant_columns: tuple = ()

    @classmethod
    def fit(cls, X):
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        constant = tuple(int(i) for i in np.flatnonzero(std == 0))
        scale = np.where(std > 0, std, 1.0)
        return cls(mean, scale, constant)

    def apply(self, X):
        return (X - self.mean) / self.scale


@dataclass
class Dataset:
    inputs: object  # (N, d) float array, or list of N strings
    targets: np.ndarray  # floats (regression) or int class indices
    task: str = "regression"
    kind: str = "vector"
    classes: tuple = None  # label text for each class index
    alphabet: tuple = None
    feature_names: tuple = None
    label_name: str = None
    standardizer: Standardizer = None
    raw_inputs: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.inputs) != len(self.targets):
            raise ConfigurationError(f"{len(self.inputs)} inputs but {len(self.targets)} targets")

    def __len__(self):
        return len(self.targets)

    @property
    def n_classes(self):
        return len(self.classes) if self.classes is not None else 0

    @property
    def dim(self):
        return None if self.kind == "sequence" else int(np.shape(self.inputs)[1])

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        inputs = [self.inputs[i] for i in idx] if self.kind == "sequence" else self.inputs[idx]
        raw = None if self.raw_inputs is None else self.raw_inputs[idx]
        return replace(self, inputs=inputs, targets=self.targets[idx], raw_inputs=raw)


def _class_order(labels, numeric_sort):
    seen = list(dict.fromkeys(labels))
    if numeric_sort:
        try:
            return tuple(sorted(seen, key=float))
        except ValueError:
            pass
    return tuple(seen)


def _index_labels(labels, classes, line_numbers):
    lookup = {c: i for i, c in enumerate(classes)}
    out = np.empty(len(labels), dtype=np.int64)
    for i, lab in enumerate(labels):
        if lab not in lookup:
            raise ParseError(f"label {lab!r} is not one of the known classes", line_numbers[i])
        out[i] = lookup[lab]
    return out


def load_tabular(path, label_column, standardize=False, task="regression", standardizer=None, classes=None):
    """Read a headed CSV file of numeric features plus one label column.

    With ``standardize`` the columns are shifted and scaled with statistics of
    this file, unless a fitted ``standardizer`` (e.g. from the training split)
    is passed in.  For classification, labels are mapped to indices in
    numeric (else first-appearance) order, or via ``classes``.
    """
    if task not in ("regression", "classification"):
        raise ConfigurationError(f"unknown task {task!r}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("file is empty", 1)
    header = [h.strip() for h in rows[0]]
    if isinstance(label_column, int):
        if not 0 <= label_column < len(header):
            raise ParseError(f"label column index {label_column} out of range", 1)
        li = label_column
    elif label_column in header:
        li = header.index(label_column)
    else:
        raise ParseError(f"missing label column {label_column!r}", 1)
    feats, labels, lines = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} cells, found {len(row)}", lineno)
        values = []
        for ci, cell in enumerate(row):
            if ci == li:
                continue
            try:
                values.append(float(cell))
            except ValueError:
                raise ParseError(f"non-numeric cell {cell!r} in column {header[ci]!r}", lineno) from None
        feats.append(values)
        labels.append(row[li].strip())
        lines.append(lineno)
    if not feats:
        raise ParseError("dataset has no rows", len(rows))
    X = np.asarray(feats, dtype=np.float64).reshape(len(feats), len(header) - 1)
    if task == "regression":
        try:
            y = np.array([float(v) for v in labels])
        except ValueError as exc:
            raise ParseError(f"non-numeric regression target: {exc}") from None
        class_names = None
    else:
        class_names = tuple(classes) if classes is not None else _class_order(labels, numeric_sort=True)
        y = _index_labels(labels, class_names, lines)
    raw = X
    if standardizer is None and standardize:
        standardizer = Standardizer.fit(X)
    if standardizer is not None:
        X = standardizer.apply(X)
    names = tuple(h for i, h in enumerate(header) if i != li)
    return Dataset(X, y, task, "vector", class_names, None, names, header[li], standardizer, raw)


def write_tabular(dataset, path):
    """Write the (unstandardized) features and labels back out as CSV."""
    X = dataset.raw_inputs if dataset.raw_inputs is not None else dataset.inputs
    names = dataset.feature_names or tuple(f"x{i}" for i in range(X.shape[1]))
    label = dataset.label_name or "y"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(names) + [label])
        for row, t in zip(X, dataset.targets):
            lab = dataset.classes[int(t)] if dataset.task == "classification" else repr(float(t))
            w.writerow([repr(float(v)) for v in row] + [lab])


def load_sequences(path, alphabet=None, classes=None):
    """Read ``label<TAB>sequence`` lines; classes are indexed by first appearance."""
    labels, seqs, lines = [], [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            if "\t" not in line:
                raise ParseError("missing tab between label and sequence", lineno)
            label, seq = line.split("\t", 1)
            if not seq:
                raise ParseError("empty sequence", lineno)
            if alphabet is not None:
                for pos, sym in enumerate(seq):
                    if sym not in alphabet:
                        raise ParseError(f"symbol {sym!r} at position {pos} is outside the alphabet", lineno)
            labels.append(label)
            seqs.append(seq)
            lines.append(lineno)
    if not seqs:
        raise ParseError("dataset has no rows", 1)
    class_names = tuple(classes) if classes is not None else _class_order(labels, numeric_sort=False)
    y = _index_labels(labels, class_names, lines)
    if alphabet is None:
        alphabet = tuple(sorted(set().union(*map(set, seqs))))
    return Dataset(seqs, y, "classification", "sequence", class_names, tuple(alphabet))


def write_sequences(dataset, path):
    with open(path, "w") as fh:
        for s, t in zip(dataset.inputs, dataset.targets):
            fh.write(f"{dataset.classes[int(t)]}\t{s}\n")


def split(dataset, train_fraction, seed):
    """Deterministic random (train, test) split."""
    if not 0.0 < train_fraction < 1.0:
        raise ConfigurationError(f"train fraction must be in (0, 1), got {train_fraction}")
    N = len(dataset)
    n_train = int(round(train_fraction * N))
    if n_train == 0 or n_train == N:
        raise ConfigurationError(f"train fraction {train_fraction} leaves an empty split for N={N}")
    perm = rngmod.keyed(seed, rngmod.TAG_SPLIT).permutation(N)
    return dataset.subset(np.sort(perm[:n_train])), dataset.subset(np.sort(perm[n_train:]))


def split_indices(N, train_fraction, seed):
    perm = rngmod.keyed(seed, rngmod.TAG_SPLIT).permutation(N)
    n_train = int(round(train_fraction * N))
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def batch_iter(dataset, batch, seed, epoch):
    """Index batches for one epoch: ceil(N / batch) uniform draws without replacement within a batch.

    ``dataset`` may also be the integer N.  Yields ``(step, indices)``.
    """
    n = dataset if isinstance(dataset, (int, np.integer)) else len(dataset)
    if batch < 1:
        raise ConfigurationError("batch size must be >= 1")
    batch = min(batch, n)
    steps = -(-n // batch)
    for step in range(steps):
        g = rngmod.keyed(seed, rngmod.TAG_BATCH, epoch, step)
        yield step, np.sort(g.choice(n, size=batch, replace=False))
