"""Monte-Carlo posterior prediction and Bhattacharyya certainty analysis."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from . import rng as rngmod
from .drf import SpectraOption
from .gp_layer import inducing_factor
from .inference import fixed_layer_noise
from .model import _group
from .errors import ConfigurationError, InputError, InsufficientSamplesError
from .likelihoods import sample_target, softmax

VARIANCE_FLOOR = 1e-12
PREDICT_CHUNK = 256  # test points per forward pass; fixed so draws do not depend on N
DEFAULT_BINS = 20


@dataclass
class PosteriorSampleSet:
    """T target draws per test point, plus the chosen pass's class probabilities.

    ``targets`` is (T, N); ``probs`` is (T, N, K) for classification and
    None for regression.
    """

    x_star: object
    targets: np.ndarray
    probs: np.ndarray = None
    task: str = "regression"

    @property
    def n_draws(self):
        return self.targets.shape[0]

    def __len__(self):
        return self.targets.shape[1]

    def class_fits(self):
        """Per-point, per-class sample mean and (T-1)-divisor variance of the probabilities, each (N, K)."""
        if self.probs is None:
            raise ConfigurationError("class fits need a classification sample set")
        return posterior_mean_var(self.probs)


def _value(x):
    return x.value if isinstance(x, dc.Tensor) else np.asarray(x)


def _forward_draws(model, x_star, S, seed):
    """Outputs G for S posterior draws of (W, Omega, F*), shape (S, N, d_L)."""
    model.check_finite()
    params = model.parameters()
    prepared = model.prepare(x_star)
    n = len(prepared)
    if model.option is SpectraOption.VAR_FIXED and model.frozen_noise:
        # the posterior was fitted to these particular draws; pass s reuses draw s mod S_train
        e, tau = fixed_layer_noise(model, model.frozen_noise["seed"], model.frozen_noise["samples"])
        reuse = np.arange(S) % model.frozen_noise["samples"]
        noise = {"e": [x[reuse] for x in e], "tau": [x[reuse] for x in tau]}
    else:
        shapes = model.noise_shapes(S, 1)
        noise = {
            "e": [rngmod.keyed(seed, rngmod.TAG_PREDICT, 0, l).standard_normal(s) for l, s in enumerate(shapes["e"])],
            "tau": [rngmod.keyed(seed, rngmod.TAG_PREDICT, 1, l).standard_normal(s)
                    for l, s in enumerate(shapes["tau"])],
        }
    L = None
    if model.gp is not None:
        L = inducing_factor(model.gp, _group(params, "gp."))
    out = []
    for c, start in enumerate(range(0, n, PREDICT_CHUNK)):
        idx = np.arange(start, min(start + PREDICT_CHUNK, n))
        chunk_noise = dict(noise)
        if model.gp is not None:
            d0 = model.gp.n_latent
            chunk_noise["eps"] = rngmod.keyed(seed, rngmod.TAG_PREDICT, 2, c).standard_normal((S, len(idx), d0))
        out.append(_value(model.forward(params, prepared.take(idx), chunk_noise, L)))
    return np.concatenate(out, axis=1)


def posterior_samples(x_star, model, S, T, seed=0):
    """Draw S forward passes from q, then T times pick a pass uniformly and sample y* from the likelihood."""
    if S < 1:
        raise ConfigurationError("S must be >= 1")
    if T < 1:
        raise ConfigurationError("T must be >= 1")
    G = _forward_draws(model, x_star, S, seed)
    n = G.shape[1]
    pick = rngmod.keyed(seed, rngmod.TAG_PREDICT, 3).integers(S, size=(T, n))
    chosen = G[pick, np.arange(n)[None, :]]  # (T, N, d_L)
    y = sample_target(chosen, model.likelihood, rngmod.keyed(seed, rngmod.TAG_PREDICT, 4))
    if model.likelihood.kind == "softmax":
        return PosteriorSampleSet(x_star, y, softmax(chosen), "classification")
    return PosteriorSampleSet(x_star, y, None, "regression")


def posterior_mean_var(samples):
    """Sample mean and unbiased variance over the leading (draw) axis."""
    if isinstance(samples, PosteriorSampleSet):
        if samples.task != "regression":
            raise ConfigurationError("posterior_mean_var needs scalar targets; use class_fits for classification")
        samples = samples.targets
    y = np.asarray(samples, dtype=np.float64)
    if y.shape[0] < 2:
        raise InsufficientSamplesError(f"variance needs at least 2 draws, got {y.shape[0]}")
    return y.mean(axis=0), y.var(axis=0, ddof=1)


def bhattacharyya(mu1, var1, mu2, var2):
    """Bhattacharyya distance between N(mu1, var1) and N(mu2, var2); arguments are variances."""
    v1 = np.asarray(var1, dtype=np.float64)
    v2 = np.asarray(var2, dtype=np.float64)
    if np.any(~(v1 > 0)) or np.any(~(v2 > 0)):
        raise InputError("variances must be positive")
    d = np.asarray(mu1, dtype=np.float64) - np.asarray(mu2, dtype=np.float64)
    out = 0.25 * np.log(0.25 * (v1 / v2 + v2 / v1 + 2.0)) + 0.25 * d * d / (v1 + v2)
    return float(out) if np.ndim(out) == 0 else out


def top_two(mu):
    """Indices (best, runner-up) per row of class means; ties go to the lower class index."""
    order = np.argsort(-np.asarray(mu), axis=-1, kind="stable")
    return order[..., 0], order[..., 1]


@dataclass
class Margins:
    values: np.ndarray
    best: np.ndarray
    runner_up: np.ndarray
    floored: np.ndarray  # True where a variance hit the floor


def certainty_margins(sample_set):
    """Bhattacharyya margin between the two most confident class fits at every test point."""
    mu, var = sample_set.class_fits()
    if mu.shape[-1] < 2:
        raise ConfigurationError("certainty margin needs at least 2 classes")
    a, b = top_two(mu)
    rows = np.arange(mu.shape[0])
    va, vb = var[rows, a], var[rows, b]
    floored = (va < VARIANCE_FLOOR) | (vb < VARIANCE_FLOOR)
    m = bhattacharyya(mu[rows, a], np.maximum(va, VARIANCE_FLOOR), mu[rows, b], np.maximum(vb, VARIANCE_FLOOR))
    return Margins(np.atleast_1d(m), a, b, floored)


def certainty_margin(sample_set):
    """Margin for a single-point set (float), or per-point margins (array)."""
    m = certainty_margins(sample_set).values
    return float(m[0]) if len(m) == 1 else m


@dataclass
class UncertaintyReport:
    true_labels: np.ndarray
    predicted: np.ndarray
    margins: np.ndarray
    error_rate: float
    d_correct: float  # None when no point is classified correctly
    d_miss: float  # None when nothing is misclassified
    bin_edges: np.ndarray
    counts_correct: np.ndarray
    counts_miss: np.ndarray
    n_floored: int = 0
    classes: tuple = None
    draws: dict = field(default_factory=dict)

    @property
    def correct(self):
        return self.predicted == self.true_labels

    def to_text(self):
        def fmt(v):
            return "absent" if v is None else repr(float(v))

        name = (lambda i: self.classes[i]) if self.classes else str
        lines = ["# points", "id\ttrue\tpredicted\tmargin"]
        for i, (t, p, m) in enumerate(zip(self.true_labels, self.predicted, self.margins)):
            lines.append(f"{i}\t{name(int(t))}\t{name(int(p))}\t{float(m)!r}")
        lines += ["# aggregate", f"error_rate\t{self.error_rate!r}", f"D_c\t{fmt(self.d_correct)}",
                  f"D_m\t{fmt(self.d_miss)}", f"variance_floor_hits\t{self.n_floored}"]
        for k, v in self.draws.items():
            lines.append(f"{k}\t{v}")
        lines += ["# histogram", "lo\thi\tcorrect\tmisclassified"]
        for lo, hi, c, w in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts_correct, self.counts_miss):
            lines.append(f"{float(lo)!r}\t{float(hi)!r}\t{int(c)}\t{int(w)}")
        return "\n".join(lines) + "\n"

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_text())


def predict_classes(sample_set):
    return np.argmax(sample_set.probs.mean(axis=0), axis=-1)


def uncertainty_report(testset, model, S, T, seed=0, bins=DEFAULT_BINS):
    """Per-point predictions and margins, averages over correct and misclassified points, histogram counts."""
    if model.likelihood.kind != "softmax" or testset.task != "classification":
        raise ConfigurationError("uncertainty analysis needs a classification model and test set")
    ss = posterior_samples(testset.inputs, model, S, T, seed)
    pred = predict_classes(ss)
    mg = certainty_margins(ss)
    y = np.asarray(testset.targets)
    ok = pred == y
    d_c = float(mg.values[ok].mean()) if ok.any() else None
    d_m = float(mg.values[~ok].mean()) if (~ok).any() else None
    hi = float(mg.values.max()) if len(mg.values) else 0.0
    edges = np.linspace(0.0, hi if hi > 0 else 1.0, bins + 1)
    cc, _ = np.histogram(mg.values[ok], edges)
    cm, _ = np.histogram(mg.values[~ok], edges)
    return UncertaintyReport(y, pred, mg.values, float(np.mean(~ok)), d_c, d_m, edges, cc, cm,
                             int(mg.floored.sum()), testset.classes, {"S": S, "T": T, "seed": seed})


@dataclass
class Metric:
    name: str  # "error_rate" | "rmse"
    value: float


def evaluate(testset, model, S, T, seed=0):
    """Error rate of the argmax mean class probability, or RMSE of posterior means."""
    ss = posterior_samples(testset.inputs, model, S, T, seed)
    y = np.asarray(testset.targets)
    if ss.task == "classification":
        if testset.task != "classification":
            raise ConfigurationError("classification model on a regression test set")
        return Metric("error_rate", float(np.mean(predict_classes(ss) != y)))
    if testset.task != "regression":
        raise ConfigurationError("regression model on a classification test set")
    mean = ss.targets.mean(axis=0)
    return Metric("rmse", rmse(mean, y))


def rmse(pred, y):
    r = np.asarray(pred, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    return float(np.sqrt(np.mean(r * r)))
