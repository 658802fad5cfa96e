import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpdrf.data import Dataset
from gpdrf.drf import feed_forward
from gpdrf.errors import ConfigurationError, InputError, InsufficientSamplesError, ModelStateError
from gpdrf.gp_layer import marginal_moments
from gpdrf.kernels import ArdKernel
from gpdrf.model import ModelConfig, build_model
from gpdrf.predict import (
    PosteriorSampleSet,
    UncertaintyReport,
    bhattacharyya,
    certainty_margin,
    certainty_margins,
    evaluate,
    posterior_mean_var,
    posterior_samples,
    rmse,
    top_two,
    uncertainty_report,
)

pos = st.floats(1e-3, 1e3)
real = st.floats(-100, 100)


def prob_set(probs):
    probs = np.asarray(probs, dtype=np.float64)
    return PosteriorSampleSet(None, probs.argmax(-1), probs, "classification")


def constant_classifier(K=2, n_points=3, seed=0):
    """A softmax model whose logits are zero up to ~1e-26 for every input."""
    g = np.random.default_rng(seed)
    Z = g.standard_normal((3, 2))
    model = build_model(ModelConfig(widths=(2, K), features=(4,), likelihood="softmax", n_classes=K), Z,
                        ArdKernel(1.0, (1.0, 1.0)), seed, "var-resampled")
    model.layers[0].w_mean[...] = 0.0
    model.layers[0].w_logscale[...] = -60.0
    X = g.standard_normal((n_points, 2))
    return model, Dataset(X, np.arange(n_points) % K, "classification", classes=tuple(map(str, range(K))))


class TestPosteriorSamples:
    def test_collapsed_posterior_is_deterministic(self):
        g = np.random.default_rng(42)
        Z = g.standard_normal((3, 1))
        model = build_model(ModelConfig(widths=(1, 1), features=(3,), noise_var=1e-300, jitter=0.0), Z,
                            ArdKernel(1.0, (1.0,)), 0, "var-resampled")
        model.gp.mu[...] = g.standard_normal((3, 1))
        model.gp.sigma_logdiag[...] = -60.0
        lay = model.layers[0]
        lay.w_logscale[...] = -60.0
        lay.omega_logscale[...] = -60.0
        ss = posterior_samples(Z, model, S=5, T=50, seed=1)
        F = marginal_moments(Z, model.gp).mean
        expected = feed_forward(F, [lay], [(lay.w_mean, lay.omega_mean)])[:, 0]
        np.testing.assert_allclose(ss.targets, np.broadcast_to(expected, (50, 3)), atol=1e-6)

    def test_constant_logits_fair_coin(self):
        model, ds = constant_classifier(n_points=1)
        T = 10_000
        ss = posterior_samples(ds.inputs, model, S=4, T=T, seed=3)
        rate = np.mean(ss.targets[:, 0] == 1)
        assert abs(rate - 0.5) <= 3 * np.sqrt(0.25 / T)
        np.testing.assert_allclose(ss.probs, 0.5, atol=1e-12)

    def test_probabilities_sum_to_one(self):
        model, ds = constant_classifier(K=3)
        model.layers[0].w_logscale[...] = 0.0
        ss = posterior_samples(ds.inputs, model, S=6, T=20, seed=0)
        assert ss.probs.shape == (20, 3, 3)
        np.testing.assert_allclose(ss.probs.sum(-1), 1.0, atol=1e-9)

    def test_same_seed_same_samples(self):
        model, ds = constant_classifier(K=3)
        model.layers[0].w_logscale[...] = 0.0
        a = posterior_samples(ds.inputs, model, S=6, T=20, seed=5)
        b = posterior_samples(ds.inputs, model, S=6, T=20, seed=5)
        c = posterior_samples(ds.inputs, model, S=6, T=20, seed=6)
        assert a.probs.tobytes() == b.probs.tobytes() and np.array_equal(a.targets, b.targets)
        assert a.probs.tobytes() != c.probs.tobytes()

    def test_non_finite_parameters(self):
        model, ds = constant_classifier()
        model.gp.mu[0, 0] = np.inf
        with pytest.raises(ModelStateError):
            posterior_samples(ds.inputs, model, 2, 2)


class TestPosteriorMeanVar:
    def test_constant(self):
        assert posterior_mean_var(np.array([1.0, 1.0, 1.0])) == (1.0, 0.0)

    def test_two_samples(self):
        m, v = posterior_mean_var(np.array([0.0, 2.0]))
        assert (m, v) == (1.0, 2.0)

    def test_needs_two_draws(self):
        with pytest.raises(InsufficientSamplesError):
            posterior_mean_var(np.array([3.0]))

    def test_unit_normal(self):
        m, v = posterior_mean_var(np.random.default_rng(42).standard_normal(100_000))
        assert abs(m) <= 0.02 and abs(v - 1.0) <= 0.02

    @settings(max_examples=50, deadline=None)
    @given(st.lists(real, min_size=2, max_size=12))
    def test_hand_enumerated(self, ys):
        m, v = posterior_mean_var(np.array(ys))
        mean = sum(ys) / len(ys)
        assert m == pytest.approx(mean, abs=1e-9)
        assert v == pytest.approx(sum((y - mean) ** 2 for y in ys) / (len(ys) - 1), rel=1e-9, abs=1e-9)

    def test_class_fits_use_unbiased_divisor(self):
        probs = np.array([[[0.9, 0.1]], [[0.7, 0.3]]])
        mu, var = prob_set(probs).class_fits()
        np.testing.assert_allclose(mu, [[0.8, 0.2]])
        np.testing.assert_allclose(var, [[0.02, 0.02]])


class TestBhattacharyya:
    def test_identical(self):
        assert bhattacharyya(0.3, 2.0, 0.3, 2.0) == 0.0

    def test_unit_mean_gap(self):
        assert bhattacharyya(1.0, 1.0, 0.0, 1.0) == pytest.approx(0.125)

    def test_variance_ratio(self):
        assert bhattacharyya(0.0, 2.0, 0.0, 1.0) == pytest.approx(0.25 * np.log(1.125))
        assert bhattacharyya(0.0, 2.0, 0.0, 1.0) == pytest.approx(0.02945, abs=1e-5)

    @pytest.mark.parametrize("v1,v2", [(0.0, 1.0), (1.0, -1.0), (np.nan, 1.0)])
    def test_non_positive_variance(self, v1, v2):
        with pytest.raises(InputError):
            bhattacharyya(0.0, v1, 0.0, v2)

    @settings(max_examples=100, deadline=None)
    @given(real, pos, real, pos)
    def test_symmetric_non_negative(self, m1, v1, m2, v2):
        d = bhattacharyya(m1, v1, m2, v2)
        assert d >= 0.0
        assert d == pytest.approx(bhattacharyya(m2, v2, m1, v1))

    @settings(max_examples=60, deadline=None)
    @given(pos, pos, st.floats(0, 50), st.floats(0.01, 50))
    def test_monotone_in_mean_gap(self, v1, v2, gap, extra):
        assert bhattacharyya(gap + extra, v1, 0.0, v2) > bhattacharyya(gap, v1, 0.0, v2)

    def test_matches_density_overlap(self):
        # independent route: -log of the numerically integrated overlap sqrt(p q)
        x = np.linspace(-30, 30, 600_001)
        m1, v1, m2, v2 = 0.4, 0.5, -1.0, 2.0
        p = np.exp(-(x - m1) ** 2 / (2 * v1)) / np.sqrt(2 * np.pi * v1)
        q = np.exp(-(x - m2) ** 2 / (2 * v2)) / np.sqrt(2 * np.pi * v2)
        overlap = np.sum(np.sqrt(p * q)) * (x[1] - x[0])
        assert bhattacharyya(m1, v1, m2, v2) == pytest.approx(-np.log(overlap), rel=1e-8)


class TestCertaintyMargin:
    def test_identical_fits(self):
        probs = np.tile([[[0.25, 0.25, 0.25, 0.25]]], (4, 1, 1))
        assert certainty_margin(prob_set(probs)) == 0.0

    def test_three_class_pair(self):
        g = np.random.default_rng(42)
        T = 400
        probs = np.array([0.7, 0.2, 0.1]) + 0.1 * g.standard_normal((T, 1, 3))
        ss = prob_set(probs)
        mu, var = ss.class_fits()
        mg = certainty_margins(ss)
        # exhaustive check: the pair is the two largest means among all 3 classes
        ranked = sorted(range(3), key=lambda c: -mu[0, c])
        assert (mg.best[0], mg.runner_up[0]) == (ranked[0], ranked[1]) == (0, 1)
        assert mg.values[0] == pytest.approx(bhattacharyya(mu[0, 0], var[0, 0], mu[0, 1], var[0, 1]))

    def test_pair_invariant_to_shift(self):
        g = np.random.default_rng(42)
        probs = g.dirichlet(np.ones(5), size=(30, 4))
        a = certainty_margins(prob_set(probs))
        b = certainty_margins(prob_set(probs + 3.0))
        np.testing.assert_array_equal(a.best, b.best)
        np.testing.assert_array_equal(a.runner_up, b.runner_up)

    def test_pair_invariant_to_monotone_transform(self):
        g = np.random.default_rng(42)
        mu = g.random((10, 4))
        for f in (np.exp, lambda v: v ** 3, lambda v: 2 * v + 1):
            np.testing.assert_array_equal(np.stack(top_two(mu)), np.stack(top_two(f(mu))))

    def test_single_class_rejected(self):
        with pytest.raises(ConfigurationError):
            certainty_margins(prob_set(np.ones((3, 1, 1))))

    def test_floor_is_flagged(self):
        probs = np.tile([[[0.8, 0.2]]], (5, 1, 1))
        mg = certainty_margins(prob_set(probs))
        assert mg.floored[0]
        assert mg.values[0] == pytest.approx(0.25 * 0.36 / 2e-12)


class TestReport:
    def test_uniform_model_has_zero_margins(self):
        model, ds = constant_classifier(n_points=6)
        rep = uncertainty_report(ds, model, S=3, T=10, seed=0)
        np.testing.assert_array_equal(rep.margins, 0.0)
        assert rep.d_correct == 0.0 and rep.d_miss == 0.0

    def test_absent_average(self):
        model, ds = constant_classifier(n_points=4)
        ds.targets[...] = 0  # constant logits tie, and ties predict class 0
        rep = uncertainty_report(ds, model, S=3, T=10)
        assert rep.error_rate == 0.0 and rep.d_miss is None
        text = rep.to_text()
        assert "D_m\tabsent" in text and "D_c\t0.0" in text

    def test_histogram_conserves_points(self):
        g = np.random.default_rng(42)
        model, ds = constant_classifier(K=3, n_points=12)
        model.layers[0].w_logscale[...] = 0.0
        model.layers[0].w_mean[...] = g.standard_normal(model.layers[0].w_mean.shape)
        rep = uncertainty_report(ds, model, S=8, T=30, seed=2, bins=7)
        assert rep.counts_correct.sum() == rep.correct.sum()
        assert rep.counts_miss.sum() == (~rep.correct).sum()
        assert len(rep.bin_edges) == 8 and rep.bin_edges[-1] == pytest.approx(rep.margins.max())

    def test_text_layout(self):
        rep = UncertaintyReport(np.array([0, 1]), np.array([0, 0]), np.array([0.5, 0.1]), 0.5, 0.5, 0.1,
                                np.array([0.0, 0.25, 0.5]), np.array([0, 1]), np.array([1, 0]),
                                classes=("no", "yes"))
        lines = rep.to_text().splitlines()
        assert lines[:4] == ["# points", "id\ttrue\tpredicted\tmargin", "0\tno\tno\t0.5", "1\tyes\tno\t0.1"]
        assert "error_rate\t0.5" in lines
        assert lines[-3:] == ["lo\thi\tcorrect\tmisclassified", "0.0\t0.25\t0\t1", "0.25\t0.5\t1\t0"]

    def test_regression_rejected(self):
        g = np.random.default_rng(0)
        model = build_model(ModelConfig(), g.standard_normal((3, 1)), ArdKernel(1.0, (1.0,)))
        with pytest.raises(ConfigurationError):
            uncertainty_report(Dataset(g.standard_normal((3, 1)), np.zeros(3)), model, 2, 2)


class TestEvaluate:
    def test_rmse_hand_values(self):
        assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert rmse([1.0, -1.0], [0.0, 0.0]) == 1.0

    def test_all_correct(self):
        model, ds = constant_classifier(n_points=5)
        ds.targets[...] = 0
        assert evaluate(ds, model, 2, 4).value == 0.0

    def test_regression_metric(self):
        g = np.random.default_rng(42)
        Z = g.standard_normal((3, 1))
        model = build_model(ModelConfig(widths=(1, 1), features=(3,), noise_var=1e-300), Z, ArdKernel(1.0, (1.0,)))
        lay = model.layers[0]
        lay.w_mean[...] = 0.0
        lay.w_logscale[...] = -60.0
        m = evaluate(Dataset(Z, np.array([1.0, -1.0, 1.0])), model, 2, 3)
        assert m.name == "rmse" and m.value == pytest.approx(1.0, abs=1e-9)

    def test_task_mismatch(self):
        model, ds = constant_classifier()
        with pytest.raises(ConfigurationError):
            evaluate(Dataset(ds.inputs, np.zeros(len(ds))), model, 2, 2)
