"""Acceptance gate: ten criteria, each printing one PASS/FAIL line.

Thresholds and runtime budgets are the contract values.  Training settings
for the end-to-end criteria (learning rate, epochs, inducing count) are the
ones recorded in the project decision log.
"""

import time

import numpy as np
import pytest

from gpdrf import checkpoint, gp_layer, oracles
from gpdrf.checks import gradient_errors, rff_errors, tiny_model
from gpdrf.data import Dataset, Standardizer, split
from gpdrf.drf import DrfLayerState, SpectraOption, kl_spectra, kl_weights
from gpdrf.inference import (
    Batch,
    TrainConfig,
    elbo_parts,
    exact_gp_elbo,
    frozen_noise,
    gp_log_evidence,
    select_inducing,
    train,
)
from gpdrf.kernels import ArdKernel, SpectrumKernel, ard_matrix, gram
from gpdrf.model import ModelConfig, build_model
from gpdrf.predict import bhattacharyya, evaluate, uncertainty_report
from gpdrf.random_features import rff_map, sample_spectra
from gpdrf.synthetic import flip_labels, motif_sequences, sinc_toy


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


def motif_split(noise=0.0):
    ds = motif_sequences(400, seed=0)
    train_set, test_set = split(ds, 0.75, 0)
    if noise:
        train_set = flip_labels(train_set, noise, seed=1)
    return ds, train_set, test_set


def train_motif_model(train_set, alphabet, kind="gpdrf"):
    kern = SpectrumKernel(k=5, m=0, alphabet=alphabet)
    Z = select_inducing(train_set.inputs, 64, "kernel-medoids", kern, 0)
    widths, features = ((2, 2), (32,)) if kind == "gpdrf" else ((2,), ())
    cfg = ModelConfig(kind=kind, widths=widths, features=features, likelihood="softmax", n_classes=2)
    model = build_model(cfg, Z, kern, seed=0, option="var-fixed", classes=train_set.classes, input_kind="sequence")
    train(train_set, model, TrainConfig(epochs=60, learning_rate=0.02, batch_size=32, samples=10, seed=0))
    return model


class TestAcceptance:
    def test_01_rff_fidelity(self, report_criterion):
        """RFF inner products approximate the ARD kernel and are unbiased over redraws."""
        with Timer() as t:
            err = rff_errors(4096, n_pairs=20, dim=5, seed=42)
            within = int(np.sum(err <= 0.05))
            g = np.random.default_rng(42)
            h, h2 = g.standard_normal(5), g.standard_normal(5)
            exact = ard_matrix(h[None], h2[None], ArdKernel(1.0, (1.0,) * 5))[0, 0]
            vals = []
            for s in range(50):
                sp = sample_spectra(np.ones(5), 4096, seed=1000 + s)
                vals.append(rff_map(h, sp, 1.0) @ rff_map(h2, sp, 1.0))
            se = np.std(vals, ddof=1) / np.sqrt(50)
            z = abs(np.mean(vals) - exact) / se
        ok = within >= 19 and z <= 3 and t.seconds < 10
        report_criterion(1, "rff-fidelity", ok, f"{within}/20 pairs within 0.05 (max err {err.max():.4f}); "
                                                f"redraw mean off by {z:.2f} SE; {t.seconds:.1f}s")
        assert ok

    def test_02_gradient_correctness(self, report_criterion):
        """Every ELBO parameter-group gradient matches central differences on the tiny model."""
        worst, where = 0.0, ""
        with Timer() as t:
            for option in SpectraOption:
                for whiten in (True, False):
                    model, batch, noise = tiny_model(seed=0, option=option, n=6, n_inducing=3, widths=(2, 3, 1),
                                                     features=(4, 4), samples=3)
                    model.gp.whiten = whiten
                    errs = gradient_errors(model, batch, noise, step=1e-5)
                    name = max(errs, key=errs.get)
                    if errs[name] >= worst:
                        worst, where = errs[name], f"{name}, {option.value}, whiten={whiten}"
        ok = worst <= 1e-4 and t.seconds < 30
        report_criterion(2, "gradient-correctness", ok,
                         f"worst relative error {worst:.2e} ({where}) over 3 options x 2 parameterizations; "
                         f"{t.seconds:.1f}s")
        assert ok

    def test_03_conditioning_oracle(self, report_criterion):
        """Marginal moments agree with brute-force Gaussian conditioning."""
        g = np.random.default_rng(42)
        worst = 0.0
        with Timer() as t:
            for i in range(20):
                M = int(g.integers(1, 6))
                Z = g.standard_normal((M, 2))
                x = g.standard_normal(2)
                kern = ArdKernel(float(g.uniform(0.5, 2)), tuple(g.uniform(0.5, 2, 2)))
                state = gp_layer.InducingState.create(Z, kern, 1, whiten=bool(i % 2))
                A = g.standard_normal((M, M))
                state.set_posterior(g.standard_normal((M, 1)), (A @ A.T + 0.1 * np.eye(M))[None])
                mu, Sigma = state.posterior()
                P = np.vstack([Z, x[None]])
                K = ard_matrix(P, P, kern)
                K[np.arange(M), np.arange(M)] += state.jitter * kern.alpha
                mean, var = oracles.conditioned_moments(K, mu[:, 0], Sigma[0])
                mom = gp_layer.marginal_moments(x, state)
                worst = max(worst, abs(mean - mom.mean[0]), abs(var - mom.var[0]))
        ok = worst <= 1e-8 and t.seconds < 5
        report_criterion(3, "conditioning-oracle", ok, f"max deviation {worst:.2e} over 20 configurations; "
                                                       f"{t.seconds:.1f}s")
        assert ok

    def test_04_kl_oracles(self, report_criterion):
        """Closed-form KL terms agree with 10^6-sample Monte Carlo and vanish at the prior."""
        g = np.random.default_rng(42)
        details, ok = [], True
        with Timer() as t:
            state = gp_layer.InducingState.create(g.standard_normal((3, 2)), ArdKernel(1.3, (0.7, 1.6)), 1,
                                                  whiten=False)
            A = g.standard_normal((3, 3))
            state.set_posterior(g.standard_normal((3, 1)), (A @ A.T + 0.2 * np.eye(3))[None])
            kern = state.current_kernel()
            K = gram(state.pseudo_inputs, None, kern, jitter=state.jitter * kern.alpha).entries
            mu, Sigma = state.posterior()
            est, se = oracles.kl_mc(mu[:, 0], Sigma[0], np.zeros(3), K, 1_000_000, seed=1)
            z_f = abs(gp_layer.kl_inducing(state) - est) / se

            layer = DrfLayerState.create(2, 1, 2, g)
            for v in layer.param_arrays().values():
                v += 0.3 * g.standard_normal(v.shape)
            est, se = oracles.kl_diag_mc(layer.w_mean, np.exp(layer.w_logscale), 0.0, 1.0, 1_000_000, seed=2)
            z_w = abs(kl_weights(layer) - est) / se
            sd_p = np.exp(0.5 * layer.log_lambda)[:, None]
            est, se = oracles.kl_diag_mc(layer.omega_mean, np.exp(layer.omega_logscale), 0.0, sd_p, 1_000_000,
                                         seed=3)
            z_o = abs(kl_spectra(layer) - est) / se
            ok &= max(z_f, z_w, z_o) <= 3
            details.append(f"MC deviations {z_f:.2f}/{z_w:.2f}/{z_o:.2f} SE (inducing/weights/spectra)")

            prior_gp = gp_layer.InducingState.create(g.standard_normal((4, 2)), ArdKernel(1.0, (1.0, 1.0)), 2,
                                                     init_scale=1.0)
            prior_layer = DrfLayerState.create(2, 1, 3, g)
            prior_layer.w_mean[...] = 0.0
            prior_layer.w_logscale[...] = 0.0
            prior_layer.omega_mean[...] = 0.0
            at_prior = (gp_layer.kl_inducing(prior_gp), kl_weights(prior_layer), kl_spectra(prior_layer))
            ok &= at_prior == (0.0, 0.0, 0.0)
            details.append(f"at prior {at_prior}")
        ok &= t.seconds < 60
        report_criterion(4, "kl-oracles", ok, "; ".join(details) + f"; {t.seconds:.1f}s")
        assert ok

    def test_05_evidence_bound(self, report_criterion):
        """A trained single-point GP never beats the exact log marginal likelihood."""
        X, y = np.array([[0.3]]), np.array([0.8])
        ds = Dataset(X, y)
        with Timer() as t:
            model = build_model(ModelConfig(kind="gp", widths=(1,), features=(), noise_var=0.5, gp_init_scale=1.0),
                                X, ArdKernel(1.0, (1.0,)), seed=0, option="var-resampled")
            before = exact_gp_elbo(model, ds)
            train(ds, model, TrainConfig(epochs=300, learning_rate=0.02, batch_size=1, samples=10, l2=0.0,
                                         option="var-resampled"))
            elbo = exact_gp_elbo(model, ds)
            evidence = gp_log_evidence(X, y, model.gp.current_kernel(), float(np.exp(model.likelihood.log_noise)))
        ok = elbo <= evidence + 1e-6 and t.seconds < 10
        report_criterion(5, "evidence-bound", ok, f"ELBO {elbo:.6f} <= log evidence {evidence:.6f} "
                                                  f"(gap {evidence - elbo:.2e}, initial ELBO {before:.4f}); "
                                                  f"{t.seconds:.1f}s")
        assert ok

    @pytest.mark.slow
    def test_06_regression_end_to_end(self, report_criterion):
        """GP-DRF on the 1-D sinc toy reaches twice the noise floor."""
        with Timer() as t:
            tr, te = sinc_toy(200, noise_sd=0.05, seed=1), sinc_toy(100, noise_sd=0.05, seed=2)
            st = Standardizer.fit(tr.inputs)
            tr.inputs, te.inputs = st.apply(tr.inputs), st.apply(te.inputs)
            kern = ArdKernel(1.0, (1.0,))
            Z = select_inducing(tr.inputs, 32, "kernel-medoids", kern, 0)
            model = build_model(ModelConfig(widths=(2, 1), features=(32,), noise_var=0.1), Z, kern, seed=0)
            train(tr, model, TrainConfig(epochs=200, learning_rate=0.05, batch_size=32, samples=10, seed=0))
            metric = evaluate(te, model, 100, 100, seed=0)
        ok = metric.value <= 0.10 and t.seconds < 300
        report_criterion(6, "sinc-regression", ok, f"test RMSE {metric.value:.4f} (threshold 0.10); "
                                                   f"{t.seconds:.1f}s")
        assert ok

    @pytest.mark.slow
    def test_07_sequence_classification(self, report_criterion):
        """GP-DRF separates planted-motif sequences; the gp baseline runs through the same harness."""
        with Timer() as t:
            ds, tr, te = motif_split()
            model = train_motif_model(tr, ds.alphabet)
            err = evaluate(te, model, 100, 100, seed=0).value
            baseline = train_motif_model(tr, ds.alphabet, kind="gp")
            err_gp = evaluate(te, baseline, 100, 100, seed=0).value
        ok = err <= 0.05 and t.seconds < 600
        report_criterion(7, "sequence-classification", ok, f"GP-DRF test error {err:.3f} (threshold 0.05); "
                                                           f"gp baseline test error {err_gp:.3f}; {t.seconds:.1f}s")
        assert ok

    @pytest.mark.slow
    def test_08_uncertainty_pattern(self, report_criterion):
        """Correct predictions carry larger certainty margins than misclassified ones."""
        with Timer() as t:
            spots = (bhattacharyya(0.4, 1.3, 0.4, 1.3), bhattacharyya(1.0, 1.0, 0.0, 1.0))
            ds, tr, te = motif_split(noise=0.1)
            model = train_motif_model(tr, ds.alphabet)
            rep = uncertainty_report(te, model, 100, 100, seed=0)
        spot_ok = spots[0] == 0.0 and abs(spots[1] - 0.125) <= 1e-12
        pattern = rep.d_correct is not None and rep.d_miss is not None and rep.d_correct > rep.d_miss
        ok = spot_ok and pattern and t.seconds < 600
        report_criterion(8, "uncertainty-pattern", ok,
                         f"D_c {rep.d_correct} vs D_m {rep.d_miss} over {len(te)} test points "
                         f"(error {rep.error_rate:.3f}, {int((~rep.correct).sum())} misclassified); "
                         f"spot values {spots[0]}, {spots[1]}; {t.seconds:.1f}s")
        assert ok

    def test_09_determinism(self, report_criterion):
        """Identical seeds give identical checkpoints and traces."""

        def run(option):
            tr = sinc_toy(64, seed=5)
            kern = ArdKernel(1.0, (1.0,))
            Z = select_inducing(tr.inputs, 8, "kernel-medoids", kern, 3)
            model = build_model(ModelConfig(widths=(2, 1), features=(8,)), Z, kern, seed=3, option=option)
            res = train(tr, model, TrainConfig(epochs=5, learning_rate=0.01, batch_size=16, samples=3, seed=3,
                                               option=option))
            return checkpoint.dumps(model), res.trace

        with Timer() as t:
            a, b = run("var-fixed"), run("var-fixed")
            same_ckpt = a[0] == b[0]
            same_traces = all(run(o)[1] == run(o)[1] for o in ("prior-fixed", "var-resampled"))
        ok = same_ckpt and same_traces and t.seconds < 120
        report_criterion(9, "determinism", ok, f"var-fixed checkpoints identical: {same_ckpt} ({len(a[0])} bytes); "
                                               f"prior-fixed/var-resampled traces identical: {same_traces}; "
                                               f"{t.seconds:.1f}s")
        assert ok

    def test_10_three_option_contract(self, report_criterion):
        """PRIOR-FIXED drops exactly the spectra KL from the ELBO."""
        with Timer() as t:
            model, batch, noise = tiny_model(seed=1, option=SpectraOption.VAR_FIXED)
            # zero weight noise and zero weight means make every layer output exactly 0, so the data
            # term cannot depend on where the spectra come from
            for layer in model.layers:
                layer.w_mean[...] = 0.0
            noise = dict(noise, e=[np.zeros_like(e) for e in noise["e"]])
            kl_o = sum(kl_spectra(layer) for layer in model.layers)
            values = {}
            for option in (SpectraOption.VAR_FIXED, SpectraOption.PRIOR_FIXED):
                model.option = option
                parts = elbo_parts(batch, model, noise)
                values[option] = float((parts["expected_loglik"] - parts["kl_inducing"] - parts["kl_weights"]
                                        - parts["kl_spectra"]).value)
            diff = values[SpectraOption.PRIOR_FIXED] - values[SpectraOption.VAR_FIXED]
        ok = kl_o > 0 and abs(diff - kl_o) <= 1e-9 * max(1.0, kl_o) and t.seconds < 5
        report_criterion(10, "three-option-contract", ok, f"ELBO(prior-fixed) - ELBO(var-fixed) = {diff:.10g}, "
                                                          f"kl_spectra = {kl_o:.10g}; {t.seconds:.2f}s")
        assert ok
