"""Command-line entry point: ``gpdrf {train,evaluate,uncertainty,check}``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time

from . import checkpoint
from .checks import run_checks
from .config import RunConfig, format_config, load_config, with_overrides
from .data import load_sequences, load_tabular
from .drf import SpectraOption
from .errors import CompatibilityError, ConfigurationError, GPDRFError, ParseError
from .inference import TrainConfig, select_inducing, train
from .kernels import ArdKernel, SpectrumKernel
from .model import ModelConfig, build_model
from .predict import evaluate, uncertainty_report

log = logging.getLogger("gpdrf")

CHECKPOINT_NAME = "checkpoint.gpdrf"
TRACE_NAME = "trace.txt"


def load_training_data(cfg):
    if not cfg.data:
        raise ConfigurationError("data: no training data path given")
    if cfg.input_kind == "sequence":
        return load_sequences(cfg.data)
    return load_tabular(cfg.data, cfg.label_column, standardize=cfg.standardize, task=cfg.task)


def model_config(cfg, dataset):
    """Architecture after applying the baseline presets; validated before any compute."""
    likelihood = "gaussian" if cfg.task == "regression" else "softmax"
    n_classes = dataset.n_classes if cfg.task == "classification" else 1
    widths, features = tuple(cfg.widths), tuple(cfg.features)
    if cfg.model == "gp":
        widths, features = (widths[-1],), ()
    elif cfg.model == "drf":
        widths = (dataset.dim,) + widths[1:]
    return ModelConfig(kind=cfg.model, widths=widths, features=features, likelihood=likelihood,
                       n_classes=n_classes, shared_kernel=cfg.shared_kernel, jitter=cfg.jitter,
                       noise_var=cfg.noise_var, fix_gp_noise=cfg.fix_gp_noise, gp_init_scale=cfg.gp_init_scale,
                       w_init_scale=cfg.w_init_scale)


def make_kernel(cfg, dataset):
    if cfg.kernel == "ard":
        return ArdKernel(cfg.kernel_alpha, (cfg.kernel_gamma,) * dataset.dim)
    return SpectrumKernel(cfg.spectrum_k, cfg.spectrum_m, dataset.alphabet, cfg.kernel_alpha, True, cfg.spectrum_sigma)


def train_config(cfg):
    return TrainConfig(epochs=cfg.epochs, learning_rate=cfg.learning_rate, batch_size=cfg.batch_size,
                       samples=cfg.samples, eval_draws=cfg.eval_draws, option=cfg.option, seed=cfg.seed, l2=cfg.l2,
                       n_inducing=cfg.n_inducing, inducing_strategy=cfg.inducing_strategy)


def cmd_train(cfg):
    dataset = load_training_data(cfg)
    mcfg = model_config(cfg, dataset)
    tcfg = train_config(cfg)
    kernel = inducing = None
    if mcfg.kind != "drf":
        if cfg.n_inducing > len(dataset):
            raise ConfigurationError(f"n_inducing: {cfg.n_inducing} exceeds the {len(dataset)} training points")
        kernel = make_kernel(cfg, dataset)
        inducing = select_inducing(dataset.inputs, cfg.n_inducing, cfg.inducing_strategy, kernel, cfg.seed)
    model = build_model(mcfg, inducing, kernel, cfg.seed, SpectraOption.parse(cfg.option), dataset.standardizer,
                        dataset.classes, dataset.kind)
    t0 = time.perf_counter()
    result = train(dataset, model, tcfg,
                   callback=lambda e, v: log.info("epoch %d elbo %.6g", e, v))
    os.makedirs(cfg.out, exist_ok=True)
    ckpt = os.path.join(cfg.out, CHECKPOINT_NAME)
    checkpoint.save(model, ckpt, {"task": cfg.task, "label_column": cfg.label_column, "seed": cfg.seed})
    with open(os.path.join(cfg.out, TRACE_NAME), "w") as fh:
        fh.write("# epoch\telbo\n")
        for e, v in enumerate(result.trace):
            fh.write(f"{e}\t{v!r}\n")
    with open(os.path.join(cfg.out, "config.txt"), "w") as fh:
        fh.write(format_config(cfg))
    final = result.trace[-1] if result.trace else float("nan")
    print(f"trained {mcfg.kind} on {len(dataset)} points in {time.perf_counter() - t0:.1f}s; final ELBO {final:.6g}")
    print(f"wrote {ckpt}")
    return 0


def load_test_data(path, model, meta):
    extra = meta.get("extra", {})
    task = extra.get("task", "classification" if model.likelihood.kind == "softmax" else "regression")
    try:
        if model.input_kind == "sequence":
            ds = load_sequences(path, alphabet=model.gp.kernel.alphabet, classes=model.classes)
        else:
            ds = load_tabular(path, extra.get("label_column", "y"), task=task, standardizer=model.standardizer,
                              classes=model.classes)
    except ParseError as exc:
        raise CompatibilityError(f"test data does not fit this {task} checkpoint ({model.input_kind} inputs): {exc}") \
            from None
    if model.input_kind != "sequence":
        expect = model.config.widths[0] if model.gp is None else model.gp.pseudo_inputs.shape[1]
        if ds.dim != expect:
            raise CompatibilityError(f"test data has {ds.dim} features, the checkpoint expects {expect}")
    return ds


def cmd_evaluate(args):
    model, meta = checkpoint.load(args.checkpoint)
    ds = load_test_data(args.data, model, meta)
    metric = evaluate(ds, model, args.samples, args.draws, args.seed)
    text = (f"metric\t{metric.name}\nvalue\t{metric.value!r}\nS\t{args.samples}\nT\t{args.draws}\n"
            f"seed\t{args.seed}\nn\t{len(ds)}\n")
    _emit(text, args.out)
    return 0


def cmd_uncertainty(args):
    model, meta = checkpoint.load(args.checkpoint)
    if model.likelihood.kind != "softmax":
        raise CompatibilityError("uncertainty analysis needs a classification checkpoint")
    ds = load_test_data(args.data, model, meta)
    report = uncertainty_report(ds, model, args.samples, args.draws, args.seed)
    _emit(report.to_text(), args.out)
    return 0


def cmd_check(args):
    ok = True
    if args.checkpoint:
        checkpoint.load(args.checkpoint)
        print(f"PASS checkpoint-readable: {args.checkpoint}")
    n_features = 4096
    if args.config:
        cfg = load_config(args.config)
        n_features = max(cfg.features) if cfg.features else n_features
    for res in run_checks(n_features):
        print(res.line())
        ok &= res.passed
    return 0 if ok else 1


def _emit(text, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def build_parser():
    p = argparse.ArgumentParser(prog="gpdrf", description="GP-DRF training, evaluation and diagnostics")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config")
        sp.add_argument("--checkpoint")
        sp.add_argument("--data")
        sp.add_argument("--out")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--samples", type=int, help="S, Monte-Carlo samples")
        sp.add_argument("--draws", type=int, help="T, posterior draws")
        sp.add_argument("--model", choices=("gpdrf", "gp", "drf"))

    for name in ("train", "evaluate", "uncertainty", "check"):
        common(sub.add_parser(name))
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "train":
            cfg = load_config(args.config) if args.config else RunConfig()
            cfg = with_overrides(cfg, data=args.data, out=args.out, seed=args.seed, samples=args.samples,
                                 eval_draws=args.draws, model=args.model)
            return cmd_train(cfg)
        if args.command == "check":
            return cmd_check(args)
        for flag in ("checkpoint", "data"):
            if not getattr(args, flag):
                raise ConfigurationError(f"--{flag} is required for {args.command}")
        args.seed = 0 if args.seed is None else args.seed
        args.samples = 100 if args.samples is None else args.samples
        args.draws = 100 if args.draws is None else args.draws
        return cmd_evaluate(args) if args.command == "evaluate" else cmd_uncertainty(args)
    except (GPDRFError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
