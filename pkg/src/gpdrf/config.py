"""Run configuration: a flat, versioned ``key = value`` text file.

Lines starting with ``#`` and blank lines are ignored.  Sequences are comma
separated, booleans are ``true``/``false`` and ``none`` clears optional
values.  Unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields

from .errors import ConfigurationError, ParseError

CONFIG_VERSION = 1


@dataclass
class RunConfig:
    format_version: int = CONFIG_VERSION
    task: str = "regression"  # regression | classification
    model: str = "gpdrf"  # gpdrf | gp | drf
    data: str = None
    test_data: str = None
    label_column: str = "y"
    input_kind: str = "vector"  # vector | sequence
    standardize: bool = True
    kernel: str = "ard"  # ard | spectrum
    kernel_alpha: float = 1.0
    kernel_gamma: float = 1.0  # initial lengthscale-square for every input dimension
    spectrum_k: int = 5
    spectrum_m: int = 1
    spectrum_sigma: float = None
    widths: tuple = (2, 1)
    features: tuple = (200,)
    noise_var: float = 0.1
    jitter: float = 1e-6
    shared_kernel: bool = True
    gp_init_scale: float = 0.1
    w_init_scale: float = 0.05
    fix_gp_noise: bool = False
    epochs: int = 1000
    learning_rate: float = 1e-5
    batch_size: int = 1
    samples: int = 100
    eval_draws: int = 100
    option: str = "var-fixed"
    seed: int = 0
    l2: float = 5e-4
    n_inducing: int = 200
    inducing_strategy: str = "kernel-medoids"
    out: str = "run"

    def validate(self):
        if self.format_version != CONFIG_VERSION:
            raise ConfigurationError(f"format_version: unsupported config version {self.format_version}")
        choices = {
            "task": ("regression", "classification"),
            "model": ("gpdrf", "gp", "drf"),
            "input_kind": ("vector", "sequence"),
            "kernel": ("ard", "spectrum"),
            "option": ("prior-fixed", "var-fixed", "var-resampled"),
            "inducing_strategy": ("random", "kernel-medoids"),
        }
        for key, allowed in choices.items():
            if getattr(self, key) not in allowed:
                raise ConfigurationError(f"{key}: must be one of {allowed}, got {getattr(self, key)!r}")
        if self.input_kind == "sequence" and self.kernel != "spectrum":
            raise ConfigurationError("kernel: sequence inputs need the spectrum kernel")
        if self.input_kind == "sequence" and self.model == "drf":
            raise ConfigurationError("model: the drf baseline needs fixed-size vector inputs")
        if self.input_kind == "sequence" and self.task != "classification":
            raise ConfigurationError("task: sequence data sets are classification tasks")
        for key in ("epochs", "batch_size", "samples", "eval_draws", "n_inducing"):
            if getattr(self, key) < (0 if key == "epochs" else 1):
                raise ConfigurationError(f"{key}: must be positive, got {getattr(self, key)}")
        if any(w < 1 for w in self.widths) or any(f < 1 for f in self.features):
            raise ConfigurationError("widths/features: all counts must be positive")
        return self


def _convert(field, raw, lineno):
    text = raw.strip()
    kind = field.type
    if text.lower() == "none":
        return None
    try:
        if kind == "bool":
            if text.lower() not in ("true", "false"):
                raise ValueError(f"expected true or false, got {text!r}")
            return text.lower() == "true"
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "tuple":
            return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise ParseError(f"{field.name}: {exc}", lineno) from None
    return text


def parse_config(text):
    by_name = {f.name: f for f in fields(RunConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {line!r}", lineno)
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in by_name:
            raise ParseError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ParseError(f"duplicate key {key!r}", lineno)
        values[key] = _convert(by_name[key], raw, lineno)
    return RunConfig(**values).validate()


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())


def format_config(cfg):
    lines = []
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        if v is None:
            text = "none"
        elif isinstance(v, bool):
            text = "true" if v else "false"
        elif isinstance(v, tuple):
            text = ",".join(str(x) for x in v)
        else:
            text = str(v)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"


def with_overrides(cfg, **kw):
    return dataclasses.replace(cfg, **{k: v for k, v in kw.items() if v is not None}).validate()
