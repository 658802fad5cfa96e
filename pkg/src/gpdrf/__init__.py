"""GP-DRF: an exact Gaussian-process input layer feeding deep random-feature layers."""

from .data import Dataset, load_sequences, load_tabular, split
from .drf import SpectraOption
from .inference import TrainConfig, elbo_estimate, select_inducing, train
from .kernels import ArdKernel, SpectrumKernel, gram
from .model import GPDRF, ModelConfig, build_model
from .predict import bhattacharyya, evaluate, posterior_samples, uncertainty_report

__all__ = [
    "ArdKernel",
    "Dataset",
    "GPDRF",
    "ModelConfig",
    "SpectraOption",
    "SpectrumKernel",
    "TrainConfig",
    "bhattacharyya",
    "build_model",
    "elbo_estimate",
    "evaluate",
    "gram",
    "load_sequences",
    "load_tabular",
    "posterior_samples",
    "select_inducing",
    "split",
    "train",
    "uncertainty_report",
]
