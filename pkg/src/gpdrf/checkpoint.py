"""Self-describing binary checkpoints.

Layout: 8-byte magic, uint32 format version, uint64 metadata length, UTF-8
JSON metadata (sorted keys), then float64 little-endian parameter blocks in
the order listed under ``metadata["blocks"]``.  Nothing time-dependent is
written, so identical models give identical bytes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict

import numpy as np

from .data import Standardizer
from .drf import SpectraOption
from .errors import CheckpointVersionError
from .kernels import ArdKernel, SpectrumKernel
from .model import ModelConfig, build_model

MAGIC = b"GPDRFCKP"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sIQ")


def kernel_to_dict(kernel):
    if kernel is None:
        return None
    if kernel.kind == "ard":
        return {"kind": "ard", "alpha": kernel.alpha, "gamma": list(kernel.gamma)}
    return {"kind": "spectrum", "k": kernel.k, "m": kernel.m, "alphabet": list(kernel.alphabet),
            "alpha": kernel.alpha, "normalize": kernel.normalize, "sigma": kernel.sigma}


def kernel_from_dict(d):
    if d is None:
        return None
    if d["kind"] == "ard":
        return ArdKernel(d["alpha"], tuple(d["gamma"]))
    return SpectrumKernel(d["k"], d["m"], tuple(d["alphabet"]), d["alpha"], d["normalize"], d["sigma"])


def _metadata(model, extra):
    gp = model.gp
    meta = {
        "format_version": FORMAT_VERSION,
        "config": asdict(model.config),
        "option": model.option.value,
        "input_kind": model.input_kind,
        "classes": list(model.classes) if model.classes is not None else None,
        "frozen_noise": model.frozen_noise,
        "kernel": kernel_to_dict(gp.kernel) if gp is not None else None,
        "whiten": gp.whiten if gp is not None else None,
        "sequence_pseudo_inputs": list(gp.pseudo_inputs) if gp is not None and gp.kernel.kind == "spectrum" else None,
        "standardizer_constant": list(model.standardizer.constant_columns) if model.standardizer else None,
        "extra": extra or {},
    }
    meta["config"]["widths"] = list(model.config.widths)
    meta["config"]["features"] = list(model.config.features)
    return meta


def _blocks(model):
    blocks = dict(sorted(model.parameters().items()))
    if model.gp is not None and model.gp.kernel.kind == "ard":
        blocks["aux.pseudo_inputs"] = model.gp.pseudo_inputs
    if model.standardizer is not None:
        blocks["aux.standardizer_mean"] = model.standardizer.mean
        blocks["aux.standardizer_scale"] = model.standardizer.scale
    return blocks


def dumps(model, extra=None):
    meta = _metadata(model, extra)
    blocks = _blocks(model)
    meta["blocks"] = [[name, list(np.shape(v))] for name, v in blocks.items()]
    text = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, len(text)), text]
    for v in blocks.values():
        parts.append(np.ascontiguousarray(v, dtype="<f8").tobytes())
    return b"".join(parts)


def save(model, path, extra=None):
    with open(path, "wb") as fh:
        fh.write(dumps(model, extra))


def read_header(raw):
    if len(raw) < _HEADER.size:
        raise CheckpointVersionError("checkpoint is truncated before the header ends")
    magic, version, n_meta = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointVersionError("not a GP-DRF checkpoint (bad magic bytes)")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"checkpoint format version {version} is not supported (expected {FORMAT_VERSION})")
    try:
        meta = json.loads(raw[_HEADER.size:_HEADER.size + n_meta].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointVersionError(f"checkpoint metadata is unreadable: {exc}") from None
    return meta, _HEADER.size + n_meta


def loads(raw):
    """Rebuild the model; returns ``(model, metadata)``."""
    meta, pos = read_header(raw)
    arrays = {}
    for name, shape in meta["blocks"]:
        n = int(np.prod(shape)) if shape else 1
        end = pos + 8 * n
        if end > len(raw):
            raise CheckpointVersionError(f"checkpoint is truncated inside block {name!r}")
        arrays[name] = np.frombuffer(raw[pos:end], dtype="<f8").reshape(shape).astype(np.float64)
        pos = end
    if pos != len(raw):
        raise CheckpointVersionError("checkpoint has trailing bytes")
    cfg = dict(meta["config"])
    cfg["widths"] = tuple(cfg["widths"])
    cfg["features"] = tuple(cfg["features"])
    config = ModelConfig(**cfg)
    kernel = kernel_from_dict(meta["kernel"])
    if kernel is None:
        inducing = None
    elif kernel.kind == "ard":
        inducing = arrays.pop("aux.pseudo_inputs")
    else:
        inducing = meta["sequence_pseudo_inputs"]
    standardizer = None
    if "aux.standardizer_mean" in arrays:
        standardizer = Standardizer(arrays.pop("aux.standardizer_mean"), arrays.pop("aux.standardizer_scale"),
                                    tuple(meta["standardizer_constant"] or ()))
    model = build_model(config, inducing, kernel, 0, SpectraOption.parse(meta["option"]), standardizer,
                        tuple(meta["classes"]) if meta["classes"] is not None else None, meta["input_kind"])
    if model.gp is not None:
        model.gp.whiten = bool(meta["whiten"])
    model.frozen_noise = meta["frozen_noise"]
    model.set_parameters(arrays)
    return model, meta


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
