"""Versioned JSON checkpoints for model parameters.

A checkpoint is a single JSON document::

    {"format_version": 1,
     "arch": {...},
     "scaler": {"mean": [...], "std": [...]} | null,
     "params": [...]}

Parameter values are written as decimal literals that round-trip 64-bit
floats exactly, in the flat layout declared by :mod:`glimmer.network`.
"""

from __future__ import annotations

import json
from typing import IO

import numpy as np

from .errors import CheckpointError, ShapeError
from .network import ArchConfig, ModelParams, param_count

FORMAT_VERSION = 1


def save_checkpoint(
    sink: str | IO,
    params: ModelParams,
    scaler_mean: np.ndarray | None = None,
    scaler_std: np.ndarray | None = None,
) -> None:
    """Write params (and the fitted scaler, if any) as a checkpoint document."""
    scaler = None
    if scaler_mean is not None:
        scaler = {
            "mean": [float(v) for v in np.asarray(scaler_mean).ravel()],
            "std": [float(v) for v in np.asarray(scaler_std).ravel()],
        }
    doc = {
        "format_version": FORMAT_VERSION,
        "arch": params.arch.to_dict(),
        "scaler": scaler,
        "params": [float(v) for v in params.vector],
    }
    text = json.dumps(doc, allow_nan=False)
    if isinstance(sink, str):
        with open(sink, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sink.write(text)


def load_checkpoint(
    source: str | IO, expect_arch: ArchConfig | None = None
) -> tuple[ModelParams, np.ndarray | None, np.ndarray | None]:
    """Read a checkpoint back into (params, scaler_mean, scaler_std).

    ``expect_arch`` asserts the stored architecture matches the one the
    caller requested; a mismatch is a :class:`ShapeError`. Truncated or
    malformed documents raise :class:`CheckpointError`.
    """
    if isinstance(source, str):
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = source.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"corrupt checkpoint: {exc}") from exc
    if not isinstance(doc, dict):
        raise CheckpointError("corrupt checkpoint: not a JSON object")

    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format_version {version!r} (expected {FORMAT_VERSION})")
    try:
        arch = ArchConfig.from_dict(doc["arch"])
        values = np.asarray(doc["params"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"corrupt checkpoint: {exc}") from exc

    if expect_arch is not None and arch != expect_arch:
        raise ShapeError(f"checkpoint arch {arch} does not match requested {expect_arch}")
    if values.shape != (param_count(arch),):
        raise CheckpointError(
            f"checkpoint has {values.size} parameters, arch needs {param_count(arch)}"
        )
    if not np.all(np.isfinite(values)):
        raise CheckpointError("checkpoint contains non-finite parameters")

    scaler = doc.get("scaler")
    mean = std = None
    if scaler is not None:
        try:
            mean = np.asarray(scaler["mean"], dtype=np.float64)
            std = np.asarray(scaler["std"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"corrupt scaler block: {exc}") from exc
        if mean.shape != std.shape:
            raise CheckpointError("scaler mean/std length mismatch")
    return ModelParams(arch, values), mean, std
