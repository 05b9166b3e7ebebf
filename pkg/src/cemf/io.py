"""On-disk model directory and small JSON helpers."""

from __future__ import annotations

import json
import os

import numpy as np

from .core import FactorModel, Hyperparams
from .errors import ParseError

MODEL_HEADER = "model.json"
FORMAT_VERSION = 1


def save_model(model: FactorModel, directory) -> None:
    """Write ``X.f64`` and ``Y.f64`` as raw little-endian float64 in
    column-major order, with dims, hyperparameters and loss trace in
    ``model.json``."""
    os.makedirs(directory, exist_ok=True)
    # column-major d x N is the same byte order as row-major N x d
    np.ascontiguousarray(model.X.T, dtype="<f8").tofile(os.path.join(directory, "X.f64"))
    np.ascontiguousarray(model.Y.T, dtype="<f8").tofile(os.path.join(directory, "Y.f64"))
    header = {
        "format_version": FORMAT_VERSION,
        "dtype": "float64",
        "byte_order": "little",
        "layout": "column-major",
        "d": model.d,
        "n_users": model.n_users,
        "n_items": model.n_items,
        "mode": model.mode,
        "hyperparams": model.hyperparams.to_dict(),
        "loss_trace": model.loss_trace,
    }
    dump_json(header, os.path.join(directory, MODEL_HEADER))


def load_model(directory) -> FactorModel:
    path = os.path.join(directory, MODEL_HEADER)
    try:
        with open(path, encoding="utf-8") as fh:
            header = json.load(fh)
    except FileNotFoundError:
        raise ParseError("model header not found", path) from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", path, exc.lineno) from None
    d, n, m = header["d"], header["n_users"], header["n_items"]
    X = _read_block(os.path.join(directory, "X.f64"), n, d)
    Y = _read_block(os.path.join(directory, "Y.f64"), m, d)
    return FactorModel(
        X.T.copy(),
        Y.T.copy(),
        Hyperparams.from_dict(header["hyperparams"]),
        list(header.get("loss_trace", [])),
        header.get("mode", "wmf"),
    )


def _read_block(path, cols, d):
    arr = np.fromfile(path, dtype="<f8")
    if arr.size != cols * d:
        raise ParseError(f"expected {cols * d} float64 values, found {arr.size}", path)
    return arr.reshape(cols, d).astype(np.float64)


def dump_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
