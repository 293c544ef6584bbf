"""Decimal-text model files and training-history CSVs.

Model file layout, one record per line, fields separated by single spaces
and numbers by commas (17 significant digits)::

    descn-model 1
    kind <kind>
    ite_mode <mode>
    seed <int>
    standardizer none | standardizer <n_kept>
    keep <i,...>          # only with a standardizer
    mean <v,...>
    std <v,...>
    store <name> <n_layers>
    layer <out> <in> <activation>
    weight <row-major values>
    bias <values>
    ...
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .data_io import Standardizer, fmt_float
from .model import HEAD_ORDER, LOSS_TERMS, ModelParams
from .nn_core import ParamStore

MAGIC = "descn-model 1"
HISTORY_COLUMNS = ("epoch", "total") + LOSS_TERMS + ("lr", "empty_subsets")


class ModelFileError(ValueError):
    pass


def _vec(values) -> str:
    return ",".join(fmt_float(v) for v in np.ravel(values))


def _parse_vec(text: str) -> np.ndarray:
    if not text:
        return np.zeros(0)
    return np.array([float(t) for t in text.split(",")], dtype=np.float64)


def save_model(path, params: ModelParams, standardizer: Standardizer | None = None,
               ite_mode: str = "head_diff") -> None:
    lines = [MAGIC, f"kind {params.kind}", f"ite_mode {ite_mode}", f"seed {params.trunk.seed}"]
    if standardizer is None:
        lines.append("standardizer none")
    else:
        lines.append(f"standardizer {standardizer.keep.size}")
        lines.append("keep " + ",".join(str(int(i)) for i in standardizer.keep))
        lines.append("mean " + _vec(standardizer.mean))
        lines.append("std " + _vec(standardizer.std))
    stores = [("trunk", params.trunk)] + [(h, params.heads[h]) for h in HEAD_ORDER if h in params.heads]
    for name, store in stores:
        lines.append(f"store {name} {len(store.weights)}")
        for W, b, act in zip(store.weights, store.biases, store.activations):
            lines.append(f"layer {W.shape[0]} {W.shape[1]} {act}")
            lines.append("weight " + _vec(W))
            lines.append("bias " + _vec(b))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path):
    """Return ``(params, standardizer_or_None, ite_mode)``."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != MAGIC:
        raise ModelFileError(f"{path}: not a model file")
    it = iter(lines[1:])

    def field(expected):
        try:
            line = next(it)
        except StopIteration:
            raise ModelFileError(f"{path}: truncated, expected {expected!r}") from None
        key, _, rest = line.partition(" ")
        if key != expected:
            raise ModelFileError(f"{path}: expected {expected!r}, got {key!r}")
        return rest

    kind = field("kind")
    ite_mode = field("ite_mode")
    seed = int(field("seed"))
    st = field("standardizer")
    standardizer = None
    if st != "none":
        keep = np.array([int(t) for t in field("keep").split(",") if t], dtype=np.int64)
        standardizer = Standardizer(_parse_vec(field("mean")), _parse_vec(field("std")), keep)
    stores = {}
    for line in it:
        key, _, rest = line.partition(" ")
        if key != "store":
            raise ModelFileError(f"{path}: expected 'store', got {key!r}")
        name, n_layers = rest.split()
        weights, biases, acts = [], [], []
        for _ in range(int(n_layers)):
            out_dim, in_dim, act = field("layer").split()
            W = _parse_vec(field("weight")).reshape(int(out_dim), int(in_dim))
            weights.append(W)
            biases.append(_parse_vec(field("bias")))
            acts.append(act)
        stores[name] = ParamStore(weights, biases, acts, seed)
    if "trunk" not in stores:
        raise ModelFileError(f"{path}: no trunk store")
    trunk = stores.pop("trunk")
    return ModelParams(kind, trunk, stores), standardizer, ite_mode


def write_history(history, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HISTORY_COLUMNS)
        for row in history:
            out = []
            for col in HISTORY_COLUMNS:
                v = row.get(col, 0.0)
                out.append(str(v) if col in ("epoch", "empty_subsets") else fmt_float(v))
            writer.writerow(out)


def read_history(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = []
        for rec in csv.DictReader(fh):
            rows.append({k: (int(v) if k in ("epoch", "empty_subsets") else float(v)) for k, v in rec.items()})
    return rows
