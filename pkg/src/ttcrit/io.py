"""Save and load TT objects as ``.npz`` archives (debugging aid).

Layout: ``kind`` ("vector" | "matrix" | "qtt-vector" | "qtt-matrix"),
``levels`` (QTT only) and one array ``core_<k>`` per core.
"""

from __future__ import annotations

import numpy as np

from .exceptions import ValidationError
from .qtt import QTTMatrix, QTTVector
from .tt import TTMatrix, TTVector

__all__ = ["save_tt", "load_tt"]

_KINDS = {QTTVector: "qtt-vector", QTTMatrix: "qtt-matrix", TTVector: "vector", TTMatrix: "matrix"}


def save_tt(path, x) -> None:
    kind = next((k for cls, k in _KINDS.items() if isinstance(x, cls)), None)
    if kind is None:
        raise ValidationError(f"cannot serialize {type(x).__name__}")
    arrays = {f"core_{k}": c for k, c in enumerate(x.cores)}
    levels = np.asarray(getattr(x, "levels", ()), dtype=np.int64)
    np.savez(path, kind=np.array(kind), levels=levels, n_cores=np.array(len(x.cores)), **arrays)


def load_tt(path):
    with np.load(path, allow_pickle=False) as f:
        try:
            kind = str(f["kind"])
            cores = [f[f"core_{k}"] for k in range(int(f["n_cores"]))]
            levels = tuple(int(v) for v in f["levels"])
        except KeyError as exc:
            raise ValidationError(f"not a TT archive: missing {exc}") from None
    if kind == "vector":
        return TTVector(cores)
    if kind == "matrix":
        return TTMatrix(cores)
    if kind == "qtt-vector":
        return QTTVector(cores, levels)
    if kind == "qtt-matrix":
        return QTTMatrix(cores, levels)
    raise ValidationError(f"unknown TT archive kind {kind!r}")
