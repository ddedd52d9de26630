"""Quantized tensor trains: every mode has size 2.

Bit order is little-endian and fixed package-wide: inside one source mode of
size ``2**l`` the first quantized mode carries the least significant bit,
``i = i_1 + 2 i_2 + ... + 2**(l-1) i_l``.  Source modes keep their order, so a
QTT over source modes ``(n_1, ..., n_d)`` has ``sum(levels)`` binary modes
laid out mode by mode.

:class:`QTTVector` and :class:`QTTMatrix` are ordinary TT objects that also
remember ``levels`` (bits per source mode) so they can be mapped back to the
natural C-ordered index space.
"""

from __future__ import annotations

import numpy as np

from .exceptions import ShapeError, ValidationError
from .tt import TTMatrix, TTVector, tt_svd
from .validation import check_matrix, is_power_of_two, log2_exact

__all__ = [
    "QTTVector",
    "QTTMatrix",
    "quantize_vector",
    "dequantize_vector",
    "quantize_tensor",
    "quantize_tt",
    "matrix_to_qtt",
    "tt_operator_to_qtt",
    "natural_permutation",
]


def natural_permutation(levels) -> np.ndarray:
    """Map from QTT row-major linear index to the natural C-order index.

    ``perm[q]`` is the natural index of the element stored at position ``q``
    when the binary train is expanded in C order.
    """
    levels = [int(l) for l in levels]
    n = sum(levels)
    if n == 0:
        return np.zeros(1, dtype=np.int64)
    # bits[q, p] = value of QTT bit p for linear position q (C order, p=0 slowest)
    q = np.arange(2**n, dtype=np.int64)
    bits = (q[:, None] >> np.arange(n - 1, -1, -1)) & 1
    natural = np.zeros(2**n, dtype=np.int64)
    pos = 0
    for l in levels:
        idx = np.zeros(2**n, dtype=np.int64)
        for b in range(l):
            idx |= bits[:, pos + b] << b
        natural = natural * (1 << l) + idx
        pos += l
    return natural


def _bit_axes(levels):
    """Axis permutation turning little-endian bit axes into MSB-first per mode."""
    axes = []
    pos = 0
    for l in levels:
        axes.extend(range(pos + l - 1, pos - 1, -1))
        pos += l
    return axes


class QTTVector(TTVector):
    """TTVector with binary modes plus the source layout ``levels``."""

    def __init__(self, cores, levels=None, check=True):
        super().__init__(cores, check=check)
        if any(n != 2 for n in self.shape):
            raise ShapeError(f"QTT modes must all have size 2, got {self.shape}")
        self.levels = tuple(int(l) for l in (levels if levels is not None else (self.ndim,)))
        if sum(self.levels) != self.ndim:
            raise ShapeError(f"levels {self.levels} do not add up to {self.ndim} modes")

    @classmethod
    def wrap(cls, x: TTVector, levels):
        return cls(x.cores, levels, check=False)

    @property
    def source_shape(self):
        return tuple(2**l for l in self.levels)

    @property
    def source_length(self):
        return 2**self.ndim

    def to_tensor(self) -> np.ndarray:
        """Dense tensor over the source modes."""
        t = self.full()
        t = t.transpose(_bit_axes(self.levels)) if self.ndim > 1 else t
        return t.reshape(self.source_shape)

    def to_dense(self) -> np.ndarray:
        """Natural C-ordered vector."""
        return self.to_tensor().reshape(-1)

    def __repr__(self):
        return f"QTTVector(levels={self.levels}, ranks={self.ranks})"


class QTTMatrix(TTMatrix):
    """TTMatrix with 2x2 mode blocks plus the source layout ``levels``."""

    def __init__(self, cores, levels=None, check=True):
        super().__init__(cores, check=check)
        if any(n != 2 for n in self.row_sizes + self.col_sizes):
            raise ShapeError("QTT-matrix modes must all be 2x2")
        self.levels = tuple(int(l) for l in (levels if levels is not None else (self.ndim,)))
        if sum(self.levels) != self.ndim:
            raise ShapeError(f"levels {self.levels} do not add up to {self.ndim} modes")

    @classmethod
    def wrap(cls, a: TTMatrix, levels):
        return cls(a.cores, levels, check=False)

    @property
    def source_shape(self):
        n = 2**self.ndim
        return (n, n)

    def to_dense(self) -> np.ndarray:
        """Expand to the natural-order dense matrix."""
        out = self.full()
        inv = np.argsort(natural_permutation(self.levels))
        return out[np.ix_(inv, inv)]

    def matmat(self, x) -> np.ndarray:
        """Apply to natural-order columns; the result is in natural order too."""
        x = np.asarray(x, dtype=float)
        perm = natural_permutation(self.levels)
        y = super().matmat(x[perm])
        out = np.empty_like(y)
        out[perm] = y
        return out

    def __repr__(self):
        return f"QTTMatrix(levels={self.levels}, ranks={self.ranks})"


def quantize_tensor(x, eps=1e-14, max_rank=None) -> QTTVector:
    """QTT of a dense tensor whose mode sizes are powers of two."""
    x = np.asarray(x, dtype=float)
    levels = [log2_exact(n) for n in x.shape]
    n = sum(levels)
    if n == 0:
        raise ValidationError("tensor has no binary modes to quantize")
    t = x.reshape([2] * n)
    # inverse of _bit_axes is itself (it reverses inside each block)
    t = t.transpose(_bit_axes(levels))
    return QTTVector(tt_svd(t, eps, max_rank=max_rank).cores, levels)


def quantize_vector(v, eps=1e-14, max_rank=None) -> QTTVector:
    """QTT of a vector of length ``2**n`` (n >= 1)."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ShapeError("expected a vector")
    if v.size < 2 or not is_power_of_two(v.size):
        raise ValidationError(f"vector length {v.size} must be a power of two >= 2")
    return quantize_tensor(v, eps, max_rank)


def dequantize_vector(q: QTTVector) -> np.ndarray:
    return q.to_dense()


def _split_core(core, eps):
    """Quantize one TT core ``(r0, 2**l, r1)`` into ``l`` binary cores."""
    r0, n, r1 = core.shape
    l = log2_exact(n)
    if l == 0:
        return [], core[:, 0, :]
    t = core.reshape([r0] + [2] * l + [r1])
    # bits MSB-first -> LSB-first
    t = t.transpose([0] + list(range(l, 0, -1)) + [l + 1])
    shape = t.shape
    tt = tt_svd(t.reshape((r0,) + shape[1:-1] + (r1,)), eps)
    cores = tt.cores
    # cores[0] is (1, r0, a), cores[-1] is (b, r1, 1): fold them into the binary cores
    left = cores[0][0]  # (r0, a)
    right = cores[-1][..., 0]  # (b, r1)
    mid = cores[1:-1]
    mid[0] = np.einsum("ra,anb->rnb", left, mid[0])
    mid[-1] = np.einsum("anb,bs->ans", mid[-1], right)
    return mid, None


def quantize_tt(x: TTVector, eps=1e-14) -> QTTVector:
    """Convert a TT vector with power-of-two mode sizes into QTT, core by core."""
    levels = [log2_exact(n) for n in x.shape]
    out = []
    carry = None
    for core in x.cores:
        if carry is not None:
            core = np.einsum("ab,bnc->anc", carry, core)
            carry = None
        binary, scalar_map = _split_core(core, eps)
        if binary:
            out.extend(binary)
        else:
            carry = scalar_map
    if carry is not None:
        if not out:
            raise ValidationError("tensor has no binary modes to quantize")
        out[-1] = np.einsum("anb,bc->anc", out[-1], carry)
    return QTTVector(out, levels)


def matrix_to_qtt(m, eps=1e-14, max_rank=None) -> QTTMatrix:
    """QTT-matrix of a ``2**n x 2**n`` matrix.

    Reshape into a ``2 x ... x 2`` tensor, interleave row and column bits as
    ``(i_1, j_1, i_2, j_2, ...)``, then TT-SVD over the merged 4-sized modes.
    """
    m = check_matrix(m, "matrix", square=True)
    n = m.shape[0]
    if n < 2 or not is_power_of_two(n):
        raise ValidationError(f"matrix side {n} must be a power of two >= 2")
    l = log2_exact(n)
    # F-order reshape gives little-endian row bits then column bits
    t = m.reshape([2] * (2 * l), order="F")
    perm = [ax for b in range(l) for ax in (b, l + b)]
    t = t.transpose(perm).reshape([4] * l)
    tt = tt_svd(t, eps, max_rank=max_rank)
    return QTTMatrix([c.reshape(c.shape[0], 2, 2, c.shape[2]) for c in tt.cores], (l,))


def tt_operator_to_qtt(a, eps=1e-14) -> QTTMatrix:
    """Convert a rank-1 TT-matrix (or its list of factors) into QTT.

    Each square factor of size ``2**l_k`` becomes ``l_k`` binary cores; the
    per-factor trains are concatenated.  Factors of size one are scalars and
    are folded into a neighbouring core.
    """
    if isinstance(a, TTMatrix):
        if any(r != 1 for r in a.ranks):
            raise ValidationError("tt_operator_to_qtt expects a rank-1 TT-matrix")
        factors = [c[0, :, :, 0] for c in a.cores]
    else:
        factors = [check_matrix(f, "factor") for f in a]
    cores = []
    levels = []
    scale = 1.0
    for f in factors:
        if f.shape[0] != f.shape[1]:
            raise ShapeError(f"factor must be square, got {f.shape}")
        if not is_power_of_two(f.shape[0]):
            raise ValidationError(f"factor size {f.shape[0]} must be a power of two")
        if f.shape[0] == 1:
            scale *= float(f[0, 0])
            levels.append(0)
            continue
        q = matrix_to_qtt(f, eps)
        cores.extend(q.cores)
        levels.append(q.ndim)
    if not cores:
        raise ValidationError("operator has no binary modes")
    cores[0] = cores[0] * scale
    return QTTMatrix(cores, levels)
