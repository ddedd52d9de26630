"""Tensor trains: vectors (3-way cores) and matrices (4-way cores).

A :class:`TTVector` with cores ``G_k`` of shape ``(r_{k-1}, n_k, r_k)``
represents the tensor

    X[i_1, ..., i_d] = G_1[:, i_1, :] @ G_2[:, i_2, :] @ ... @ G_d[:, i_d, :]

with boundary ranks ``r_0 = r_d = 1``.  A :class:`TTMatrix` has cores of shape
``(r_{k-1}, m_k, n_k, r_k)`` and represents a ``prod(m) x prod(n)`` matrix
whose row and column multi-indices are linearized in C order, so a rank-1
TT-matrix expands to ``kron(A_1, ..., A_d)``.

Objects are treated as immutable; every operation returns a new object.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .exceptions import ShapeError
from .validation import check_random_state

__all__ = [
    "TTVector",
    "TTMatrix",
    "tt_svd",
    "tt_round",
    "tt_add",
    "tt_scale",
    "tt_dot",
    "tt_norm",
    "tt_sum",
    "ttmatrix_from_factors",
    "tt_matvec_exact",
    "tt_mode_apply",
    "tt_mode_contract",
    "truncation_rank",
]


def truncation_rank(s, delta, max_rank=None):
    """Smallest rank whose discarded singular-value tail has 2-norm <= ``delta``.

    Zero singular values are always dropped and at least one is kept.
    """
    s = np.asarray(s)
    if s.size == 0:
        return 1
    # tail[r] = ||s[r:]||
    tail = np.sqrt(np.cumsum((s**2)[::-1]))[::-1]
    tail = np.append(tail, 0.0)
    r = int(np.argmax(tail <= delta))
    r = max(1, min(r, int(np.count_nonzero(s > 0)) or 1))
    if max_rank is not None:
        r = min(r, int(max_rank))
    return r


def _svd(a):
    try:
        return np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError:
        # gesdd occasionally fails on nearly rank-deficient input; gesvd is slower but robust
        import scipy.linalg as sla

        return sla.svd(a, full_matrices=False, lapack_driver="gesvd")


class TTVector:
    """Tensor in TT format.

    Parameters
    ----------
    cores : sequence of ndarray
        Cores of shape ``(r_{k-1}, n_k, r_k)``.
    """

    __array_priority__ = 20

    def __init__(self, cores: Sequence[np.ndarray], check: bool = True):
        self.cores = [np.asarray(c, dtype=float) for c in cores]
        if check:
            self._check()

    def _check(self):
        if not self.cores:
            raise ShapeError("a tensor train needs at least one core")
        for k, c in enumerate(self.cores):
            if c.ndim != 3:
                raise ShapeError(f"core {k} must be 3-way, got shape {c.shape}")
        if self.cores[0].shape[0] != 1 or self.cores[-1].shape[2] != 1:
            raise ShapeError("boundary ranks must be 1")
        for k in range(len(self.cores) - 1):
            if self.cores[k].shape[2] != self.cores[k + 1].shape[0]:
                raise ShapeError(f"rank mismatch between cores {k} and {k + 1}")

    # -- structure -------------------------------------------------------
    @property
    def ndim(self) -> int:
        return len(self.cores)

    @property
    def shape(self) -> tuple:
        return tuple(c.shape[1] for c in self.cores)

    mode_sizes = shape

    @property
    def ranks(self) -> tuple:
        return (1,) + tuple(c.shape[2] for c in self.cores)

    @property
    def size(self) -> int:
        """Number of stored core elements."""
        return int(sum(c.size for c in self.cores))

    @property
    def full_size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))

    def __repr__(self):
        return f"TTVector(shape={self.shape}, ranks={self.ranks})"

    # -- conversion ------------------------------------------------------
    @classmethod
    def from_dense(cls, x, eps=1e-14, max_rank=None):
        return tt_svd(x, eps, max_rank=max_rank)

    def full(self) -> np.ndarray:
        """Reconstruct the dense tensor."""
        res = self.cores[0].reshape(self.shape[0], -1)
        for c in self.cores[1:]:
            res = res @ c.reshape(c.shape[0], -1)
            res = res.reshape(-1, c.shape[2])
        return res.reshape(self.shape)

    def copy(self):
        return TTVector([c.copy() for c in self.cores], check=False)

    @classmethod
    def ones(cls, shape):
        return cls([np.ones((1, n, 1)) for n in shape])

    @classmethod
    def rank1(cls, vectors):
        return cls([np.asarray(v, dtype=float).reshape(1, -1, 1) for v in vectors])

    @classmethod
    def random(cls, shape, rank=2, seed=None, positive=False):
        """Random tensor train; ``positive=True`` gives entrywise-positive cores."""
        rng = check_random_state(seed)
        d = len(shape)
        if np.isscalar(rank):
            ranks = [1] + [int(rank)] * (d - 1) + [1]
        else:
            ranks = [1] + list(rank) + [1]
        # no interior rank may exceed what the mode sizes can support
        for k in range(1, d):
            left = int(np.prod(shape[:k], dtype=np.int64))
            right = int(np.prod(shape[k:], dtype=np.int64))
            ranks[k] = max(1, min(ranks[k], left, right))
        cores = []
        for k, n in enumerate(shape):
            if positive:
                c = rng.random((ranks[k], n, ranks[k + 1])) + 0.5
            else:
                c = rng.standard_normal((ranks[k], n, ranks[k + 1]))
            cores.append(c)
        return cls(cores)

    # -- arithmetic ------------------------------------------------------
    def __add__(self, other):
        return tt_add(self, other)

    def __sub__(self, other):
        return tt_add(self, tt_scale(other, -1.0))

    def __mul__(self, c):
        if np.isscalar(c):
            return tt_scale(self, c)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, c):
        return tt_scale(self, 1.0 / c)

    def __neg__(self):
        return tt_scale(self, -1.0)

    def norm(self):
        return tt_norm(self)

    def dot(self, other):
        return tt_dot(self, other)

    def sum(self):
        return tt_sum(self)

    def round(self, eps=1e-14, max_rank=None):
        return tt_round(self, eps, max_rank=max_rank)

    # -- orthogonalization ----------------------------------------------
    def orthogonalize_right(self):
        """Return an equivalent train whose cores 2..d are right-orthonormal."""
        cores = [c.copy() for c in self.cores]
        for k in range(len(cores) - 1, 0, -1):
            r0, n, r1 = cores[k].shape
            q, r = np.linalg.qr(cores[k].reshape(r0, n * r1).T)
            cores[k] = q.T.reshape(-1, n, r1)
            cores[k - 1] = np.einsum("anb,cb->anc", cores[k - 1], r)
        return TTVector(cores, check=False)

    def orthogonalize_left(self):
        """Return an equivalent train whose cores 1..d-1 are left-orthonormal."""
        cores = [c.copy() for c in self.cores]
        for k in range(len(cores) - 1):
            r0, n, r1 = cores[k].shape
            q, r = np.linalg.qr(cores[k].reshape(r0 * n, r1))
            cores[k] = q.reshape(r0, n, -1)
            cores[k + 1] = np.einsum("ab,bnc->anc", r, cores[k + 1])
        return TTVector(cores, check=False)

    def reversed(self):
        """Train of the mode-reversed tensor (used for right-to-left sweeps)."""
        return TTVector([c.transpose(2, 1, 0) for c in self.cores[::-1]], check=False)


class TTMatrix:
    """Linear operator in TT-matrix format.

    Parameters
    ----------
    cores : sequence of ndarray
        Cores of shape ``(r_{k-1}, m_k, n_k, r_k)``.
    """

    __array_priority__ = 20

    def __init__(self, cores: Sequence[np.ndarray], check: bool = True):
        self.cores = [np.asarray(c, dtype=float) for c in cores]
        if check:
            self._check()

    def _check(self):
        if not self.cores:
            raise ShapeError("a TT-matrix needs at least one core")
        for k, c in enumerate(self.cores):
            if c.ndim != 4:
                raise ShapeError(f"core {k} must be 4-way, got shape {c.shape}")
        if self.cores[0].shape[0] != 1 or self.cores[-1].shape[3] != 1:
            raise ShapeError("boundary ranks must be 1")
        for k in range(len(self.cores) - 1):
            if self.cores[k].shape[3] != self.cores[k + 1].shape[0]:
                raise ShapeError(f"rank mismatch between cores {k} and {k + 1}")

    @property
    def ndim(self):
        return len(self.cores)

    @property
    def row_sizes(self):
        return tuple(c.shape[1] for c in self.cores)

    @property
    def col_sizes(self):
        return tuple(c.shape[2] for c in self.cores)

    @property
    def shape(self):
        return (
            int(np.prod(self.row_sizes, dtype=np.int64)),
            int(np.prod(self.col_sizes, dtype=np.int64)),
        )

    @property
    def ranks(self):
        return (1,) + tuple(c.shape[3] for c in self.cores)

    @property
    def size(self):
        return int(sum(c.size for c in self.cores))

    @property
    def full_size(self):
        m, n = self.shape
        return m * n

    def __repr__(self):
        return f"TTMatrix(rows={self.row_sizes}, cols={self.col_sizes}, ranks={self.ranks})"

    def copy(self):
        return TTMatrix([c.copy() for c in self.cores], check=False)

    @classmethod
    def from_factors(cls, factors):
        return ttmatrix_from_factors(factors)

    @classmethod
    def identity(cls, sizes):
        return ttmatrix_from_factors([np.eye(n) for n in sizes])

    @classmethod
    def from_dense(cls, a, row_sizes, col_sizes, eps=1e-14, max_rank=None):
        """TT-SVD of a dense matrix with the given row/column mode sizes."""
        a = np.asarray(a, dtype=float)
        d = len(row_sizes)
        t = a.reshape(tuple(row_sizes) + tuple(col_sizes))
        perm = [ax for k in range(d) for ax in (k, d + k)]
        t = t.transpose(perm).reshape([m * n for m, n in zip(row_sizes, col_sizes)])
        vec = tt_svd(t, eps, max_rank=max_rank)
        return cls(
            [c.reshape(c.shape[0], m, n, c.shape[2]) for c, m, n in zip(vec.cores, row_sizes, col_sizes)]
        )

    def as_vector(self):
        """View as a TTVector over merged ``(m_k n_k)`` modes."""
        return TTVector([c.reshape(c.shape[0], -1, c.shape[3]) for c in self.cores], check=False)

    @classmethod
    def _from_vector(cls, v, row_sizes, col_sizes):
        return cls(
            [c.reshape(c.shape[0], m, n, c.shape[2]) for c, m, n in zip(v.cores, row_sizes, col_sizes)],
            check=False,
        )

    def row_blocks(self):
        """Yield ``(first_row, block)`` pairs that tile the expanded matrix.

        The train is split at the bond that balances the two partial products
        and rows are produced one left index at a time, so only one block of
        the expansion exists at any moment.
        """
        d = self.ndim
        rows = self.row_sizes
        cols = self.col_sizes
        if d == 1:
            yield 0, self.cores[0][0, :, :, 0].copy()
            return
        sizes = [m * n for m, n in zip(rows, cols)]
        best, split = None, 1
        for s in range(1, d):
            cost = max(np.prod(sizes[:s]), np.prod(sizes[s:])) * self.ranks[s]
            if best is None or cost < best:
                best, split = cost, s
        left = self.cores[0][0]  # (m, n, r)
        for c in self.cores[1:split]:
            ml, nl, _ = left.shape
            left = np.einsum("MNa,amnb->MmNnb", left, c).reshape(ml * c.shape[1], nl * c.shape[2], c.shape[3])
        right = self.cores[-1][..., 0]  # (r, m, n)
        for c in self.cores[split:-1][::-1]:
            _, mr, nr = right.shape
            right = np.einsum("amnb,bMN->amMnN", c, right).reshape(c.shape[0], c.shape[1] * mr, c.shape[2] * nr)
        ml, nl, r = left.shape
        _, mr, nr = right.shape
        rmat = right.reshape(r, mr * nr)
        for i in range(ml):
            block = (left[i] @ rmat).reshape(nl, mr, nr)
            yield i * mr, block.transpose(1, 0, 2).reshape(mr, nl * nr)

    def full(self) -> np.ndarray:
        """Expand to a dense ``prod(m) x prod(n)`` array."""
        out = np.empty((int(np.prod(self.row_sizes)), int(np.prod(self.col_sizes))))
        for start, block in self.row_blocks():
            out[start : start + block.shape[0]] = block
        return out

    def matmat(self, x) -> np.ndarray:
        """Apply to the columns of a dense ``(prod(n), b)`` array (or a vector)."""
        x = np.asarray(x, dtype=float)
        vec = x.ndim == 1
        if vec:
            x = x[:, None]
        if x.shape[0] != int(np.prod(self.col_sizes)):
            raise ShapeError(f"operand has {x.shape[0]} rows, operator expects {int(np.prod(self.col_sizes))}")
        b = x.shape[1]
        t = x.reshape(1, 1, self.col_sizes[0], -1)
        for k, c in enumerate(self.cores):
            # t (done, r, n_k, rest) with core (r, m, n_k, r')
            done, _, nk, rest = t.shape
            t = np.tensordot(t, c, axes=([1, 2], [0, 2]))  # (done, rest, m, r')
            t = t.transpose(0, 2, 3, 1).reshape(done * c.shape[1], c.shape[3], -1)
            if k + 1 < self.ndim:
                t = t.reshape(t.shape[0], t.shape[1], self.col_sizes[k + 1], -1)
        y = t.reshape(-1, b)
        return y[:, 0] if vec else y

    # -- arithmetic ------------------------------------------------------
    def __add__(self, other):
        if not isinstance(other, TTMatrix):
            return NotImplemented
        if self.row_sizes != other.row_sizes or self.col_sizes != other.col_sizes:
            raise ShapeError("TT-matrix mode sizes differ")
        return TTMatrix._from_vector(tt_add(self.as_vector(), other.as_vector()), self.row_sizes, self.col_sizes)

    def __sub__(self, other):
        return self + (-1.0) * other

    def __mul__(self, c):
        if np.isscalar(c):
            cores = [c_.copy() for c_ in self.cores]
            cores[0] = cores[0] * c
            return TTMatrix(cores, check=False)
        return NotImplemented

    __rmul__ = __mul__

    def __neg__(self):
        return (-1.0) * self

    def __matmul__(self, other):
        if isinstance(other, TTVector):
            return tt_matvec_exact(self, other)
        if isinstance(other, TTMatrix):
            return tt_matmul(self, other)
        return NotImplemented

    def round(self, eps=1e-14, max_rank=None):
        v = tt_round(self.as_vector(), eps, max_rank=max_rank)
        return TTMatrix._from_vector(v, self.row_sizes, self.col_sizes)

    def norm(self):
        """Frobenius norm."""
        return tt_norm(self.as_vector())

    def transpose(self):
        return TTMatrix([c.transpose(0, 2, 1, 3) for c in self.cores], check=False)

    T = property(transpose)

    def reversed(self):
        return TTMatrix([c.transpose(3, 1, 2, 0) for c in self.cores[::-1]], check=False)

    def diag(self) -> TTVector:
        """Diagonal of a square TT-matrix as a TTVector."""
        return TTVector([np.einsum("annb->anb", c) for c in self.cores], check=False)


# ---------------------------------------------------------------------------
# decomposition and rounding


def tt_svd(x, eps=1e-14, max_rank=None) -> TTVector:
    """TT-SVD of a dense tensor with relative Frobenius accuracy ``eps``.

    Every unfolding is truncated at ``eps * ||x|| / sqrt(d - 1)`` so the total
    error is at most ``eps * ||x||``.
    """
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise ShapeError("cannot decompose an empty tensor")
    if x.ndim == 0:
        x = x.reshape(1)
    shape = x.shape
    d = len(shape)
    if d == 1:
        return TTVector([x.reshape(1, -1, 1).copy()])
    delta = eps * np.linalg.norm(x) / math.sqrt(d - 1)
    cores = []
    c = x.reshape(shape[0], -1)
    r = 1
    for k in range(d - 1):
        c = c.reshape(r * shape[k], -1)
        u, s, vt = _svd(c)
        rk = truncation_rank(s, delta, max_rank)
        cores.append(u[:, :rk].reshape(r, shape[k], rk))
        c = s[:rk, None] * vt[:rk]
        r = rk
    cores.append(c.reshape(r, shape[-1], 1))
    return TTVector(cores)


def tt_round(x: TTVector, eps=1e-14, max_rank=None) -> TTVector:
    """Recompress ``x`` to relative accuracy ``eps``.

    A right-to-left QR sweep makes cores 2..d right-orthonormal, then a
    left-to-right sweep of truncated SVDs with threshold
    ``eps * ||x|| / sqrt(d - 1)`` reduces the ranks.
    """
    d = x.ndim
    if d == 1:
        return x.copy()
    y = x.orthogonalize_right()
    cores = y.cores
    nrm = np.linalg.norm(cores[0])
    delta = eps * nrm / math.sqrt(d - 1)
    for k in range(d - 1):
        r0, n, r1 = cores[k].shape
        u, s, vt = _svd(cores[k].reshape(r0 * n, r1))
        rk = truncation_rank(s, delta, max_rank)
        cores[k] = u[:, :rk].reshape(r0, n, rk)
        cores[k + 1] = np.einsum("ab,bnc->anc", s[:rk, None] * vt[:rk], cores[k + 1])
    return TTVector(cores, check=False)


# ---------------------------------------------------------------------------
# arithmetic


def _require_same_shape(x, y):
    if x.shape != y.shape:
        raise ShapeError(f"mode sizes differ: {x.shape} vs {y.shape}")


def tt_add(x: TTVector, y: TTVector) -> TTVector:
    """Exact sum; interior ranks add."""
    _require_same_shape(x, y)
    d = x.ndim
    if d == 1:
        return TTVector([x.cores[0] + y.cores[0]])
    cores = []
    for k, (a, b) in enumerate(zip(x.cores, y.cores)):
        ra0, n, ra1 = a.shape
        rb0, _, rb1 = b.shape
        if k == 0:
            c = np.concatenate([a, b], axis=2)
        elif k == d - 1:
            c = np.concatenate([a, b], axis=0)
        else:
            c = np.zeros((ra0 + rb0, n, ra1 + rb1))
            c[:ra0, :, :ra1] = a
            c[ra0:, :, ra1:] = b
        cores.append(c)
    return TTVector(cores, check=False)


def tt_scale(x: TTVector, c) -> TTVector:
    cores = [g.copy() for g in x.cores]
    cores[0] = cores[0] * float(c)
    return TTVector(cores, check=False)


def tt_dot(x: TTVector, y: TTVector) -> float:
    """Euclidean inner product of the represented tensors."""
    _require_same_shape(x, y)
    phi = np.ones((1, 1))
    for a, b in zip(x.cores, y.cores):
        phi = np.einsum("ab,anc,bnd->cd", phi, a, b, optimize=True)
    return float(phi[0, 0])


def tt_norm(x: TTVector) -> float:
    """Frobenius norm via a left-orthogonalization sweep.

    QR keeps the result accurate even when ``x`` is a difference of nearly
    equal trains, where the Gram-matrix route of :func:`tt_dot` loses half the
    digits.
    """
    r = np.ones((1, 1))
    for c in x.cores:
        c = np.einsum("ab,bnc->anc", r, c)
        r0, n, r1 = c.shape
        mat = c.reshape(r0 * n, r1)
        if mat.shape[0] >= mat.shape[1]:
            r = np.linalg.qr(mat, mode="r")
        else:
            r = mat
    return float(np.linalg.norm(r))


def tt_sum(x: TTVector) -> float:
    """Sum of all entries (contraction with all-ones vectors in every mode)."""
    v = np.ones((1,))
    for c in x.cores:
        v = v @ c.sum(axis=1)
    return float(v[0])


def ttmatrix_from_factors(factors) -> TTMatrix:
    """Rank-1 TT-matrix ``A_1 o A_2 o ... o A_d``; expands to ``kron(A_1, ..., A_d)``."""
    if len(factors) == 0:
        raise ShapeError("need at least one factor")
    cores = []
    for f in factors:
        f = np.asarray(f, dtype=float)
        if f.ndim != 2:
            raise ShapeError(f"factor must be a matrix, got shape {f.shape}")
        cores.append(f[None, :, :, None])
    return TTMatrix(cores)


def tt_matvec_exact(a: TTMatrix, x: TTVector) -> TTVector:
    """Exact TT-matrix times TT-vector; ranks multiply (round afterwards)."""
    if a.col_sizes != x.shape:
        raise ShapeError(f"operator columns {a.col_sizes} do not match vector modes {x.shape}")
    cores = []
    for ac, xc in zip(a.cores, x.cores):
        ra0, m, _, ra1 = ac.shape
        rx0, _, rx1 = xc.shape
        c = np.einsum("amnb,cnd->acmbd", ac, xc, optimize=True)
        cores.append(c.reshape(ra0 * rx0, m, ra1 * rx1))
    return TTVector(cores, check=False)


def tt_matmul(a: TTMatrix, b: TTMatrix) -> TTMatrix:
    """Exact TT-matrix product ``a @ b``; ranks multiply."""
    if a.col_sizes != b.row_sizes:
        raise ShapeError("inner mode sizes differ")
    cores = []
    for ac, bc in zip(a.cores, b.cores):
        ra0, m, _, ra1 = ac.shape
        rb0, _, n, rb1 = bc.shape
        c = np.einsum("amkb,ckne->acmnbe", ac, bc, optimize=True)
        cores.append(c.reshape(ra0 * rb0, m, n, ra1 * rb1))
    return TTMatrix(cores, check=False)


def tt_mode_apply(x: TTVector, k: int, m) -> TTVector:
    """Apply matrix ``m`` along mode ``k`` only; ranks are unchanged."""
    m = np.asarray(m, dtype=float)
    if not 0 <= k < x.ndim:
        raise ShapeError(f"mode {k} out of range")
    if m.ndim != 2 or m.shape[1] != x.shape[k]:
        raise ShapeError(f"matrix shape {m.shape} incompatible with mode size {x.shape[k]}")
    cores = list(x.cores)
    cores[k] = np.einsum("mn,anb->amb", m, x.cores[k])
    return TTVector(cores, check=False)


def tt_mode_contract(x: TTVector, k: int, w):
    """Contract mode ``k`` with weights ``w``.

    The resulting ``r_{k-1} x r_k`` matrix is merged into the next core (or the
    previous one for the last mode).  A one-mode train yields a scalar.
    """
    w = np.asarray(w, dtype=float)
    if not 0 <= k < x.ndim:
        raise ShapeError(f"mode {k} out of range")
    if w.ndim != 1 or w.shape[0] != x.shape[k]:
        raise ShapeError(f"weights of length {w.shape} do not match mode size {x.shape[k]}")
    mat = np.einsum("anb,n->ab", x.cores[k], w)
    if x.ndim == 1:
        return float(mat[0, 0])
    cores = list(x.cores)
    del cores[k]
    if k < x.ndim - 1:
        cores[k] = np.einsum("ab,bnc->anc", mat, cores[k])
    else:
        cores[k - 1] = np.einsum("anb,bc->anc", cores[k - 1], mat)
    return TTVector(cores, check=False)
