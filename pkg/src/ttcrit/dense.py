"""Dense multiway-array kernels and the dense generalized eigensolver.

Tensors are plain :class:`numpy.ndarray` objects in C (row-major) order; this
linearization is used everywhere in the package, so the last mode is the
fastest-varying one.  Mode indices are zero-based.

The dense operator assembly that accompanies these kernels lives in
:mod:`ttcrit.transport.assembly`, next to the TT assembly, because both
expand the very same per-octant factor lists.
"""

from __future__ import annotations

from functools import reduce

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import ConvergenceError, ShapeError
from .validation import check_random_state

__all__ = [
    "kron",
    "tensor_product",
    "mode_product",
    "contract_with_vector",
    "factorized",
    "dense_generalized_eigensolve",
    "orient",
]


DIRECT_DENSE_LIMIT = 1500


def _kron2(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    ma, na = a.shape
    mb, nb = b.shape
    # (A kron B)[iA*mb + iB, jA*nb + jB] = A[iA, jA] * B[iB, jB]
    return (a[:, None, :, None] * b[None, :, None, :]).reshape(ma * mb, na * nb)


def kron(*matrices):
    """Kronecker product of one or more matrices, left to right.

    >>> kron(np.eye(2), np.eye(3)).shape
    (6, 6)
    """
    if not matrices:
        raise ValueError("kron needs at least one matrix")
    return reduce(_kron2, matrices)


def tensor_product(a, b):
    """Outer (tensor) product: the result shape is ``a.shape + b.shape``.

    For vectors ``tensor_product(a, b) == kron(a, b.T)``.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    return np.multiply.outer(a, b)


def mode_product(x, n, u):
    """n-mode product ``x ×_n U``: contract mode ``n`` of ``x`` with the columns of ``U``."""
    x = np.asarray(x)
    u = np.asarray(u)
    if u.ndim != 2:
        raise ShapeError(f"U must be a matrix, got shape {u.shape}")
    if not 0 <= n < x.ndim:
        raise ShapeError(f"mode {n} out of range for a {x.ndim}-way tensor")
    if u.shape[1] != x.shape[n]:
        raise ShapeError(f"U has {u.shape[1]} columns but mode {n} has extent {x.shape[n]}")
    out = np.tensordot(u, x, axes=(1, n))
    return np.moveaxis(out, 0, n)


def contract_with_vector(x, k, v):
    """Weighted sum over mode ``k``; the result has one mode fewer."""
    x = np.asarray(x)
    v = np.asarray(v)
    if v.ndim != 1:
        raise ShapeError("v must be a vector")
    if not 0 <= k < x.ndim:
        raise ShapeError(f"mode {k} out of range for a {x.ndim}-way tensor")
    if v.shape[0] != x.shape[k]:
        raise ShapeError(f"length {v.shape[0]} does not match extent {x.shape[k]} of mode {k}")
    return np.tensordot(x, v, axes=(k, 0))


def factorized(a):
    """Return a callable solving ``a @ x = b`` from one LU factorization.

    Works for dense arrays and scipy sparse matrices alike.
    """
    if sp.issparse(a):
        lu = spla.splu(sp.csc_matrix(a))
        return lu.solve
    lu = sla.lu_factor(np.asarray(a))
    return lambda b: sla.lu_solve(lu, b)


def orient(v):
    """Scale ``v`` to unit 2-norm with a nonnegative component sum."""
    v = np.asarray(v, dtype=float)
    nrm = np.linalg.norm(v)
    if nrm == 0:
        return v
    v = v / nrm
    if v.sum() < 0:
        v = -v
    return v


def _matvec(a, x):
    return a @ x


def dense_generalized_eigensolve(a, b, method="power", tol=1e-10, max_iter=10_000, x0=None, seed=0):
    """Dominant eigenpair of ``B x = lam A x``, i.e. of ``A^{-1} B``.

    Parameters
    ----------
    a, b : ndarray or sparse matrix
        Square operators of equal size; ``a`` must be invertible.
    method : {"power", "direct"}
        ``"power"`` runs inverse power iteration with one LU factorization of
        ``a``.  ``"direct"`` calls LAPACK ``ggev`` for dense input up to
        ``DIRECT_DENSE_LIMIT`` unknowns and ARPACK on ``A^{-1} B`` otherwise.

    Returns
    -------
    lam : float
    x : ndarray
        Unit 2-norm eigenvector with nonnegative component sum.
    """
    n = a.shape[0]
    if a.shape != (n, n) or b.shape != (n, n):
        raise ShapeError(f"A {a.shape} and B {b.shape} must be square and equal")

    if method == "direct":
        if not sp.issparse(a) and not sp.issparse(b) and n <= DIRECT_DENSE_LIMIT:
            vals, vecs = sla.eig(np.asarray(b), np.asarray(a))
            finite = np.isfinite(vals)
            vals = np.where(finite, vals, 0)
            idx = int(np.argmax(np.abs(vals)))
            return float(vals[idx].real), orient(vecs[:, idx].real)
        solve = factorized(a)
        op = spla.LinearOperator((n, n), matvec=lambda x: solve(b @ x), dtype=float)
        v0 = np.ones(n) if x0 is None else np.asarray(x0, dtype=float)
        vals, vecs = spla.eigs(op, k=1, which="LM", v0=v0, tol=min(tol, 1e-12))
        return float(vals[0].real), orient(vecs[:, 0].real)

    if method != "power":
        raise ValueError(f"unknown method {method!r}")

    solve = factorized(a)
    rng = check_random_state(seed)
    x = rng.random(n) + 0.5 if x0 is None else np.asarray(x0, dtype=float).copy()
    x /= np.linalg.norm(x)
    lam = 0.0
    resid = np.inf
    for _ in range(max_iter):
        y = solve(_matvec(b, x))
        lam_new = float(x @ y)
        ynorm = np.linalg.norm(y)
        if ynorm == 0:
            raise ConvergenceError("A^{-1}B annihilated the iterate", residual=np.inf)
        y_unit = y / ynorm * np.sign(lam_new or 1.0)
        resid = np.linalg.norm(y_unit - x)
        x = y_unit
        if abs(lam_new - lam) <= tol * max(1.0, abs(lam_new)) and resid <= 100 * tol:
            return lam_new, orient(x)
        lam = lam_new
    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} iterations", best=(lam, orient(x)), residual=resid
    )
