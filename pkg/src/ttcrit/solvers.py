"""Alternating one-core solvers in TT format.

``tt_linsolve`` minimizes ``J(y) = ||A y - b||^2`` over tensor trains.  Fixing
all cores but one turns ``J`` into a small quadratic whose minimizer solves
the projected normal system ``Q^T A^T A Q y = Q^T A^T b`` (``Q`` is the
orthonormal frame built from the frozen cores).  The normal operator
``A^T A`` is formed once as a TT-matrix, so every local system is symmetric
positive definite and ``J`` can only decrease from one local solve to the
next.  With ``kickrank > 0`` each step is followed by a truncated SVD and an
enrichment with the projected gradient ``A^T (b - A y)`` (AMEn); with
``kickrank == 0`` ranks stay fixed and the sweep is plain ALS.

``tt_matvec_fit`` minimizes ``||A b - y||^2`` the same way; there the local
optimum is simply the projection of ``A b`` onto the frame.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import ConvergenceError, ShapeError, SolverError, ValidationError
from .tt import TTMatrix, TTVector, truncation_rank, tt_matmul, tt_matvec_exact, tt_norm, tt_round
from .validation import check_random_state

logger = logging.getLogger(__name__)

__all__ = ["SolverOptions", "SweepHistory", "normal_operator", "tt_linsolve", "tt_matvec_fit", "tt_residual"]


@dataclass
class SolverOptions:
    """Options shared by :func:`tt_linsolve` and :func:`tt_matvec_fit`.

    Attributes
    ----------
    eps : float
        Relative residual tolerance.
    max_sweeps : int
        Cap on full (left-to-right plus right-to-left) sweeps.
    kickrank : int
        Enrichment rank per step; ``0`` selects fixed-rank ALS.
    max_rank : int
        Upper bound on every TT rank of the iterate.
    local_solver : {"auto", "dense", "sparse", "iterative"}
        ``"auto"`` factorizes local systems up to ``dense_limit`` unknowns,
        uses a sparse LU when the local matrix has at most
        ``sparse_nnz_limit`` nonzeros, and runs Jacobi-preconditioned CG
        otherwise.
    """

    eps: float = 1e-8
    max_sweeps: int = 20
    kickrank: int = 4
    max_rank: int = 256
    local_solver: str = "auto"
    dense_limit: int = 2000
    sparse_nnz_limit: int = 20_000_000
    local_maxiter: int = 1000
    seed: int | None = 0

    def __post_init__(self):
        if not self.eps > 0:
            raise ValidationError("eps must be > 0")
        if self.max_sweeps < 1:
            raise ValidationError("max_sweeps must be >= 1")
        if self.kickrank < 0:
            raise ValidationError("kickrank must be >= 0")
        if self.max_rank < 1:
            raise ValidationError("max_rank must be >= 1")
        if self.local_solver not in ("auto", "dense", "sparse", "iterative"):
            raise ValidationError(f"unknown local_solver {self.local_solver!r}")


@dataclass
class SweepHistory:
    """Per half-sweep record of a TT solve."""

    residuals: list = field(default_factory=list)
    objectives: list = field(default_factory=list)
    max_ranks: list = field(default_factory=list)
    sweeps: int = 0
    converged: bool = False
    fallback: bool = False

    def as_dict(self):
        return {
            "residuals": list(self.residuals),
            "objectives": list(self.objectives),
            "max_ranks": list(self.max_ranks),
            "sweeps": self.sweeps,
            "converged": self.converged,
            "fallback": self.fallback,
        }


# ---------------------------------------------------------------------------
# interface contractions


def _left_op(phi, xr, a, xc):
    # phi (a,p,A), xr (a,n,b), a (p,n,m,q), xc (A,m,B) -> (b,q,B)
    t = np.tensordot(phi, xr, axes=(0, 0))  # (p,A,n,b)
    t = np.tensordot(t, a, axes=([0, 2], [0, 1]))  # (A,b,m,q)
    t = np.tensordot(t, xc, axes=([0, 2], [0, 1]))  # (b,q,B)
    return t


def _right_op(phi, xr, a, xc):
    # phi (b,q,B), xr (a,n,b), a (p,n,m,q), xc (A,m,B) -> (a,p,A)
    t = np.tensordot(xr, phi, axes=(2, 0))  # (a,n,q,B)
    t = np.tensordot(t, a, axes=([1, 2], [1, 3]))  # (a,B,p,m)
    t = np.tensordot(t, xc, axes=([1, 3], [2, 1]))  # (a,p,A)
    return t


def _left_vec(phi, xr, c):
    # phi (a,s), xr (a,n,b), c (s,n,t) -> (b,t)
    t = np.tensordot(phi, xr, axes=(0, 0))  # (s,n,b)
    return np.tensordot(t, c, axes=([0, 1], [0, 1]))


def _right_vec(phi, xr, c):
    # phi (b,t), xr (a,n,b), c (s,n,t) -> (a,s)
    t = np.tensordot(xr, phi, axes=(2, 0))  # (a,n,t)
    return np.tensordot(t, c, axes=([1, 2], [1, 2]))


def _apply_local(phil, a, phir, y):
    # (a,p,A) (p,n,m,q) (b,q,B) applied to y (A,m,B) -> (a,n,b)
    t = np.tensordot(phil, y, axes=(2, 0))  # (a,p,m,B)
    t = np.tensordot(t, a, axes=([1, 2], [0, 2]))  # (a,B,n,q)
    t = np.tensordot(t, phir, axes=([1, 3], [2, 1]))  # (a,n,b)
    return t


def _local_matrix(phil, a, phir):
    t = np.tensordot(phil, a, axes=(1, 0))  # (a,A,n,m,q)
    t = np.tensordot(t, phir, axes=(4, 1))  # (a,A,n,m,b,B)
    t = t.transpose(0, 2, 4, 1, 3, 5)
    d = t.shape[0] * t.shape[1] * t.shape[2]
    return t.reshape(d, d)


def _local_rhs(phil, c, phir):
    # (a,s) (s,n,t) (b,t) -> (a,n,b)
    t = np.tensordot(phil, c, axes=(1, 0))
    return np.tensordot(t, phir, axes=(2, 1))


def _local_diag(phil, a, phir):
    dl = np.einsum("apa->ap", phil)
    da = np.einsum("pnnq->pnq", a)
    dr = np.einsum("bqb->bq", phir)
    return np.einsum("ap,pnq,bq->anb", dl, da, dr)


def _sparse_nnz_estimate(phil, a, phir):
    nl = np.count_nonzero(phil, axis=(0, 2))
    na = np.count_nonzero(a, axis=(1, 2))
    nr = np.count_nonzero(phir, axis=(0, 2))
    return int(np.einsum("p,pq,q->", nl, na, nr))


def _local_matrix_sparse(phil, a, phir):
    """Same matrix as :func:`_local_matrix`, accumulated term by term in CSR."""
    rl, rn, _ = phil.shape
    rr, rq, _ = phir.shape
    n = a.shape[1]
    dim = rl * n * rr
    out = sp.csr_matrix((dim, dim))
    for p in range(rn):
        left = sp.csr_matrix(phil[:, p, :])
        if left.nnz == 0:
            continue
        for q in range(rq):
            mid = sp.csr_matrix(a[p, :, :, q])
            right = sp.csr_matrix(phir[:, q, :])
            if mid.nnz == 0 or right.nnz == 0:
                continue
            out = out + sp.kron(sp.kron(left, mid, format="csr"), right, format="csr")
    return out


def _right_orthonormal(cores):
    return TTVector(cores, check=False).orthogonalize_right().cores


def tt_residual(a: TTMatrix, x: TTVector, b: TTVector) -> float:
    """Relative residual ``||A x - b|| / ||b||`` computed with exact TT arithmetic."""
    bn = tt_norm(b)
    r = tt_norm(tt_matvec_exact(a, x) - b)
    return r / bn if bn > 0 else r


# ---------------------------------------------------------------------------
# linear solve


class _LocalSolver:
    def __init__(self, opts):
        self.opts = opts

    def solve(self, phil, a, phir, f, y0):
        shape = f.shape
        dim = f.size
        kind = self.opts.local_solver
        if kind == "auto":
            if dim <= self.opts.dense_limit:
                kind = "dense"
            elif _sparse_nnz_estimate(phil, a, phir) <= self.opts.sparse_nnz_limit:
                kind = "sparse"
            else:
                kind = "iterative"
        if kind == "dense":
            m = _local_matrix(phil, a, phir)
            m = 0.5 * (m + m.T)
            return self._dense(m, f.reshape(-1)).reshape(shape), m
        if kind == "sparse":
            m = _local_matrix_sparse(phil, a, phir)
            m = (0.5 * (m + m.T)).tocsc()
            return self._sparse(m, f.reshape(-1)).reshape(shape), m
        return self._iterative(phil, a, phir, f, y0), None

    def _sparse(self, m, f):
        try:
            lu = spla.splu(m, permc_spec="MMD_AT_PLUS_A")
        except RuntimeError:
            mu = 1e-12 * spla.norm(m)
            logger.debug("sparse local system singular; regularizing with mu=%g", mu)
            try:
                lu = spla.splu((m + mu * sp.identity(m.shape[0], format="csc")).tocsc(), permc_spec="MMD_AT_PLUS_A")
            except RuntimeError as exc:
                raise SolverError("singular local system after regularization") from exc
        return lu.solve(f)

    def _dense(self, m, f):
        try:
            return sla.cho_solve(sla.cho_factor(m), f)
        except (np.linalg.LinAlgError, ValueError):
            mu = 1e-12 * np.linalg.norm(m)
            logger.debug("local system not positive definite; regularizing with mu=%g", mu)
            try:
                return sla.cho_solve(sla.cho_factor(m + mu * np.eye(m.shape[0])), f)
            except (np.linalg.LinAlgError, ValueError) as exc:
                raise SolverError("singular local system after regularization") from exc

    def _iterative(self, phil, a, phir, f, y0):
        shape = f.shape
        diag = _local_diag(phil, a, phir).reshape(-1)
        diag = np.where(diag > 0, diag, 1.0)

        def mv(v):
            return _apply_local(phil, a, phir, v.reshape(shape)).reshape(-1)

        op = spla.LinearOperator((f.size, f.size), matvec=mv, dtype=float)
        prec = spla.LinearOperator((f.size, f.size), matvec=lambda v: v / diag, dtype=float)
        x0 = y0.reshape(-1) if y0 is not None and y0.shape == shape else None
        rtol = min(1e-10, 1e-3 * self.opts.eps)
        sol, info = spla.cg(op, f.reshape(-1), x0=x0, rtol=rtol, maxiter=self.opts.local_maxiter, M=prec)
        if info < 0:
            raise SolverError("CG breakdown in local solve")
        return sol.reshape(shape)

    @staticmethod
    def energy_tail(m, phil, a, phir, u, s, vt):
        """``E[r] = (y - y_r)^T M (y - y_r)`` for every truncation rank ``r``."""
        k = s.size
        # W[:, i] = vec(u_i v_i^T) in (rl*n, rr) row-major layout
        w = np.einsum("xi,iy->xyi", u, vt).reshape(-1, k)
        if m is not None:
            mw = m @ w
        else:
            rl, n, rr = phil.shape[0], a.shape[1], phir.shape[0]
            mw = np.stack(
                [_apply_local(phil, a, phir, w[:, i].reshape(rl, n, rr)).reshape(-1) for i in range(k)], axis=1
            )
        g = w.T @ mw
        sg = s[:, None] * g * s[None, :]
        # tail sums of the quadratic form over indices >= r
        e = np.array([sg[r:, r:].sum() for r in range(k + 1)])
        return np.maximum(e, 0.0)


def _reverse_matrix_cores(cores):
    return [c.transpose(3, 1, 2, 0) for c in cores[::-1]]


def _reverse_vector_cores(cores):
    return [c.transpose(2, 1, 0) for c in cores[::-1]]


def _half_sweep(x, ncores, ccores, z, opts, bnorm, local):
    """One left-to-right pass; ``x`` and ``z`` are lists of cores, modified in place."""
    d = len(x)
    x[:] = _right_orthonormal(x)
    kick = opts.kickrank
    if kick:
        z[:] = _right_orthonormal(z)

    one3 = np.ones((1, 1, 1))
    one2 = np.ones((1, 1))
    r_xnx = [None] * d
    r_xc = [None] * d
    r_znx = [None] * d
    r_zc = [None] * d
    r_xnx[-1], r_xc[-1] = one3, one2
    if kick:
        r_znx[-1], r_zc[-1] = one3, one2
    for k in range(d - 1, 0, -1):
        r_xnx[k - 1] = _right_op(r_xnx[k], x[k], ncores[k], x[k])
        r_xc[k - 1] = _right_vec(r_xc[k], x[k], ccores[k])
        if kick:
            r_znx[k - 1] = _right_op(r_znx[k], z[k], ncores[k], x[k])
            r_zc[k - 1] = _right_vec(r_zc[k], z[k], ccores[k])

    l_xnx, l_xc, l_znx, l_zc = one3, one2, one3, one2
    eps_loc = opts.eps * bnorm / (2.0 * math.sqrt(d))
    for k in range(d):
        f = _local_rhs(l_xc, ccores[k], r_xc[k])
        y, m = local.solve(l_xnx, ncores[k], r_xnx[k], f, x[k])
        if k == d - 1:
            x[k] = y
            break
        rl, n, rr = y.shape
        if not kick:
            q, r = np.linalg.qr(y.reshape(rl * n, rr))
            x[k] = q.reshape(rl, n, -1)
            x[k + 1] = np.tensordot(r, x[k + 1], axes=(1, 0))
        else:
            u, s, vt = np.linalg.svd(y.reshape(rl * n, rr), full_matrices=False)
            e = local.energy_tail(m, l_xnx, ncores[k], r_xnx[k], u, s, vt)
            rank = int(np.argmax(e <= eps_loc**2))
            rank = max(1, min(rank if e[rank] <= eps_loc**2 else s.size, opts.max_rank))
            u = u[:, :rank]
            v = s[:rank, None] * vt[:rank]
            # projected gradient A^T(b - A y) in the frame (X-left, n, Z-right)
            grad = _local_rhs(l_xc, ccores[k], r_zc[k]) - _apply_local(l_xnx, ncores[k], r_znx[k], y)
            n_kick = max(0, min(kick, opts.max_rank - rank))
            if n_kick:
                ext = np.concatenate([u, grad.reshape(rl * n, -1)[:, :n_kick]], axis=1)
                q, r = np.linalg.qr(ext)
                v = np.concatenate([v, np.zeros((ext.shape[1] - rank, rr))], axis=0)
                u, v = q, r @ v
            x[k] = u.reshape(rl, n, -1)
            x[k + 1] = np.tensordot(v, x[k + 1], axes=(1, 0))
            # new Z core: the residual projected onto (Z-left, n, Z-right)
            zres = _local_rhs(l_zc, ccores[k], r_zc[k]) - _apply_local(l_znx, ncores[k], r_znx[k], y)
            zl, _, zr = zres.shape
            qz, _ = np.linalg.qr(zres.reshape(zl * n, zr))
            z[k] = qz.reshape(zl, n, -1)
        l_xnx = _left_op(l_xnx, x[k], ncores[k], x[k])
        l_xc = _left_vec(l_xc, x[k], ccores[k])
        if kick:
            l_znx = _left_op(l_znx, z[k], ncores[k], x[k])
            l_zc = _left_vec(l_zc, z[k], ccores[k])


def normal_operator(a: TTMatrix, eps: float | None = None) -> TTMatrix:
    """``A^T A`` as a TT-matrix.

    Left unrounded by default: rounding perturbs the small eigenvalues of
    ``A^T A`` and caps the attainable residual near ``eps * cond(A)**2``.
    """
    n = tt_matmul(a.transpose(), a)
    return n.round(eps) if eps else n


def tt_linsolve(a: TTMatrix, b: TTVector, x0: TTVector | None = None, opts: SolverOptions | None = None,
                normal: TTMatrix | None = None):
    """Solve ``A x = b`` by alternating minimization of ``||A x - b||^2``.

    ``normal`` may carry a precomputed ``A^T A`` when the same matrix is
    solved against many right-hand sides.

    Returns
    -------
    x : TTVector
    history : SweepHistory
        Relative residual and objective after every half-sweep.

    Raises
    ------
    ConvergenceError
        If ``max_sweeps`` full sweeps do not reach ``opts.eps``; ``best`` holds
        the last iterate.
    """
    opts = opts or SolverOptions()
    if a.row_sizes != a.col_sizes:
        raise ShapeError("A must be square mode by mode")
    if a.col_sizes != b.shape:
        raise ShapeError(f"A columns {a.col_sizes} do not match b modes {b.shape}")
    rng = check_random_state(opts.seed)
    history = SweepHistory()
    bnorm = tt_norm(b)
    if bnorm == 0:
        history.converged = True
        return TTVector([np.zeros((1, n, 1)) for n in b.shape]), history

    at = a.transpose()
    if normal is None:
        normal = normal_operator(a)
    rhs = tt_matvec_exact(at, b)
    if x0 is None:
        x0 = TTVector.random(b.shape, 2, seed=rng)
    elif x0.shape != b.shape:
        raise ShapeError("x0 modes do not match b")
    x = [c.copy() for c in x0.cores]
    ncores = list(normal.cores)
    ccores = list(rhs.cores)
    z = TTVector.random(b.shape, max(opts.kickrank, 1), seed=rng).cores if opts.kickrank else None
    local = _LocalSolver(opts)

    def record():
        xt = TTVector(x, check=False)
        res = tt_residual(a, xt, b)
        history.residuals.append(res)
        history.objectives.append((res * bnorm) ** 2)
        history.max_ranks.append(max(xt.ranks))
        return res

    # each half-sweep runs left to right; the return pass uses the reversed train
    for sweep in range(opts.max_sweeps):
        history.sweeps = sweep + 1
        _half_sweep(x, ncores, ccores, z, opts, bnorm, local)
        if record() <= opts.eps:
            history.converged = True
            break
        xr = _reverse_vector_cores(x)
        zr = _reverse_vector_cores(z) if z is not None else None
        _half_sweep(xr, _reverse_matrix_cores(ncores), _reverse_vector_cores(ccores), zr, opts, bnorm, local)
        x = _reverse_vector_cores(xr)
        if zr is not None:
            z = _reverse_vector_cores(zr)
        if record() <= opts.eps:
            history.converged = True
            break
        logger.debug("sweep %d: residual %.3e, max rank %d", sweep + 1, history.residuals[-1], history.max_ranks[-1])

    sol = TTVector(x, check=False)
    if not history.converged:
        raise ConvergenceError(
            f"tt_linsolve reached {opts.max_sweeps} sweeps with residual {history.residuals[-1]:.3e}",
            best=sol,
            history=history,
            residual=history.residuals[-1],
        )
    return sol, history


# ---------------------------------------------------------------------------
# fitted matrix-vector product


def _fit_half_sweep(y, acores, bcores, z, eps, max_rank, kick):
    d = len(y)
    y[:] = _right_orthonormal(y)
    if kick:
        z[:] = _right_orthonormal(z)
    one3 = np.ones((1, 1, 1))
    one2 = np.ones((1, 1))
    r_yab = [None] * d
    r_zab = [None] * d
    r_zy = [None] * d
    r_yab[-1] = one3
    if kick:
        r_zab[-1], r_zy[-1] = one3, one2
    for k in range(d - 1, 0, -1):
        r_yab[k - 1] = _right_op(r_yab[k], y[k], acores[k], bcores[k])
        if kick:
            r_zab[k - 1] = _right_op(r_zab[k], z[k], acores[k], bcores[k])
            r_zy[k - 1] = _right_vec(r_zy[k], z[k], y[k])
    l_yab, l_zab, l_zy = one3, one3, one2
    for k in range(d):
        # projection of A b onto (Y-left, n, Y-right)
        t = np.tensordot(l_yab, acores[k], axes=(1, 0))  # (a,s,n,m,q)
        t = np.tensordot(t, bcores[k], axes=([1, 3], [0, 1]))  # (a,n,q,t)
        core = np.tensordot(t, r_yab[k], axes=([2, 3], [1, 2]))  # (a,n,c)
        if k == d - 1:
            y[k] = core
            break
        rl, n, rr = core.shape
        u, s, vt = np.linalg.svd(core.reshape(rl * n, rr), full_matrices=False)
        rank = truncation_rank(s, eps * np.linalg.norm(s) / math.sqrt(d), max_rank)
        u = u[:, :rank]
        v = s[:rank, None] * vt[:rank]
        if kick:
            t = np.tensordot(l_yab, acores[k], axes=(1, 0))
            t = np.tensordot(t, bcores[k], axes=([1, 3], [0, 1]))
            proj = np.tensordot(t, r_zab[k], axes=([2, 3], [1, 2]))  # (a,n,z)
            approx = np.tensordot((u @ v).reshape(rl, n, rr), r_zy[k], axes=(2, 1))
            grad = proj - approx
            n_kick = max(0, min(kick, max_rank - rank))
            if n_kick:
                ext = np.concatenate([u, grad.reshape(rl * n, -1)[:, :n_kick]], axis=1)
                q, r = np.linalg.qr(ext)
                v = np.concatenate([v, np.zeros((ext.shape[1] - rank, rr))], axis=0)
                u, v = q, r @ v
            t = np.tensordot(l_zab, acores[k], axes=(1, 0))
            t = np.tensordot(t, bcores[k], axes=([1, 3], [0, 1]))
            zproj = np.tensordot(t, r_zab[k], axes=([2, 3], [1, 2]))
            zapprox = np.tensordot(np.tensordot(l_zy, core, axes=(1, 0)), r_zy[k], axes=(2, 1))
            zres = zproj - zapprox
            zl, _, zr = zres.shape
            qz, _ = np.linalg.qr(zres.reshape(zl * n, zr))
            z[k] = qz.reshape(zl, n, -1)
        y[k] = u.reshape(rl, n, -1)
        y[k + 1] = np.tensordot(v, y[k + 1], axes=(1, 0))
        l_yab = _left_op(l_yab, y[k], acores[k], bcores[k])
        if kick:
            l_zab = _left_op(l_zab, z[k], acores[k], bcores[k])
            l_zy = _left_vec(l_zy, z[k], y[k])


def tt_matvec_fit(a: TTMatrix, b: TTVector, opts: SolverOptions | None = None, y0: TTVector | None = None,
                  history: SweepHistory | None = None) -> TTVector:
    """Approximate ``A b`` by alternating minimization of ``||A b - y||^2``.

    Sweeps stop once the relative change between consecutive full sweeps is
    below ``opts.eps``.  If ``max_sweeps`` is exhausted the exact product
    followed by rounding is returned instead (``history.fallback`` is set).
    """
    opts = opts or SolverOptions()
    if a.col_sizes != b.shape:
        raise ShapeError(f"A columns {a.col_sizes} do not match b modes {b.shape}")
    history = history if history is not None else SweepHistory()
    rng = check_random_state(opts.seed)
    shape = a.row_sizes
    if y0 is None or y0.shape != shape:
        y0 = TTVector.random(shape, 2, seed=rng)
    y = [c.copy() for c in y0.cores]
    kick = max(opts.kickrank, 1)
    z = TTVector.random(shape, kick, seed=rng).cores
    acores, bcores = list(a.cores), list(b.cores)
    prev = None
    for sweep in range(opts.max_sweeps):
        history.sweeps = sweep + 1
        _fit_half_sweep(y, acores, bcores, z, opts.eps, opts.max_rank, kick)
        yr, zr = _reverse_vector_cores(y), _reverse_vector_cores(z)
        _fit_half_sweep(yr, _reverse_matrix_cores(acores), _reverse_vector_cores(bcores), zr, opts.eps,
                        opts.max_rank, kick)
        y, z = _reverse_vector_cores(yr), _reverse_vector_cores(zr)
        cur = TTVector(y, check=False)
        history.max_ranks.append(max(cur.ranks))
        if prev is not None:
            nrm = tt_norm(cur)
            change = tt_norm(cur - prev) / nrm if nrm > 0 else 0.0
            history.residuals.append(change)
            if change <= opts.eps:
                history.converged = True
                return cur
        prev = cur
    logger.debug("tt_matvec_fit did not settle in %d sweeps; using exact product", opts.max_sweeps)
    history.fallback = True
    return tt_round(tt_matvec_exact(a, b), opts.eps)
