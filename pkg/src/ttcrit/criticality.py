"""k-effective and alpha eigenvalue iterations over any operator representation.

The k iteration is the classic fission-source fixed point::

    H psi+ = (S + F / k) psi
    k+     = k * sum(F psi+) / sum(F psi)

with ``psi`` rescaled to unit 2-norm after every step.  The alpha eigenvalue
is the root of ``k(alpha) = 1`` where ``k(alpha)`` is the k eigenvalue with
``H`` replaced by ``H + alpha V^-1``; the root is found by the secant method.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator

from .dense import factorized, orient
from .exceptions import ConvergenceError, NoFissionError, SolverError, StagnationError, ValidationError
from .qtt import QTTMatrix, QTTVector
from .solvers import SolverOptions, normal_operator, tt_linsolve, tt_matvec_fit
from .tt import TTMatrix, TTVector, tt_matvec_exact, tt_norm, tt_round, tt_sum
from .transport.assembly import OperatorSet, assemble_operators
from .transport.problem import TransportProblem
from .validation import check_random_state

logger = logging.getLogger(__name__)

__all__ = [
    "EigenOptions",
    "EigenResult",
    "solve_keff",
    "solve_alpha",
    "compression_ratio",
    "KEigenSolver",
    "AlphaEigenSolver",
]


@dataclass
class EigenOptions:
    """Outer-iteration settings.

    ``inner`` defaults to a linear-solver tolerance of ``0.1 * tol``.
    ``round_eps`` is the TT rounding tolerance for sources and iterates
    (default ``0.01 * tol``).  ``matvec`` picks exact products followed by
    rounding or the fitted product.
    """

    tol: float = 1e-6
    max_outer: int = 500
    inner: SolverOptions | None = None
    seed: int | None = 0
    matvec: str = "exact"
    round_eps: float | None = None
    alpha0: float = 0.0
    alpha1: float = 0.01
    alpha_max_iter: int = 10
    alpha_update: str = "secant"

    def __post_init__(self):
        if not self.tol > 0:
            raise ValidationError("tol must be > 0")
        if self.max_outer < 1:
            raise ValidationError("max_outer must be >= 1")
        if self.matvec not in ("exact", "fit"):
            raise ValidationError("matvec must be 'exact' or 'fit'")
        if self.alpha_update not in ("secant", "literal"):
            raise ValidationError("alpha_update must be 'secant' or 'literal'")
        if self.inner is None:
            self.inner = SolverOptions(eps=0.1 * self.tol, seed=self.seed)
        if self.round_eps is None:
            self.round_eps = 0.01 * self.tol


@dataclass
class EigenResult:
    eigenvalue: float
    psi: object
    iterations: int
    history: list
    compression: dict
    wall_time: float
    converged: bool = True
    kind: str = "keff"
    representation: str = "dense"
    k_eff: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def residual(self):
        return self.history[-1]["residual"] if self.history else float("nan")

    def psi_dense(self) -> np.ndarray:
        """Eigenvector in natural ordering, unit norm, nonnegative sum."""
        return orient(_to_natural(self.psi))


def compression_ratio(x) -> float:
    """Stored elements over the element count of the full tensor or matrix."""
    if isinstance(x, (TTVector, TTMatrix)):
        return x.size / x.full_size
    if sp.issparse(x):
        return x.nnz / float(np.prod(x.shape))
    return 1.0


def _to_natural(x) -> np.ndarray:
    if isinstance(x, QTTVector):
        return x.to_dense()
    if isinstance(x, TTVector):
        return x.full().reshape(-1)
    return np.asarray(x).reshape(-1)


# ---------------------------------------------------------------------------
# representation back ends


class _DenseBackend:
    def __init__(self, ops: OperatorSet, opts: EigenOptions):
        self.ops = ops
        self.opts = opts
        self._solve = None

    def set_shift(self, alpha):
        h = self.ops.H
        if alpha:
            if self.ops.Vinv is None:
                raise ValidationError("alpha mode needs group velocities")
            h = h + alpha * self.ops.Vinv
        self.h = h
        try:
            self._solve = factorized(h)
        except (RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
            raise SolverError(f"H + alpha V^-1 is singular at alpha={alpha}") from exc

    def initial(self, rng):
        return rng.uniform(0.5, 1.5, self.ops.n_unknowns)

    def apply(self, op, x):
        return np.asarray(op @ x)

    def combine(self, a, x, b, y):
        return a * x + b * y

    def solve(self, rhs, x0):
        out = self._solve(rhs)
        if not np.all(np.isfinite(out)):
            raise SolverError("non-finite values in the transport solve")
        return out, {}

    total = staticmethod(lambda x: float(np.sum(x)))
    norm = staticmethod(lambda x: float(np.linalg.norm(x)))

    def scale(self, x, c):
        return x * c


class _TTBackend:
    def __init__(self, ops: OperatorSet, opts: EigenOptions):
        self.ops = ops
        self.opts = opts
        self.qtt = ops.representation == "qtt"
        self.levels = tuple(int(np.log2(n)) for n in ops.mode_sizes) if self.qtt else None
        self.shape = tuple(ops.H.col_sizes)
        self.h = None
        self.normal = None
        self.last_fit = {}

    def _wrap(self, x):
        return QTTVector.wrap(x, self.levels) if self.qtt else x

    def set_shift(self, alpha):
        h = self.ops.H
        if alpha:
            if self.ops.Vinv is None:
                raise ValidationError("alpha mode needs group velocities")
            h = (h + alpha * self.ops.Vinv).round(1e-12)
        self.h = h
        self.normal = normal_operator(h, eps=1e-14)

    def initial(self, rng):
        return self._wrap(TTVector.random(self.shape, 2, seed=rng, positive=True))

    def apply(self, op, x):
        if self.opts.matvec == "fit":
            fit_opts = replace(self.opts.inner, eps=self.opts.round_eps)
            y0 = self.last_fit.get(id(op))
            y = tt_matvec_fit(op, x, fit_opts, y0=y0)
            self.last_fit[id(op)] = y
        else:
            y = tt_round(tt_matvec_exact(op, x), self.opts.round_eps)
        return self._wrap(y)

    def combine(self, a, x, b, y):
        return self._wrap(tt_round(x * a + y * b, self.opts.round_eps))

    def solve(self, rhs, x0):
        inner = self.opts.inner
        try:
            x, hist = tt_linsolve(self.h, rhs, x0=x0, opts=inner, normal=self.normal)
        except ConvergenceError as exc:
            # a near miss is still a usable fixed-point step
            if exc.residual is None or exc.residual > 10 * inner.eps:
                raise SolverError(f"inner TT solve failed: {exc}") from exc
            x, hist = exc.best, exc.history
        x = tt_round(x, self.opts.round_eps)
        return self._wrap(x), {"sweeps": hist.sweeps, "inner_residual": hist.residuals[-1], "max_rank": max(x.ranks)}

    total = staticmethod(tt_sum)
    norm = staticmethod(tt_norm)

    def scale(self, x, c):
        return self._wrap(x * c)


def _backend(ops: OperatorSet, opts: EigenOptions):
    if ops.representation == "dense":
        return _DenseBackend(ops, opts)
    if ops.representation in ("tt", "qtt"):
        return _TTBackend(ops, opts)
    raise ValidationError(f"unknown representation {ops.representation!r}")


def _check_fission(ops: OperatorSet):
    f = ops.F
    if isinstance(f, TTMatrix):
        empty = f.norm() == 0
    elif sp.issparse(f):
        empty = f.count_nonzero() == 0
    else:
        empty = not np.any(f)
    if empty:
        raise NoFissionError("F is identically zero; the problem has no fission source")


# ---------------------------------------------------------------------------
# k-effective


def _keff_loop(be, ops: OperatorSet, opts: EigenOptions, psi=None, k=1.0, tol=None):
    tol = opts.tol if tol is None else tol
    rng = check_random_state(opts.seed)
    if psi is None:
        psi = be.initial(rng)
    psi = be.scale(psi, 1.0 / be.norm(psi))
    fpsi = be.apply(ops.F, psi)
    spsi = be.apply(ops.S, psi)
    history = []
    for it in range(1, opts.max_outer + 1):
        rhs = be.combine(1.0, spsi, 1.0 / k, fpsi)
        new, info = be.solve(rhs, psi)
        fnew = be.apply(ops.F, new)
        denom = be.total(fpsi)
        if denom == 0:
            raise NoFissionError("fission source vanished during iteration")
        k_new = k * be.total(fnew) / denom
        nrm = be.norm(new)
        if not np.isfinite(k_new) or nrm == 0:
            raise SolverError("fixed-point iterate became singular")
        psi = be.scale(new, 1.0 / nrm)
        fpsi = be.scale(fnew, 1.0 / nrm)
        spsi = be.apply(ops.S, psi)
        hpsi = be.apply(be.h, psi)
        resid_vec = be.combine(1.0, hpsi, -1.0, be.combine(1.0, spsi, 1.0 / k_new, fpsi))
        hn = be.norm(hpsi)
        residual = be.norm(resid_vec) / hn if hn > 0 else float("inf")
        delta = abs(k_new - k)
        entry = {"iteration": it, "eigenvalue": float(k_new), "residual": float(residual), "delta": float(delta)}
        entry.update(info)
        history.append(entry)
        logger.debug("outer %d: k=%.10f dk=%.2e res=%.2e", it, k_new, delta, residual)
        k = k_new
        if delta <= tol and residual <= 10 * tol:
            return k, psi, history, True
    return k, psi, history, False


def _compression(ops: OperatorSet, psi):
    out = {"psi": compression_ratio(psi)}
    for name, op in ops.operators().items():
        out[name] = compression_ratio(op) if isinstance(op, TTMatrix) else 1.0
    return out


def _as_ops(problem_or_ops, representation):
    if isinstance(problem_or_ops, OperatorSet):
        return problem_or_ops
    if isinstance(problem_or_ops, TransportProblem):
        return assemble_operators(problem_or_ops, representation)
    raise ValidationError("expected a TransportProblem or an OperatorSet")


def solve_keff(ops: OperatorSet, opts: EigenOptions | None = None, alpha: float = 0.0, psi0=None) -> EigenResult:
    """k-effective of ``(H + alpha V^-1) psi = (S + F / k) psi``.

    Raises
    ------
    NoFissionError
        If ``F`` is identically zero.
    ConvergenceError
        After ``max_outer`` iterations; ``best`` holds the partial result.
    """
    opts = opts or EigenOptions()
    _check_fission(ops)
    t0 = time.perf_counter()
    be = _backend(ops, opts)
    be.set_shift(alpha)
    k, psi, history, ok = _keff_loop(be, ops, opts, psi=psi0)
    res = EigenResult(
        eigenvalue=float(k),
        psi=psi,
        iterations=len(history),
        history=history,
        compression=_compression(ops, psi),
        wall_time=time.perf_counter() - t0,
        converged=ok,
        kind="keff",
        representation=ops.representation,
        k_eff=float(k),
        extra={"alpha": alpha},
    )
    if not ok:
        raise ConvergenceError(
            f"k iteration did not converge in {opts.max_outer} outer iterations",
            best=res,
            history=history,
            residual=history[-1]["residual"] if history else None,
        )
    return res


# ---------------------------------------------------------------------------
# alpha


def _alpha_step(a_prev, a_cur, k_prev, k_cur, update):
    dk = k_cur - k_prev
    if abs(dk) < 1e-14:
        raise StagnationError(f"secant stagnated: k({a_cur}) - k({a_prev}) = {dk:.3e}")
    if update == "literal":
        return a_cur + (1.0 - k_prev) / (dk * (a_cur - a_prev))
    return a_cur + (1.0 - k_cur) * (a_cur - a_prev) / dk


def solve_alpha(ops: OperatorSet, opts: EigenOptions | None = None) -> EigenResult:
    """Alpha eigenvalue: the root of ``k(alpha) = 1`` found by secant steps.

    Every ``k(alpha)`` solve is warm-started from the previous eigenvector
    and converged to ``0.1 * tol`` so the root test ``|k - 1| <= tol`` is
    meaningful.
    """
    opts = opts or EigenOptions()
    _check_fission(ops)
    if ops.Vinv is None:
        raise ValidationError("alpha mode needs group velocities for every material")
    t0 = time.perf_counter()
    be = _backend(ops, opts)
    k_tol = 0.1 * opts.tol
    psi = None
    k_seed = 1.0
    history = []
    total_inner = 0

    def k_of(alpha):
        nonlocal psi, k_seed, total_inner
        be.set_shift(alpha)
        k, psi_new, hist, ok = _keff_loop(be, ops, opts, psi=psi, k=k_seed, tol=k_tol)
        total_inner += len(hist)
        if not ok:
            raise ConvergenceError(f"k solve at alpha={alpha} did not converge", history=hist)
        psi, k_seed = psi_new, k
        history.append({"iteration": len(history) + 1, "alpha": float(alpha), "eigenvalue": float(alpha),
                        "k_eff": float(k), "residual": float(abs(k - 1.0)), "outer_k_iterations": len(hist)})
        return k

    a_prev, a_cur = opts.alpha0, opts.alpha1
    k_prev = k_of(a_prev)
    k_cur = k_prev
    converged = abs(k_prev - 1.0) <= opts.tol
    if converged:
        a_cur = a_prev
    else:
        k_cur = k_of(a_cur)
        converged = abs(k_cur - 1.0) <= opts.tol
    while not converged and len(history) < opts.alpha_max_iter:
        a_next = _alpha_step(a_prev, a_cur, k_prev, k_cur, opts.alpha_update)
        if not np.isfinite(a_next):
            raise StagnationError("alpha update produced a non-finite value")
        a_prev, k_prev = a_cur, k_cur
        a_cur = a_next
        k_cur = k_of(a_cur)
        converged = abs(k_cur - 1.0) <= opts.tol
    res = EigenResult(
        eigenvalue=float(a_cur),
        psi=psi,
        iterations=len(history),
        history=history,
        compression=_compression(ops, psi),
        wall_time=time.perf_counter() - t0,
        converged=converged,
        kind="alpha",
        representation=ops.representation,
        k_eff=float(k_cur),
        extra={"k_at_zero": history[0]["k_eff"], "inner_iterations": total_inner, "update": opts.alpha_update},
    )
    if not converged:
        raise ConvergenceError(
            f"alpha iteration did not reach |k-1| <= {opts.tol} in {opts.alpha_max_iter} solves",
            best=res,
            history=history,
            residual=abs(k_cur - 1.0),
        )
    return res


# ---------------------------------------------------------------------------
# estimator wrappers


class _EigenEstimator(BaseEstimator):
    def _options(self):
        inner = SolverOptions(eps=0.1 * self.tol, kickrank=self.kickrank, max_rank=self.max_rank, seed=self.seed)
        return EigenOptions(tol=self.tol, max_outer=self.max_outer, inner=inner, seed=self.seed, matvec=self.matvec)

    def _store(self, res: EigenResult, ops):
        self.result_ = res
        self.eigenvalue_ = res.eigenvalue
        self.psi_ = res.psi
        self.history_ = res.history
        self.n_iter_ = res.iterations
        self.operators_ = ops
        return self


class KEigenSolver(_EigenEstimator):
    """Estimator-style front end to :func:`solve_keff`.

    >>> from ttcrit.transport import pu239_slab
    >>> KEigenSolver().fit(pu239_slab(nodes=64, N=4)).eigenvalue_  # doctest: +SKIP
    """

    def __init__(self, representation="dense", tol=1e-6, max_outer=500, seed=0, matvec="exact", kickrank=4,
                 max_rank=256):
        self.representation = representation
        self.tol = tol
        self.max_outer = max_outer
        self.seed = seed
        self.matvec = matvec
        self.kickrank = kickrank
        self.max_rank = max_rank

    def fit(self, problem, y=None):
        ops = _as_ops(problem, self.representation)
        return self._store(solve_keff(ops, self._options()), ops)


class AlphaEigenSolver(_EigenEstimator):
    """Estimator-style front end to :func:`solve_alpha`."""

    def __init__(self, representation="dense", tol=1e-6, max_outer=500, seed=0, matvec="exact", kickrank=4,
                 max_rank=256, update="secant"):
        self.representation = representation
        self.tol = tol
        self.max_outer = max_outer
        self.seed = seed
        self.matvec = matvec
        self.kickrank = kickrank
        self.max_rank = max_rank
        self.update = update

    def fit(self, problem, y=None):
        ops = _as_ops(problem, self.representation)
        opts = replace(self._options(), alpha_update=self.update)
        res = solve_alpha(ops, opts)
        self.k_eff_ = res.k_eff
        return self._store(res, ops)
