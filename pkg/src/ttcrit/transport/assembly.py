"""Per-octant operator terms and their dense, TT and QTT assemblies.

Every operator is a sum over octants of Kronecker products of small factor
matrices in mode order (energy, angle, z, y, x); slab problems drop z and y.
The three representations expand exactly the same factor lists, so they agree
up to rounding.

Term factors for octant ``o`` with direction signs ``(s_mu, s_eta, s_xi)``::

    Hx     = I_G        . Q_mu  . Ip_z  . Ip_y  . D_x
    Hy     = I_G        . Q_eta . Ip_z  . D_y   . Ip_x
    Hz     = I_G        . Q_xi  . D_z   . Ip_y  . Ip_x
    Hsigma = diag(st)   . P     . Ip_z  . Ip_y  . Ip_x
    S      = sigma_s    . Intg  . Ip0_z . Ip0_y . Ip0_x
    F      = chi nsf^T  . Intg  . Ip0_z . Ip0_y . Ip0_x
    Vinv   = diag(1/v)  . P     . Ip_z  . Ip_y  . Ip_x

Axis matrices take the sign of the matching cosine; ``Ip0`` is the
interpolation matrix without its inflow row.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..dense import kron
from ..exceptions import CapacityError, UnsupportedError, ValidationError
from ..qtt import QTTMatrix, natural_permutation, tt_operator_to_qtt
from ..tt import TTMatrix, ttmatrix_from_factors
from ..validation import is_power_of_two
from .matrices import angular_matrix, diff_matrix, integral_matrix, interp_matrix, octant_projector
from .problem import CrossSections, TransportProblem
from .quadrature import octant_signs

logger = logging.getLogger(__name__)

__all__ = [
    "OperatorSet",
    "TERMS",
    "octant_factors",
    "assemble_dense_operators",
    "assemble_tt_operators",
    "assemble_qtt_operators",
    "assemble_operators",
    "operator_max_difference",
    "DENSE_CAP",
]

TERMS = ("Hx", "Hy", "Hz", "Hsigma", "S", "F", "Vinv")
STREAMING = ("Hx", "Hy", "Hz")
DENSE_CAP = 200_000
# above this many unknowns dense-mode operators are kept in scipy.sparse storage
SPARSE_THRESHOLD = 4096
ROUND_EPS = 1e-12


@dataclass
class OperatorSet:
    """H, S, F and V^-1 in one representation.

    ``parts`` holds the four pieces of H; ``terms`` keeps the per-octant
    factor lists used to build everything.
    """

    representation: str
    H: object
    S: object
    F: object
    Vinv: object
    parts: dict
    problem: TransportProblem
    terms: dict = field(default_factory=dict, repr=False)

    @property
    def mode_sizes(self):
        return self.problem.mode_sizes

    @property
    def n_unknowns(self):
        return self.problem.n_unknowns

    def operators(self):
        out = {"H": self.H, "S": self.S, "F": self.F}
        if self.Vinv is not None:
            out["Vinv"] = self.Vinv
        return out

    def expand(self, name: str) -> np.ndarray:
        """Dense array of one operator in natural (C) ordering."""
        op = self.operators()[name] if name in ("H", "S", "F", "Vinv") else self.parts[name]
        return _to_dense(op)

    def storage(self) -> dict:
        """Stored element counts per operator."""
        return {name: _stored_elements(op) for name, op in self.operators().items()}

    def full_elements(self) -> int:
        return self.n_unknowns**2


def _to_dense(op) -> np.ndarray:
    if isinstance(op, QTTMatrix):
        return op.to_dense()
    if isinstance(op, TTMatrix):
        return op.full()
    if sp.issparse(op):
        return op.toarray()
    return np.asarray(op)


def _stored_elements(op) -> int:
    if isinstance(op, TTMatrix):
        return int(op.size)
    if sp.issparse(op):
        return int(op.nnz)
    return int(np.asarray(op).size)


# ---------------------------------------------------------------------------
# factor lists


def _energy_factors(xs: CrossSections):
    g = xs.G
    out = {
        "stream": np.eye(g),
        "Hsigma": np.diag(xs.sigma_t),
        "S": xs.sigma_s.copy(),
        "F": xs.fission_matrix,
    }
    out["Vinv"] = np.diag(1.0 / xs.velocity) if xs.velocity is not None else None
    return out


def octant_factors(problem: TransportProblem, octant: int, xs: CrossSections | None = None) -> dict:
    """Factor lists of every term for one octant, in mode order."""
    q = problem.quadrature
    grid = problem.grid
    signs = octant_signs(octant, problem.dims)
    xs = xs if xs is not None else problem.xs
    e = _energy_factors(xs)
    # axis order inside the factor list is (z, y, x); signs come as (mu, eta, xi)
    axis_names = ("mu", "eta", "xi")[: problem.dims]
    nodes = grid.nodes  # x first
    steps = grid.steps
    ip = [interp_matrix(nodes[a], signs[a], True) for a in range(problem.dims)]
    ip0 = [interp_matrix(nodes[a], signs[a], False) for a in range(problem.dims)]
    dd = [diff_matrix(nodes[a], signs[a], steps[a]) for a in range(problem.dims)]
    proj = octant_projector(q, octant)
    intg = integral_matrix(q, octant)

    def spatial(mats):
        return list(mats[::-1])

    out = {}
    for a, name in zip(range(problem.dims), ("Hx", "Hy", "Hz")):
        mats = [dd[b] if b == a else ip[b] for b in range(problem.dims)]
        out[name] = [e["stream"], angular_matrix(q, axis_names[a], octant)] + spatial(mats)
    out["Hsigma"] = [e["Hsigma"], proj] + spatial(ip)
    out["S"] = [e["S"], intg] + spatial(ip0)
    out["F"] = [e["F"], intg] + spatial(ip0)
    if e["Vinv"] is not None:
        out["Vinv"] = [e["Vinv"], proj] + spatial(ip)
    return out


def _problem_terms(problem: TransportProblem, xs=None):
    q = problem.quadrature
    return [octant_factors(problem, o, xs) for o in range(q.n_octants)]


# ---------------------------------------------------------------------------
# dense


def _kron_sparse(factors):
    out = sp.csr_matrix(factors[0])
    for f in factors[1:]:
        out = sp.kron(out, sp.csr_matrix(f), format="csr")
    return out


def _material_row_masks(problem: TransportProblem, octant: int):
    """Boolean vertex masks (z, y, x order) selecting rows owned by each material."""
    signs = octant_signs(octant, problem.dims)
    grid = problem.grid
    idx = []
    for a in range(problem.dims):
        n = grid.nodes[a]
        i = np.arange(n)
        cell = np.maximum(i - 1, 0) if signs[a] > 0 else np.minimum(i, n - 2)
        idx.append(cell)
    mesh = np.ix_(*idx[::-1])
    owner = problem.material_map[mesh]
    return {m: (owner == m).reshape(-1) for m in np.unique(problem.material_map)}


def assemble_dense_operators(problem: TransportProblem, cap: int = DENSE_CAP, sparse: bool | None = None) -> OperatorSet:
    """Fully formed operators, built by expanding the factor lists with kron.

    Arrays are dense up to ``SPARSE_THRESHOLD`` unknowns and scipy CSR beyond
    (``sparse`` overrides).  Heterogeneous problems are supported here by
    masking rows per material.
    """
    n = problem.n_unknowns
    if n > cap:
        raise CapacityError(f"{n} unknowns exceed the dense capacity cap of {cap}")
    use_sparse = n > SPARSE_THRESHOLD if sparse is None else bool(sparse)
    q = problem.quadrature
    has_v = problem.has_velocity

    def expand(factors):
        return _kron_sparse(factors) if use_sparse else kron(*factors)

    def zero():
        return sp.csr_matrix((n, n)) if use_sparse else np.zeros((n, n))

    acc = {t: zero() for t in TERMS}
    terms = {t: [] for t in TERMS}
    hetero = not problem.homogeneous
    for o in range(q.n_octants):
        if not hetero:
            fac = octant_factors(problem, o)
            for t, f in fac.items():
                acc[t] = acc[t] + expand(f)
                terms[t].append(f)
            continue
        masks = _material_row_masks(problem, o)
        base = octant_factors(problem, o, problem.materials[0])
        for t in STREAMING[: problem.dims]:
            acc[t] = acc[t] + expand(base[t])
            terms[t].append(base[t])
        for m, mask in masks.items():
            fac = octant_factors(problem, o, problem.materials[m])
            for t in ("Hsigma", "S", "F", "Vinv"):
                if t not in fac:
                    continue
                f = list(fac[t])
                spatial = expand(f[2:])
                if use_sparse:
                    spatial = sp.diags(mask.astype(float)) @ spatial
                else:
                    spatial = spatial * mask[:, None]
                f = [f[0], f[1], spatial]
                acc[t] = acc[t] + expand(f)
                terms[t].append(f)
    parts = {t: acc[t] for t in ("Hx", "Hy", "Hz")[: problem.dims] + ("Hsigma",)}
    h = sum(parts.values(), zero())
    return OperatorSet(
        "dense",
        h,
        acc["S"],
        acc["F"],
        acc["Vinv"] if has_v else None,
        parts,
        problem,
        terms,
    )


# ---------------------------------------------------------------------------
# TT and QTT


def _sum_round(items, eps):
    out = items[0]
    for it in items[1:]:
        out = out + it
    return out.round(eps)


def _check_tt_problem(problem: TransportProblem):
    if not problem.homogeneous:
        raise UnsupportedError("TT and QTT modes need a homogeneous material; use dense mode")


def assemble_tt_operators(problem: TransportProblem, eps: float = ROUND_EPS) -> OperatorSet:
    """Rank-1 TT-matrices per octant and term, summed and rounded at ``eps``."""
    _check_tt_problem(problem)
    return _assemble_lowrank(problem, ttmatrix_from_factors, "tt", eps)


def assemble_qtt_operators(problem: TransportProblem, eps: float = ROUND_EPS) -> OperatorSet:
    """QTT version: each rank-1 term is quantized factor by factor, then summed."""
    _check_tt_problem(problem)
    problem.grid.require_power_of_two()
    if not is_power_of_two(problem.G):
        raise ValidationError(f"group count must be a power of two for QTT, got {problem.G}")
    if not is_power_of_two(problem.L):
        raise ValidationError(f"ordinate count must be a power of two for QTT, got {problem.L}")
    return _assemble_lowrank(problem, lambda f: tt_operator_to_qtt(f, eps=1e-14), "qtt", eps)


def _assemble_lowrank(problem, build, rep, eps):
    fac = _problem_terms(problem)
    terms = {t: [f[t] for f in fac if t in f] for t in TERMS}
    ops = {t: _sum_round([build(f) for f in lists], eps) for t, lists in terms.items() if lists}
    names = ("Hx", "Hy", "Hz")[: problem.dims] + ("Hsigma",)
    parts = {t: ops[t] for t in names}
    h = _sum_round([parts[t] for t in names], eps)
    if rep == "qtt":
        levels = tuple(int(np.log2(n)) for n in problem.mode_sizes)
        h = QTTMatrix.wrap(h, levels)
        ops = {t: QTTMatrix.wrap(v, levels) for t, v in ops.items()}
        parts = {t: ops[t] for t in names}
    return OperatorSet(rep, h, ops["S"], ops["F"], ops.get("Vinv"), parts, problem, terms)


def assemble_operators(problem: TransportProblem, representation: str = "dense", **kw) -> OperatorSet:
    if representation == "dense":
        return assemble_dense_operators(problem, **kw)
    if representation == "tt":
        return assemble_tt_operators(problem, **kw)
    if representation == "qtt":
        return assemble_qtt_operators(problem, **kw)
    raise ValidationError(f"unknown representation {representation!r}")


def operator_max_difference(a, b) -> float:
    """Max-abs entry difference of two operators of any representation.

    A TT or QTT operand is expanded one row block at a time and compared with
    the matching rows of the other operand, so large operators never exist in
    full twice.
    """
    if not isinstance(a, TTMatrix) and isinstance(b, TTMatrix):
        a, b = b, a
    if not isinstance(a, TTMatrix):
        diff = a - b
        diff = diff.toarray() if sp.issparse(diff) else np.asarray(diff)
        return float(np.abs(diff).max()) if diff.size else 0.0
    if isinstance(b, TTMatrix):
        b = _to_dense(b)
    b = b.tocsr() if sp.issparse(b) else np.asarray(b)
    if isinstance(a, QTTMatrix):
        perm = natural_permutation(a.levels)
    else:
        perm = None
    worst = 0.0
    for start, block in a.row_blocks():
        rows = np.arange(start, start + block.shape[0])
        if perm is not None:
            ref = b[perm[rows]]
            ref = ref.toarray() if sp.issparse(ref) else ref
            ref = ref[:, perm]
        else:
            ref = b[rows]
            ref = ref.toarray() if sp.issparse(ref) else ref
        worst = max(worst, float(np.abs(block - ref).max()))
    return worst
