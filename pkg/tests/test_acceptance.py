"""Acceptance criteria 1-7.  Each test records one PASS/FAIL line, printed at the end of the run."""

import time

import numpy as np
import pytest
from scipy.optimize import brentq

from conftest import ACCEPTANCE, random_tt
from ttcrit.criticality import EigenOptions, compression_ratio, solve_alpha, solve_keff
from ttcrit.dense import dense_generalized_eigensolve
from ttcrit.exceptions import ConvergenceError
from ttcrit.qtt import dequantize_vector, matrix_to_qtt, quantize_vector
from ttcrit.solvers import SolverOptions, tt_linsolve
from ttcrit.transport import (
    CrossSections,
    SpatialGrid,
    TransportProblem,
    apply_loop_oracle,
    assemble_operators,
    build_quadrature,
    operator_max_difference,
    pu239_slab,
)
from ttcrit.tt import TTMatrix, tt_matvec_exact, tt_norm, tt_round, tt_svd, ttmatrix_from_factors

# [DERIVED] |k(L=32) - 1| for the dense GES oracle is 3.61e-4 at 1024 nodes; 1e-3 leaves headroom
K32_BOUND = 1e-3


def record(n, ok, detail):
    ACCEPTANCE[n] = (bool(ok), detail)
    assert ok, detail


def _ges(ops, alpha=0.0):
    a = ops.H - ops.S if alpha == 0 else ops.H + alpha * ops.Vinv - ops.S
    return dense_generalized_eigensolve(a, ops.F, method="direct")


def cube(nodes=8, side=4.0, G=1):
    if G == 1:
        xs = CrossSections([1.0], [[0.6]], [0.7], [1.0], velocity=[1.0])
    else:
        xs = CrossSections([1.0, 1.5], [[0.3, 0.0], [0.2, 0.9]], [0.2, 0.5], [0.9, 0.1], velocity=[10.0, 1.0])
    grid = SpatialGrid(3, (nodes,) * 3, ((0.0, side),) * 3)
    return TransportProblem(grid, build_quadrature(2, 3), (xs,), name=f"cube{nodes}")


@pytest.fixture(scope="module")
def slab32():
    p = pu239_slab()
    ops = assemble_operators(p, "dense")
    return p, ops


@pytest.fixture(scope="module")
def tensor_runs(slab32):
    p, _ = slab32
    out = {}
    for mode in ("tt", "qtt"):
        t0 = time.perf_counter()
        res = solve_keff(assemble_operators(p, mode), EigenOptions(tol=1e-7))
        out[mode] = (res, time.perf_counter() - t0)
    return out


def test_criterion_1_convergence_in_angle(slab32):
    p, ops32 = slab32
    ks, times = [], []
    for N in (2, 4, 8, 16, 32):
        t0 = time.perf_counter()
        ops = ops32 if N == 32 else assemble_operators(p.with_quadrature(N), "dense")
        ks.append(solve_keff(ops, EigenOptions(tol=1e-8)).eigenvalue)
        times.append(time.perf_counter() - t0)
    dev = np.abs(np.array(ks) - 1)
    ok = bool(np.all(np.diff(dev) < 0)) and dev[-1] <= K32_BOUND and max(times) <= 120
    record(1, ok, "|k-1| over L=2..32: " + ", ".join(f"{d:.2e}" for d in dev)
           + f"; bound {K32_BOUND:g}; slowest L {max(times):.1f}s")


def test_criterion_2_solver_agreement(slab32, tensor_runs):
    p, ops = slab32
    t0 = time.perf_counter()
    k_ges, v_ges = _ges(ops)
    isfm = solve_keff(ops, EigenOptions(tol=1e-8))
    dense_time = time.perf_counter() - t0
    d_ges = abs(k_ges - isfm.eigenvalue)
    deltas = {m: abs(r.eigenvalue - isfm.eigenvalue) for m, (r, _) in tensor_runs.items()}
    vec = {m: np.abs(r.psi_dense() - isfm.psi_dense()).max() for m, (r, _) in tensor_runs.items()}
    total = dense_time + sum(t for _, t in tensor_runs.values())
    ok = d_ges <= 1e-6 and max(deltas.values()) <= 1e-6 and max(vec.values()) <= 1e-4 and total <= 300
    record(2, ok, f"|GES-ISFM| {d_ges:.1e}; |ISFM-TT| {deltas['tt']:.1e}; |ISFM-QTT| {deltas['qtt']:.1e}; "
           f"max|dpsi| TT {vec['tt']:.1e} QTT {vec['qtt']:.1e}; {total:.0f}s")


def test_criterion_3_operator_equivalence():
    t0 = time.perf_counter()
    p = cube(nodes=8, side=2.0, G=2)
    assert p.L == 8 and p.G == 2
    dense = assemble_operators(p, "dense")
    reps = {m: assemble_operators(p, m) for m in ("tt", "qtt")}
    names = ("H", "S", "F", "Vinv")
    expand = max(operator_max_difference(dense.operators()[n], r.operators()[n]) for r in reps.values() for n in names)
    psi = np.random.default_rng(0).standard_normal((p.n_unknowns, 20))
    ref = apply_loop_oracle(p, psi)
    oracle = max(np.abs(r.operators()[n].matmat(psi) - ref[n]).max() for r in reps.values() for n in names)
    oracle = max(oracle, max(np.abs(dense.operators()[n] @ psi - ref[n]).max() for n in names))
    elapsed = time.perf_counter() - t0
    ok = expand <= 1e-8 and oracle <= 1e-10 and elapsed <= 60
    record(3, ok, f"max expand diff {expand:.1e} (<=1e-8); max oracle diff on 20 psi {oracle:.1e} (<=1e-10); "
           f"{elapsed:.0f}s")


def test_criterion_4_3d_eigenvalue():
    t0 = time.perf_counter()
    p = cube()
    k_ges, _ = _ges(assemble_operators(p, "dense"))
    res = solve_keff(assemble_operators(p, "qtt"), EigenOptions(tol=1e-6))
    elapsed = time.perf_counter() - t0
    err = abs(res.eigenvalue - k_ges)
    ok = 0.9 < k_ges < 1.1 and err <= 1e-6 and elapsed <= 300
    record(4, ok, f"dense GES k {k_ges:.9f}; QTT k {res.eigenvalue:.9f}; |diff| {err:.1e}; "
           f"{res.iterations} outer; {elapsed:.0f}s")


def test_criterion_5_alpha(slab32):
    t0 = time.perf_counter()
    p, ops = slab32
    # [DERIVED] discretization bound: twice the dense-GES alpha root of the critical slab
    a_ges = brentq(lambda a: _ges(ops, a)[0] - 1.0, -0.05, 0.05, xtol=1e-12)
    bound = 2 * abs(a_ges)
    crit = solve_alpha(assemble_operators(p, "qtt"), EigenOptions(tol=1e-6))
    wide_ops = assemble_operators(p.with_width(2.0), "dense")
    wide = solve_alpha(wide_ops, EigenOptions(tol=1e-6))
    recheck = {
        "critical": solve_keff(assemble_operators(p, "qtt"), EigenOptions(tol=1e-7), alpha=crit.eigenvalue),
        "wide": solve_keff(wide_ops, EigenOptions(tol=1e-9), alpha=wide.eigenvalue),
    }
    dk = max(abs(r.eigenvalue - 1) for r in recheck.values())
    elapsed = time.perf_counter() - t0
    its = max(crit.iterations, wide.iterations)
    ok = (abs(crit.eigenvalue) <= bound and wide.eigenvalue > 0 and wide.extra["k_at_zero"] > 1
          and dk <= 1e-6 and its <= 10 and elapsed <= 300)
    record(5, ok, f"(a) |alpha| {abs(crit.eigenvalue):.2e} <= {bound:.2e}; (b) width x2 alpha {wide.eigenvalue:.4f}, "
           f"k(0) {wide.extra['k_at_zero']:.4f}; (c) max|k(alpha*)-1| {dk:.1e}; {its} alpha iterations; "
           f"{elapsed:.0f}s")


def test_criterion_6_compression(tensor_runs):
    psi_ratio = compression_ratio(tensor_runs["qtt"][0].psi)
    p = cube(nodes=16)
    h = assemble_operators(p, "qtt").H
    factor = p.n_unknowns**2 / h.size
    ok = psi_ratio <= 0.1 and factor >= 10
    record(6, ok, f"1D QTT psi compression {psi_ratio:.3e} (<=0.1); 16^3 QTT H stores {h.size} of "
           f"{p.n_unknowns ** 2} elements ({factor:.1e}x smaller)")


def test_criterion_7_library_properties():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    fails = []
    for case in range(100):
        eps = 10.0 ** rng.uniform(-12, -2)
        shape = tuple(rng.integers(1, 6, size=rng.integers(1, 6)))
        x = rng.standard_normal(shape)
        tt = tt_svd(x, eps)
        if np.linalg.norm(tt.full() - x) > eps * np.linalg.norm(x) * (1 + 1e-8):
            fails.append(("tt_svd", case))
        y = random_tt(shape, 3, rng)
        r = tt_round(y, eps)
        if tt_norm(r - y) > eps * tt_norm(y) * (1 + 1e-6) + 1e-15:
            fails.append(("tt_round", case))
        n = int(rng.integers(1, 11))
        v = rng.standard_normal(2**n)
        if np.linalg.norm(dequantize_vector(quantize_vector(v, eps)) - v) > eps * np.linalg.norm(v) * (1 + 1e-8):
            fails.append(("quantize", case))
        m = rng.standard_normal((2 ** (n % 6 + 1),) * 2)
        if np.linalg.norm(matrix_to_qtt(m, eps).to_dense() - m) > eps * np.linalg.norm(m) * (1 + 1e-8):
            fails.append(("matrix_to_qtt", case))

    # linear solve: residual recomputed with exact TT arithmetic, independent of the solver
    lin_worst = 0.0
    for seed in range(5):
        g = np.random.default_rng(seed)
        facs = [(lambda q: q @ q.T / 4 + np.eye(4))(g.standard_normal((4, 4))) for _ in range(4)]
        a = sum((ttmatrix_from_factors([facs[j] if j == k else np.eye(4) for j in range(4)]) for k in range(4)),
                TTMatrix([np.zeros((1, 4, 4, 1))] * 4))
        b = random_tt((4,) * 4, 2, g)
        x, _ = tt_linsolve(a, b, opts=SolverOptions(eps=1e-8))
        lin_worst = max(lin_worst, tt_norm(tt_matvec_exact(a, x) - b) / tt_norm(b))

    # ALS objective must not increase across half-sweeps
    mono_worst = -np.inf
    for seed in range(5):
        g = np.random.default_rng(100 + seed)
        a = TTMatrix.identity((3,) * 4) + ttmatrix_from_factors([np.diag(g.uniform(0, 1, 3)) for _ in range(4)])
        b = random_tt((3,) * 4, 3, g)
        try:
            _, hist = tt_linsolve(a, b, x0=random_tt((3,) * 4, 2, g),
                                  opts=SolverOptions(eps=1e-14, kickrank=0, max_sweeps=4))
        except ConvergenceError as exc:
            hist = exc.history
        obj = np.asarray(hist.objectives)
        mono_worst = max(mono_worst, np.max(np.diff(obj)) / max(1.0, obj[0]))
    elapsed = time.perf_counter() - t0
    ok = not fails and lin_worst <= 1e-8 * 1.01 and mono_worst <= 1e-10 and elapsed <= 120
    record(7, ok, f"roundtrip failures {len(fails)}/400; worst verified linsolve residual {lin_worst:.1e}; "
           f"max objective increase {mono_worst:.1e}; {elapsed:.0f}s")
