import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_tt, random_ttm
from ttcrit.exceptions import ConvergenceError, ValidationError
from ttcrit.qtt import QTTVector, matrix_to_qtt, quantize_vector
from ttcrit.solvers import SolverOptions, SweepHistory, tt_linsolve, tt_matvec_fit, tt_residual
from ttcrit.tt import TTMatrix, TTVector, tt_matvec_exact, tt_norm, tt_round, ttmatrix_from_factors


def _laplace(n):
    return 2 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)


def _spd_ttm(shape, rng):
    # well conditioned SPD: shifted Kronecker sum of random SPD factors
    facs = []
    for n in shape:
        q = rng.standard_normal((n, n))
        facs.append(q @ q.T / n + np.eye(n))
    total = None
    for k in range(len(shape)):
        term = ttmatrix_from_factors([facs[j] if j == k else np.eye(n) for j, n in enumerate(shape)])
        total = term if total is None else total + term
    return total


@pytest.mark.parametrize("bad", [dict(eps=0), dict(max_sweeps=0), dict(kickrank=-1), dict(local_solver="qr")])
def test_options_validation(bad):
    with pytest.raises(ValidationError):
        SolverOptions(**bad)


def test_identity_solve(rng):
    b = random_tt((3, 4, 3), 2, rng)
    x, hist = tt_linsolve(TTMatrix.identity((3, 4, 3)), b, opts=SolverOptions(eps=1e-10))
    assert hist.converged and hist.sweeps == 1
    np.testing.assert_allclose(x.full(), b.full(), atol=1e-9 * np.abs(b.full()).max())


def test_diagonal_two(rng):
    b = random_tt((4, 4, 4), 2, rng)
    two = ttmatrix_from_factors([2 * np.eye(4), np.eye(4), np.eye(4)])
    x, _ = tt_linsolve(two, b, opts=SolverOptions(eps=1e-10))
    np.testing.assert_allclose(x.full(), b.full() / 2, atol=1e-9 * np.abs(b.full()).max())


def test_qtt_laplace_against_direct():
    n = 2**8
    lap = _laplace(n) * (n + 1) ** 2
    a = matrix_to_qtt(lap, 1e-14)
    f = np.ones(n)
    b = quantize_vector(f, 1e-14)
    # the normal equations floor the residual near cond(A)^2 * machine eps (about 1e-8 here)
    x, hist = tt_linsolve(a, b, opts=SolverOptions(eps=1e-7, max_sweeps=30))
    ref = np.linalg.solve(lap, f)
    err = np.linalg.norm(QTTVector.wrap(x, a.levels).to_dense() - ref) / np.linalg.norm(ref)
    assert err <= 1e-6
    assert hist.converged


@given(st.integers(0, 2**31 - 1), st.sampled_from([0, 2, 4]))
def test_residual_verified_independently(seed, kick):
    rng = np.random.default_rng(seed)
    a = _spd_ttm((3, 4, 3, 2), rng)
    b = random_tt((3, 4, 3, 2), 2, rng)
    x0 = random_tt((3, 4, 3, 2), 3, rng) if kick == 0 else None
    opts = SolverOptions(eps=1e-8, kickrank=kick, max_sweeps=30)
    try:
        x, hist = tt_linsolve(a, b, x0=x0, opts=opts)
    except ConvergenceError as exc:
        # fixed-rank ALS may not reach eps; the reported residual must still be honest
        assert kick == 0
        assert tt_residual(a, exc.best, b) == pytest.approx(exc.residual, rel=1e-3, abs=1e-12)
        return
    dense = np.linalg.norm(a.full() @ x.full().reshape(-1) - b.full().reshape(-1)) / tt_norm(b)
    assert tt_residual(a, x, b) <= 1e-8 * 1.01
    assert dense <= 1e-8 * 1.01


@given(st.integers(0, 2**31 - 1), st.sampled_from([0, 4]))
def test_objective_monotone(seed, kick):
    rng = np.random.default_rng(seed)
    a = _spd_ttm((4, 3, 4), rng)
    b = random_tt((4, 3, 4), 3, rng)
    opts = SolverOptions(eps=1e-13, kickrank=kick, max_sweeps=4)
    try:
        _, hist = tt_linsolve(a, b, x0=random_tt((4, 3, 4), 2, rng), opts=opts)
    except ConvergenceError as exc:
        hist = exc.history
    obj = np.asarray(hist.objectives)
    assert obj.size >= 2
    assert np.all(np.diff(obj) <= 1e-10 * max(1.0, abs(obj[0])))


def test_rank_cap_respected(rng):
    a = _spd_ttm((4, 4, 4, 4), rng)
    b = random_tt((4, 4, 4, 4), 4, rng)
    opts = SolverOptions(eps=1e-12, max_rank=3, max_sweeps=3)
    with pytest.raises(ConvergenceError) as info:
        tt_linsolve(a, b, opts=opts)
    best = info.value.best
    assert max(best.ranks) <= 3
    assert isinstance(info.value.history, SweepHistory)


@pytest.mark.parametrize("kind", ["dense", "sparse", "iterative"])
def test_local_solver_kinds_agree(rng, kind):
    a = _spd_ttm((4, 4, 4), rng)
    b = random_tt((4, 4, 4), 2, rng)
    x, _ = tt_linsolve(a, b, opts=SolverOptions(eps=1e-10, local_solver=kind))
    assert tt_residual(a, x, b) <= 1e-10 * 1.01


def test_matvec_fit_identity_and_rank1(rng):
    b = random_tt((3, 4, 2), 2, rng)
    y = tt_matvec_fit(TTMatrix.identity((3, 4, 2)), b, SolverOptions(eps=1e-12))
    np.testing.assert_allclose(y.full(), b.full(), atol=1e-11 * np.abs(b.full()).max())
    m = [rng.standard_normal((3, 3)), rng.standard_normal((2, 2))]
    v = [rng.standard_normal(3), rng.standard_normal(2)]
    y = tt_matvec_fit(ttmatrix_from_factors(m), TTVector.rank1(v), SolverOptions(eps=1e-12))
    np.testing.assert_allclose(y.full(), np.outer(m[0] @ v[0], m[1] @ v[1]), atol=1e-12)


@given(st.integers(0, 2**31 - 1))
def test_matvec_fit_matches_exact(seed):
    rng = np.random.default_rng(seed)
    a = random_ttm((2,) * 6, (2,) * 6, 4, rng)
    b = random_tt((2,) * 6, 4, rng)
    exact = tt_round(tt_matvec_exact(a, b), 1e-14)
    y = tt_matvec_fit(a, b, SolverOptions(eps=1e-10))
    assert tt_norm(y - exact) <= 1e-8 * tt_norm(exact)


def test_matvec_fit_fallback(rng):
    a = random_ttm((3, 3, 3, 3), (3, 3, 3, 3), 3, rng)
    b = random_tt((3, 3, 3, 3), 3, rng)
    hist = SweepHistory()
    y = tt_matvec_fit(a, b, SolverOptions(eps=1e-14, max_sweeps=1, kickrank=0, max_rank=2), history=hist)
    exact = tt_matvec_exact(a, b)
    assert hist.fallback
    assert tt_norm(y - exact) <= 1e-10 * tt_norm(exact)
