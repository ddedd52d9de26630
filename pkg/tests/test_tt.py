import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_tt, random_ttm
from ttcrit.dense import kron
from ttcrit.exceptions import ShapeError
from ttcrit.tt import (
    TTMatrix,
    TTVector,
    truncation_rank,
    tt_add,
    tt_dot,
    tt_matmul,
    tt_matvec_exact,
    tt_mode_apply,
    tt_mode_contract,
    tt_norm,
    tt_round,
    tt_scale,
    tt_sum,
    tt_svd,
    ttmatrix_from_factors,
)

shapes = st.lists(st.integers(1, 5), min_size=1, max_size=5).map(tuple)


def test_truncation_rank():
    s = np.array([3.0, 2.0, 1.0, 0.0])
    assert truncation_rank(s, 0.0) == 3
    assert truncation_rank(s, 1.0) == 2
    assert truncation_rank(s, np.sqrt(5)) == 1
    assert truncation_rank(s, 100.0) == 1
    assert truncation_rank(s, 0.0, max_rank=2) == 2


@given(shapes, st.sampled_from([1e-2, 1e-6, 1e-10]), st.integers(0, 2**31 - 1))
def test_tt_svd_error_bound(shape, eps, seed):
    x = np.random.default_rng(seed).standard_normal(shape)
    tt = tt_svd(x, eps)
    err = np.linalg.norm(tt.full() - x)
    assert err <= eps * np.linalg.norm(x) * (1 + 1e-8) + 1e-14
    assert tt.ranks[0] == tt.ranks[-1] == 1


def test_tt_svd_rank_one_and_zero(rng):
    a, b, c = rng.standard_normal(3), rng.standard_normal(4), rng.standard_normal(5)
    x = np.einsum("i,j,k->ijk", a, b, c)
    tt = tt_svd(x, 1e-12)
    assert tt.ranks == (1, 1, 1, 1)
    np.testing.assert_allclose(tt.full(), x, atol=1e-13)
    z = tt_svd(np.zeros((2, 3, 4)), 1e-12)
    assert z.ranks == (1, 1, 1, 1) and np.all(z.full() == 0)


def test_tt_svd_random_4567(rng):
    x = rng.standard_normal((4, 5, 6, 7))
    assert np.linalg.norm(tt_svd(x, 1e-10).full() - x) <= 1e-10 * np.linalg.norm(x)


@given(st.integers(0, 2**31 - 1))
def test_round_bound_and_rank_law(seed):
    rng = np.random.default_rng(seed)
    x = random_tt((3, 4, 3, 2), 3, rng)
    y = tt_round(x, 1e-3)
    assert all(r <= q for r, q in zip(y.ranks, x.ranks))
    assert tt_norm(x - y) <= 1e-3 * tt_norm(x) * (1 + 1e-8)
    s = tt_add(x, x)
    assert s.ranks[1:-1] == tuple(2 * r for r in x.ranks[1:-1])
    back = tt_round(s, 1e-12)
    assert back.ranks == tt_round(x, 1e-12).ranks
    np.testing.assert_allclose(back.full(), 2 * x.full(), atol=1e-10 * np.abs(x.full()).max())


def test_round_zero_eps_only_drops_exact_deficiency(rng):
    x = random_tt((3, 3, 3), 2, rng)
    assert tt_round(x, 0.0).ranks == x.ranks


def test_round_sum_of_operator_terms(rng):
    n = 4
    terms = [ttmatrix_from_factors([rng.standard_normal((n, n)) for _ in range(3)]) for _ in range(32)]
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    ref = total.full()
    rounded = total.round(1e-12)
    assert max(rounded.ranks) < max(total.ranks)
    assert np.abs(rounded.full() - ref).max() <= 1e-10 * np.abs(ref).max()


@given(st.integers(0, 2**31 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_linearity(seed, a, b):
    rng = np.random.default_rng(seed)
    x, y = random_tt((2, 3, 4), 2, rng), random_tt((2, 3, 4), 3, rng)
    z = tt_add(tt_scale(x, a), tt_scale(y, b))
    np.testing.assert_allclose(z.full(), a * x.full() + b * y.full(), atol=1e-12 * (1 + np.abs(z.full()).max()))


def test_add_zero_and_shape_error(rng):
    x = random_tt((2, 3), 2, rng)
    zero = TTVector([np.zeros((1, 2, 1)), np.zeros((1, 3, 1))])
    np.testing.assert_allclose((x + zero).full(), x.full())
    with pytest.raises(ShapeError):
        tt_add(x, random_tt((3, 2), 1, rng))


def test_reductions(rng):
    assert tt_sum(TTVector.ones((2, 3, 4))) == pytest.approx(24.0)
    a, b, c, d = (rng.standard_normal(k) for k in (3, 4, 3, 4))
    x, y = TTVector.rank1([a, b]), TTVector.rank1([c, d])
    assert tt_dot(x, y) == pytest.approx((a @ c) * (b @ d))
    u, v = random_tt((3, 2, 4), 3, rng), random_tt((3, 2, 4), 2, rng)
    assert tt_dot(u, v) == pytest.approx(np.vdot(u.full(), v.full()), rel=1e-12)
    assert tt_norm(u) == pytest.approx(np.linalg.norm(u.full()), rel=1e-12)
    assert tt_sum(u) == pytest.approx(u.full().sum(), rel=1e-10, abs=1e-12)
    with pytest.raises(ShapeError):
        tt_dot(u, random_tt((3, 2), 1, rng))


def test_from_factors(rng):
    np.testing.assert_array_equal(ttmatrix_from_factors([np.eye(2), np.eye(3)]).full(), np.eye(6))
    f = [rng.standard_normal((2, 3)), rng.standard_normal((4, 2))]
    np.testing.assert_array_equal(ttmatrix_from_factors(f).full(), np.kron(*f))


def test_laplace_kronecker_sum():
    n = 4
    l1 = 2 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)
    i = np.eye(n)
    l3 = ttmatrix_from_factors([l1, i, i]) + ttmatrix_from_factors([i, l1, i]) + ttmatrix_from_factors([i, i, l1])
    ref = kron(l1, i, i) + kron(i, l1, i) + kron(i, i, l1)
    np.testing.assert_allclose(l3.full(), ref, atol=1e-14)


@given(st.integers(0, 2**31 - 1))
def test_matvec_matches_dense(seed):
    rng = np.random.default_rng(seed)
    a = random_ttm((2, 3, 2, 3), (3, 2, 2, 2), 3, rng)
    x = random_tt((3, 2, 2, 2), 3, rng)
    y = tt_matvec_exact(a, x)
    ref = a.full() @ x.full().reshape(-1)
    assert y.ranks[1:-1] == tuple(p * q for p, q in zip(a.ranks[1:-1], x.ranks[1:-1]))
    np.testing.assert_allclose(y.full().reshape(-1), ref, atol=1e-12 * np.abs(ref).max())
    np.testing.assert_allclose(a.matmat(x.full().reshape(-1, 1))[:, 0], ref, atol=1e-12 * np.abs(ref).max())


def test_matvec_identity_and_rank1(rng):
    x = random_tt((2, 3, 4), 2, rng)
    np.testing.assert_allclose(tt_matvec_exact(TTMatrix.identity((2, 3, 4)), x).full(), x.full())
    m = [rng.standard_normal((3, 3)), rng.standard_normal((2, 2))]
    v = [rng.standard_normal(3), rng.standard_normal(2)]
    y = tt_matvec_exact(ttmatrix_from_factors(m), TTVector.rank1(v))
    assert y.ranks == (1, 1, 1)
    np.testing.assert_allclose(y.full(), np.outer(m[0] @ v[0], m[1] @ v[1]))
    with pytest.raises(ShapeError):
        tt_matvec_exact(TTMatrix.identity((3, 3)), x)


def test_matmul_and_transpose(rng):
    a = random_ttm((2, 3), (3, 2), 2, rng)
    b = random_ttm((3, 2), (2, 2), 2, rng)
    np.testing.assert_allclose(tt_matmul(a, b).full(), a.full() @ b.full(), atol=1e-12)
    np.testing.assert_allclose(a.transpose().full(), a.full().T)


def test_row_blocks_cover_matrix(rng):
    a = random_ttm((2, 3, 2), (2, 2, 3), 2, rng)
    full = a.full()
    rows = sorted((start, blk) for start, blk in a.row_blocks())
    stacked = np.vstack([b for _, b in rows])
    np.testing.assert_allclose(stacked, full)


def test_mode_apply(rng):
    x = random_tt((3, 5, 4), 2, rng)
    np.testing.assert_allclose(tt_mode_apply(x, 1, np.eye(5)).full(), x.full())
    # differencing a linear function gives its slope
    g = np.arange(5.0) * 0.5
    lin = TTVector.rank1([np.ones(3), g])
    d = np.eye(5) - np.eye(5, k=-1)
    out = tt_mode_apply(lin, 1, d[1:])
    assert out.ranks == lin.ranks
    np.testing.assert_allclose(out.full(), 0.5)
    ip = 0.5 * (np.eye(5) + np.eye(5, k=-1))
    y = tt_mode_apply(x, 1, ip)
    assert y.ranks == x.ranks
    np.testing.assert_allclose(y.full(), np.einsum("ij,ajb->aib", ip, x.full()))
    with pytest.raises(ShapeError):
        tt_mode_apply(x, 0, np.eye(4))


def test_mode_contract(rng):
    x = random_tt((3, 5, 4), 2, rng)
    w = rng.standard_normal(5)
    y = tt_mode_contract(x, 1, w)
    assert y.ndim == 2
    np.testing.assert_allclose(y.full(), np.einsum("ajb,j->ab", x.full(), w), atol=1e-12)
    ones = tt_mode_contract(TTVector.ones((2, 3)), 0, np.ones(2))
    np.testing.assert_allclose(ones.full(), 2.0)
    f, g, wl = rng.standard_normal(4), rng.standard_normal(6), rng.uniform(size=6)
    sep = tt_mode_contract(TTVector.rank1([f, g]), 1, wl)
    np.testing.assert_allclose(sep.full(), f * (wl @ g))
    scalar = tt_mode_contract(TTVector.rank1([g]), 0, wl)
    assert float(scalar) == pytest.approx(wl @ g)
    with pytest.raises(ShapeError):
        tt_mode_contract(x, 0, np.ones(4))


def test_from_dense_matrix_roundtrip(rng):
    m = rng.standard_normal((6, 6))
    a = TTMatrix.from_dense(m, (2, 3), (3, 2))
    np.testing.assert_allclose(a.full(), m, atol=1e-12)


def test_random_positive():
    x = TTVector.random((3, 4), rank=2, seed=0, positive=True)
    assert np.all(x.full() > 0)


@pytest.mark.parametrize("kind", ["vector", "matrix", "qtt"])
def test_npz_roundtrip(tmp_path, rng, kind):
    from ttcrit.io import load_tt, save_tt
    from ttcrit.qtt import matrix_to_qtt

    obj = {
        "vector": lambda: random_tt((2, 3), 2, rng),
        "matrix": lambda: random_ttm((2, 3), (3, 2), 2, rng),
        "qtt": lambda: matrix_to_qtt(rng.standard_normal((8, 8))),
    }[kind]()
    save_tt(tmp_path / "x.npz", obj)
    back = load_tt(tmp_path / "x.npz")
    assert type(back) is type(obj)
    np.testing.assert_array_equal(back.full(), obj.full())
    assert getattr(back, "levels", None) == getattr(obj, "levels", None)
