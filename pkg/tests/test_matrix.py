import numpy as np
import pytest

from dcfpca.matrix import (
    ShapeError,
    SizeLimitError,
    frobenius_norm,
    jacobi_svd,
    l1_norm,
    lowrank_svd,
    matmul,
    nuclear_norm_small,
    read_coo,
    read_dmat,
    singular_values_lowrank,
    write_coo,
    write_dmat,
)

from oracles import singular_values


def test_matmul_identity_and_zero():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((3, 4))
    assert np.array_equal(matmul(np.eye(3), A), A)
    assert np.array_equal(matmul(A, np.zeros((4, 2))), np.zeros((3, 2)))
    B = np.array([[1.0, 2], [3, 4]])
    assert np.array_equal(matmul(B, np.eye(2)), B)


def test_matmul_shape_error():
    with pytest.raises(ShapeError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_associative():
    rng = np.random.default_rng(1)
    for _ in range(20):
        a, b, c, d = rng.integers(1, 8, size=4)
        A, B, C = rng.standard_normal((a, b)), rng.standard_normal((b, c)), rng.standard_normal((c, d))
        left = matmul(matmul(A, B), C)
        right = matmul(A, matmul(B, C))
        assert np.linalg.norm(left - right) <= 1e-9 * max(1.0, np.linalg.norm(left))


def test_matmul_rejects_nonfinite():
    with pytest.raises(ValueError):
        matmul(np.array([[np.nan]]), np.array([[1.0]]))


def test_frobenius_norm():
    assert frobenius_norm(np.zeros((3, 3))) == 0
    assert frobenius_norm(np.array([[3.0, 4.0]])) == 5
    A = np.random.default_rng(2).standard_normal((5, 5))
    assert np.isclose(frobenius_norm(A), np.sqrt(np.trace(A.T @ A)), rtol=1e-14)


def test_l1_norm():
    assert l1_norm(np.zeros((2, 2))) == 0
    assert l1_norm(np.array([[-1.0, 2], [0, -3]])) == 6
    rng = np.random.default_rng(3)
    S = rng.standard_normal((8, 9)) * (rng.random((8, 9)) < 0.2)
    total = 0.0
    for x in S.ravel():
        total += abs(x)
    assert np.isclose(l1_norm(S), total, rtol=1e-14)


@pytest.mark.parametrize("shape", [(1, 1), (5, 5), (7, 3), (3, 7), (40, 12), (12, 40)])
def test_jacobi_svd_matches_lapack(shape):
    A = np.random.default_rng(sum(shape)).standard_normal(shape)
    u, s, v = jacobi_svd(A)
    assert np.all(np.diff(s) <= 0)
    np.testing.assert_allclose(s, singular_values(A), rtol=1e-12, atol=1e-13)
    np.testing.assert_allclose(u * s @ v.T, A, atol=1e-12)
    k = min(shape)
    np.testing.assert_allclose(v.T @ v, np.eye(k), atol=1e-12)
    np.testing.assert_allclose(u.T @ u, np.eye(k), atol=1e-12)


def test_jacobi_svd_rank_deficient():
    rng = np.random.default_rng(4)
    A = rng.standard_normal((10, 2)) @ rng.standard_normal((2, 8))
    _, s, _ = jacobi_svd(A)
    assert np.all(s[2:] < 1e-12 * s[0])
    np.testing.assert_allclose(s[:2], singular_values(A)[:2], rtol=1e-12)


def test_singular_values_lowrank_examples():
    u = np.zeros((5, 1))
    u[0] = 2
    v = np.zeros((4, 1))
    v[0] = 3
    np.testing.assert_allclose(singular_values_lowrank(u, v), [6.0])

    rng = np.random.default_rng(5)
    qu, _ = np.linalg.qr(rng.standard_normal((9, 2)))
    qv, _ = np.linalg.qr(rng.standard_normal((7, 2)))
    np.testing.assert_allclose(singular_values_lowrank(qu * [5.0, 2.0], qv), [5.0, 2.0], rtol=1e-13)


def test_singular_values_lowrank_random_50x60():
    rng = np.random.default_rng(6)
    U, V = rng.standard_normal((50, 4)), rng.standard_normal((60, 4))
    got = singular_values_lowrank(U, V)
    assert got.shape == (4,)
    np.testing.assert_allclose(got, singular_values(U @ V.T)[:4], rtol=1e-8)


def test_singular_values_lowrank_many():
    rng = np.random.default_rng(7)
    for _ in range(25):
        m, n = rng.integers(5, 101, size=2)
        p = int(rng.integers(1, min(m, n, 8) + 1))
        U, V = rng.standard_normal((m, p)), rng.standard_normal((n, p))
        np.testing.assert_allclose(
            singular_values_lowrank(U, V), singular_values(U @ V.T)[:p], rtol=1e-8, atol=1e-10
        )


def test_lowrank_svd_reconstructs():
    rng = np.random.default_rng(8)
    U, V = rng.standard_normal((30, 3)), rng.standard_normal((20, 3))
    left, s, right = lowrank_svd(U, V)
    np.testing.assert_allclose(left * s @ right.T, U @ V.T, atol=1e-11)


def test_lowrank_shape_errors():
    with pytest.raises(ShapeError):
        singular_values_lowrank(np.ones((3, 4)), np.ones((5, 4)))
    with pytest.raises(ShapeError):
        singular_values_lowrank(np.ones((3, 2)), np.ones((5, 3)))


def test_nuclear_norm_small():
    assert np.isclose(nuclear_norm_small(np.eye(3)), 3)
    assert np.isclose(nuclear_norm_small(np.diag([2.0, 0.0])), 2)
    rng = np.random.default_rng(9)
    A = rng.standard_normal((20, 20))
    assert nuclear_norm_small(A) >= frobenius_norm(A)
    R1 = np.outer(rng.standard_normal(20), rng.standard_normal(20))
    assert np.isclose(nuclear_norm_small(R1), frobenius_norm(R1), rtol=1e-12)


def test_nuclear_norm_size_limit():
    with pytest.raises(SizeLimitError):
        nuclear_norm_small(np.zeros((501, 501)))


def test_nuclear_norm_variational_inequality():
    rng = np.random.default_rng(10)
    for _ in range(100):
        m, n = rng.integers(2, 25, size=2)
        p = int(rng.integers(1, 6))
        U, V = rng.standard_normal((m, p)), rng.standard_normal((n, p))
        bound = 0.5 * (np.sum(U * U) + np.sum(V * V))
        assert nuclear_norm_small(U @ V.T) <= bound * (1 + 1e-12)


def test_nuclear_norm_variational_equality_at_balanced_factors():
    rng = np.random.default_rng(11)
    A = rng.standard_normal((12, 3)) @ rng.standard_normal((3, 9))
    left, s, right = np.linalg.svd(A, full_matrices=False)
    U, V = left * np.sqrt(s), right.T * np.sqrt(s)
    assert np.isclose(0.5 * (np.sum(U * U) + np.sum(V * V)), nuclear_norm_small(A), rtol=1e-12)


def test_dmat_round_trip(tmp_path):
    rng = np.random.default_rng(12)
    A = rng.standard_normal((6, 4)) * 10.0 ** rng.integers(-300, 300, size=(6, 4))
    path = tmp_path / "a.dmat"
    write_dmat(path, A)
    assert open(path).readline().strip() == "6 4"
    assert np.array_equal(read_dmat(path), A)


def test_dmat_rejects_bad_files(tmp_path):
    bad = tmp_path / "bad.dmat"
    bad.write_text("2 2\n1 2\n3\n")
    with pytest.raises(ValueError):
        read_dmat(bad)


def test_coo_round_trip(tmp_path):
    S = np.zeros((5, 7))
    S[0, 3] = -2.5
    S[4, 6] = 1e-300
    path = tmp_path / "s.coo"
    write_coo(path, S)
    lines = open(path).read().split("\n")
    assert lines[0].split()[:2] == ["0", "3"]
    assert np.array_equal(read_coo(path, S.shape), S)
