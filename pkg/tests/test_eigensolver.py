"""eigensolver モジュールのテスト。"""

import numpy as np
import pytest

from nh_scatter.eigensolver import (
    eig,
    eigenvalues,
    eigenvectors,
    hessenberg,
    matrix_scale,
    residuals,
)


def _random_matrix(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))


def _max_set_distance(a: np.ndarray, b: np.ndarray) -> float:
    return float(max(np.min(np.abs(b - value)) for value in a))


class TestMatrixScale:
    """matrix_scale のテスト。"""

    def test_largest_entry(self) -> None:
        """最大絶対値の要素。"""
        assert matrix_scale([[1.0, -3.0j], [2.0, 0.0]]) == 3.0

    def test_zero_matrix(self) -> None:
        """ゼロ行列 → 1。"""
        assert matrix_scale(np.zeros((3, 3))) == 1.0


class TestHessenberg:
    """hessenberg のテスト。"""

    def test_lower_part_vanishes(self, rng: np.random.Generator) -> None:
        """副対角より下はゼロ。"""
        h = hessenberg(_random_matrix(rng, 12))
        assert np.all(np.tril(h, -2) == 0)

    def test_similarity_preserves_trace(self, rng: np.random.Generator) -> None:
        """相似変換なのでトレースとフロベニウスノルムが保たれる。"""
        a = _random_matrix(rng, 10)
        h = hessenberg(a)
        assert np.trace(h) == pytest.approx(np.trace(a), rel=1e-12)
        assert np.linalg.norm(h) == pytest.approx(np.linalg.norm(a), rel=1e-12)


class TestEigenvalues:
    """eigenvalues のテスト。"""

    @pytest.mark.parametrize("n", [1, 2, 5, 30])
    def test_matches_library(self, rng: np.random.Generator, n: int) -> None:
        """乱数行列の固有値が numpy の結果と一致する。"""
        a = _random_matrix(rng, n)
        ours = eigenvalues(a)
        reference = np.linalg.eigvals(a)
        assert ours.size == n
        assert _max_set_distance(ours, reference) < 1e-10 * matrix_scale(a) * n

    def test_triangular(self) -> None:
        """上三角行列 → 対角要素。"""
        a = np.triu(np.arange(1, 17, dtype=complex).reshape(4, 4))
        assert sorted(eigenvalues(a).real) == pytest.approx([1.0, 6.0, 11.0, 16.0])

    def test_hermitian_is_real(self, rng: np.random.Generator) -> None:
        """エルミート行列の固有値は実数。"""
        a = _random_matrix(rng, 25)
        values = eigenvalues(a + a.conj().T)
        assert np.max(np.abs(values.imag)) < 1e-10 * matrix_scale(a)

    def test_trace_identity(self, rng: np.random.Generator) -> None:
        """固有値の和 = トレース。"""
        a = _random_matrix(rng, 40)
        assert np.sum(eigenvalues(a)) == pytest.approx(np.trace(a), rel=1e-10)


class TestEigenvectors:
    """eigenvectors / eig / residuals のテスト。"""

    def test_residuals_small(self, rng: np.random.Generator) -> None:
        """全固有対で ||Hv - Ev|| / ||v|| < 1e-8 max|H|。"""
        a = _random_matrix(rng, 40)
        system = eig(a)
        assert np.all(residuals(a, system) < 1e-8 * matrix_scale(a))
        np.testing.assert_allclose(np.linalg.norm(system.eigenvectors, axis=0), 1.0)

    def test_sorted(self, rng: np.random.Generator) -> None:
        """固有値は (Re, Im) の昇順。"""
        values = eig(_random_matrix(rng, 15)).eigenvalues
        keys = list(zip(values.real, values.imag, strict=True))
        assert keys == sorted(keys)

    def test_degenerate_cluster(self, rng: np.random.Generator) -> None:
        """重複する固有値には線形独立な2本の固有ベクトル。"""
        similarity = _random_matrix(rng, 5)
        a = similarity @ np.diag([1.0, 1.0, 2.0, 3.0j, -1.0]) @ np.linalg.inv(similarity)
        system = eig(a)
        assert np.all(residuals(a, system) < 1e-8 * matrix_scale(a))
        pair = system.eigenvectors[:, np.abs(system.eigenvalues - 1.0) < 1e-6]
        assert pair.shape[1] == 2
        assert np.linalg.matrix_rank(pair, tol=1e-6) == 2

    def test_given_values(self) -> None:
        """与えた固有値の順に列が並ぶ。"""
        a = np.diag([3.0, 1.0, 2.0]).astype(complex)
        system = eigenvectors(a, np.array([1.0, 2.0, 3.0], dtype=complex))
        for column, index in enumerate([1, 2, 0]):
            assert abs(system.eigenvectors[index, column]) == pytest.approx(1.0)
