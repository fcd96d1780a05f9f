"""密な非エルミート行列の固有値ソルバー。

ハウスホルダー変換でヘッセンベルグ形にし、ウィルキンソンシフト付きの
複素単一シフト QR 法で固有値を求める。固有ベクトルは元の行列に対する
逆反復法（LU 分解）で求め、ほぼ縮退した固有値の組は直交反復と
レイリー・リッツ法で部分空間ごとに取り出す。
"""

from __future__ import annotations

import logging
from typing import NamedTuple

import numpy as np
import numpy.typing as npt
from scipy.linalg import lu_factor, lu_solve
from tqdm import tqdm

from nh_scatter.math import ComplexArray

logger = logging.getLogger(__name__)

EXCEPTIONAL_SHIFT_PERIOD: int = 10
STALL_FACTOR: int = 30
INVERSE_ITERATIONS: int = 2
SHIFT_OFFSET: float = 1e-10
CLUSTER_GAP: float = 1e-8


class OracleError(Exception):
    """厳密対角化オラクル（固有値ソルバーを含む）の基底例外。"""


class QRStallError(OracleError):
    """固有値が規定回数内にデフレーションしない。"""

    def __init__(self, iterations: int, block: ComplexArray) -> None:
        self.iterations = iterations
        self.block = block
        super().__init__(
            f"QR 反復が {iterations} 回でデフレーションしません（残りブロック {block.shape[0]} 次）"
        )


class Eigensystem(NamedTuple):
    eigenvalues: ComplexArray
    eigenvectors: ComplexArray  # 列が右固有ベクトル（2ノルム 1）


def matrix_scale(matrix: npt.ArrayLike) -> float:
    """行列要素の最大絶対値（ゼロ行列なら 1）。"""
    largest = float(np.max(np.abs(np.asarray(matrix)), initial=0.0))
    return largest if largest > 0 else 1.0


def hessenberg(matrix: npt.ArrayLike) -> ComplexArray:
    """ハウスホルダー変換で上ヘッセンベルグ形に相似変換する。"""
    a = np.array(matrix, dtype=np.complex128)
    n = a.shape[0]
    for k in range(n - 2):
        x = a[k + 1 :, k]
        tail = np.linalg.norm(x[1:])
        if tail == 0:
            continue
        norm = np.hypot(abs(x[0]), tail)
        phase = x[0] / abs(x[0]) if x[0] != 0 else 1.0
        v = x.copy()
        v[0] += phase * norm
        v /= np.linalg.norm(v)
        a[k + 1 :, k:] -= 2 * np.outer(v, v.conj() @ a[k + 1 :, k:])
        a[:, k + 1 :] -= 2 * np.outer(a[:, k + 1 :] @ v, v.conj())
        a[k + 2 :, k] = 0
    return a


def _wilkinson_shift(a: complex, b: complex, c: complex, d: complex) -> complex:
    """2×2 ブロック [[a, b], [c, d]] の固有値のうち d に近い方。"""
    half_trace = (a + d) / 2
    root = np.sqrt(((a - d) / 2) ** 2 + b * c)
    first, second = half_trace + root, half_trace - root
    return complex(first if abs(first - d) <= abs(second - d) else second)


def _qr_sweep(h: ComplexArray, lo: int, hi: int, shift: complex) -> None:
    """ブロック h[lo:hi+1, lo:hi+1] にギブンス回転で陽的シフト QR を1回かける。"""
    size = hi - lo + 1
    block = h[lo : hi + 1, lo : hi + 1]
    block[np.diag_indices(size)] -= shift
    rotations: list[tuple[complex, complex]] = []
    for j in range(size - 1):
        a, b = block[j, j], block[j + 1, j]
        r = np.hypot(abs(a), abs(b))
        c, s = (a / r, b / r) if r != 0 else (1.0 + 0j, 0j)
        top, bottom = block[j, j:].copy(), block[j + 1, j:].copy()
        block[j, j:] = np.conj(c) * top + np.conj(s) * bottom
        block[j + 1, j:] = -s * top + c * bottom
        rotations.append((c, s))
    for j, (c, s) in enumerate(rotations):
        rows = slice(0, j + 2)
        left, right = block[rows, j].copy(), block[rows, j + 1].copy()
        block[rows, j] = left * c + right * s
        block[rows, j + 1] = -left * np.conj(s) + right * np.conj(c)
    block[np.diag_indices(size)] += shift


def eigenvalues(matrix: npt.ArrayLike) -> ComplexArray:
    """全固有値をヘッセンベルグ化 + 複素単一シフト QR 法で求める。

    Raises:
        QRStallError: 1つの固有値が 30 n 回の反復でデフレーションしない場合。
    """
    h = hessenberg(matrix)
    n = h.shape[0]
    values = np.zeros(n, dtype=np.complex128)
    eps = np.finfo(np.float64).eps
    hi = n - 1
    iterations = 0
    total = 0
    while hi >= 0:
        if hi == 0:
            values[0] = h[0, 0]
            break
        # 下から見て最初の無視できる副対角要素
        sub = np.abs(np.diagonal(h, -1)[:hi])
        diag = np.abs(np.diagonal(h))
        small = sub <= eps * (diag[:hi] + diag[1 : hi + 1])
        lo = int(np.flatnonzero(small)[-1]) + 1 if np.any(small) else 0
        if lo > 0:
            h[lo, lo - 1] = 0
        if lo == hi:
            values[hi] = h[hi, hi]
            hi -= 1
            iterations = 0
            continue
        iterations += 1
        total += 1
        if iterations > STALL_FACTOR * n:
            raise QRStallError(iterations, h[lo : hi + 1, lo : hi + 1].copy())
        if iterations % EXCEPTIONAL_SHIFT_PERIOD == 0:
            shift = h[hi, hi] + 0.75 * abs(h[hi, hi - 1]) * np.exp(0.5j * iterations)
        else:
            shift = _wilkinson_shift(h[hi - 1, hi - 1], h[hi - 1, hi], h[hi, hi - 1], h[hi, hi])
        _qr_sweep(h, lo, hi, shift)
    logger.debug("QR 反復 %d 回で %d 個の固有値を求めました", total, n)
    return values


def _clusters(values: ComplexArray, gap: float) -> list[list[int]]:
    """距離 gap 未満で連結する固有値の添字の組。"""
    order = np.argsort(values.real, kind="stable")
    parent = list(range(values.size))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for position, i in enumerate(order):
        for j in order[position + 1 :]:
            if values[j].real - values[i].real >= gap:
                break
            if abs(values[j] - values[i]) < gap:
                parent[find(int(j))] = find(int(i))
    groups: dict[int, list[int]] = {}
    for i in range(values.size):
        groups.setdefault(find(i), []).append(i)
    return [sorted(g) for g in groups.values()]


def _start_vectors(n: int, count: int) -> ComplexArray:
    rng = np.random.default_rng(0)
    start = rng.standard_normal((n, count)) + 1j * rng.standard_normal((n, count))
    return start / np.linalg.norm(start, axis=0)


def _null_vector(matrix: ComplexArray) -> ComplexArray:
    return np.linalg.svd(matrix)[2][-1].conj()


def eigenvectors(
    matrix: npt.ArrayLike, values: ComplexArray, *, progress: bool = False
) -> Eigensystem:
    """与えた固有値に対する右固有ベクトルを逆反復法で求める（列ごと、ノルム 1）。

    シフトは E + 1e-10 * max|H_ij|、反復は2回、初期ベクトルは固定の乱数。
    固有値の差が 1e-8 * max|H_ij| 未満の組は直交反復で部分空間を求め、
    その中でレイリー・リッツ法により分離し、固有値もリッツ値で置き換える。
    """
    a = np.asarray(matrix, dtype=np.complex128)
    n = a.shape[0]
    scale = matrix_scale(a)
    offset = SHIFT_OFFSET * scale
    identity = np.eye(n, dtype=np.complex128)
    values = np.array(values, dtype=np.complex128)
    vectors = np.zeros((n, values.size), dtype=np.complex128)
    groups = _clusters(values, CLUSTER_GAP * scale)
    for group in tqdm(groups, desc="固有ベクトル", disable=not progress):
        center = complex(np.mean(values[group]))
        factor = lu_factor(a - (center + offset) * identity, check_finite=False)
        block = _start_vectors(n, len(group))
        for _ in range(INVERSE_ITERATIONS):
            block = lu_solve(factor, block, check_finite=False)
            block = np.linalg.qr(block)[0] if len(group) > 1 else block / np.linalg.norm(block)
        if len(group) == 1:
            vectors[:, group[0]] = block[:, 0]
            continue
        projected = block.conj().T @ a @ block
        ritz = eigenvalues(projected)
        for index, value in zip(group, sorted(ritz, key=lambda z: (z.real, z.imag)), strict=True):
            y = _null_vector(projected - value * np.eye(len(group)))
            v = block @ y
            vectors[:, index] = v / np.linalg.norm(v)
            values[index] = value
        logger.debug("縮退した %d 個の固有値を部分空間で分離しました: E≈%s", len(group), center)
    return Eigensystem(values, vectors)


def eig(matrix: npt.ArrayLike, *, progress: bool = False) -> Eigensystem:
    """全固有値と右固有ベクトル。固有値は (Re, Im) の昇順に並べる。"""
    values = eigenvalues(matrix)
    order = np.lexsort((values.imag, values.real))
    return eigenvectors(matrix, values[order], progress=progress)


def residuals(matrix: npt.ArrayLike, system: Eigensystem) -> npt.NDArray[np.float64]:
    """各固有対の ||H v - E v|| / ||v||。"""
    a = np.asarray(matrix, dtype=np.complex128)
    v = system.eigenvectors
    diff = a @ v - v * system.eigenvalues[None, :]
    return np.linalg.norm(diff, axis=0) / np.linalg.norm(v, axis=0)
