"""単一バンド非エルミート格子浴の分散・シンボル根・巻き数。"""

from __future__ import annotations

import logging
from collections.abc import Mapping
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import numpy.typing as npt

from nh_scatter.math import ComplexArray, wrap_momentum

logger = logging.getLogger(__name__)

ON_CIRCLE_TOLERANCE: float = 1e-8
MULTIPLICITY_TOLERANCE: float = 1e-7
ROOT_RESIDUAL_TOLERANCE: float = 1e-10
ARGUMENT_PRINCIPLE_POINTS: int = 4096
SELF_INTERSECTION_GRID: int = 256
SELF_INTERSECTION_DEDUP: float = 1e-6
# 自己交差ではなくカスプ（2次の極）とみなす運動量差
COINCIDENT_MOMENTUM: float = 1e-3


class BathError(Exception):
    """格子浴の基底例外。"""


class InvalidBathError(BathError):
    """BathSpec の不変条件違反。"""


class DegenerateBathError(BathError):
    """全ホッピングがゼロ。"""


class InfiniteRootError(BathError):
    """E = h_0 の一方向浴で根が無限遠に逃げる。"""

    def __init__(self, energy: complex) -> None:
        self.energy = energy
        super().__init__(f"E = h_0 では y^q(E - h(y)) の次数が落ちます: E={energy}")


class OnBandCurveError(BathError):
    """z がバンド曲線上にあり巻き数が定義されない。"""

    def __init__(self, z: complex, distance: float) -> None:
        self.z = z
        self.distance = distance
        super().__init__(f"z がバンド曲線上にあります: z={z}, ||y|-1|={distance:.3e}")


@dataclass(frozen=True)
class BathSpec:
    """単一バンド格子浴 h_k = Σ_{n=-p}^{q} h_n e^{-ink}。

    実空間ではホッピング行列要素 h_{x,x'} = h_{x-x'}。
    """

    hoppings: Mapping[int, complex]
    p: int  # 左ホッピング範囲
    q: int  # 右ホッピング範囲
    name: str = "custom"

    def __post_init__(self) -> None:
        if self.p < 0 or self.q < 0:
            raise InvalidBathError(
                f"ホッピング範囲は非負である必要があります: p={self.p}, q={self.q}"
            )
        if self.p + self.q < 1:
            raise InvalidBathError("p + q >= 1 である必要があります")
        hoppings = {int(n): complex(h) for n, h in self.hoppings.items()}
        outside = [n for n in hoppings if not -self.p <= n <= self.q]
        if outside:
            raise InvalidBathError(f"範囲外のホッピングがあります: {sorted(outside)}")
        if all(h == 0 for h in hoppings.values()):
            raise DegenerateBathError("全ホッピングがゼロです")
        if self.p >= 1 and hoppings.get(-self.p, 0) == 0:
            raise InvalidBathError(f"h_{{-p}} がゼロです（p={self.p} が過大）")
        if self.q >= 1 and hoppings.get(self.q, 0) == 0:
            raise InvalidBathError(f"h_q がゼロです（q={self.q} が過大）")
        object.__setattr__(self, "hoppings", hoppings)

    @classmethod
    def hatano_nelson(cls, u: float, kappa: float) -> BathSpec:
        """Hatano-Nelson 浴: h_{-1} = -(u - κ/2), h_{+1} = -(u + κ/2)。"""
        return cls(
            hoppings={-1: -(u - kappa / 2), 1: -(u + kappa / 2)},
            p=1,
            q=1,
            name="hn",
        )

    @classmethod
    def next_nearest(cls, kappa: float, kappa_p: float) -> BathSpec:
        """一方向 NNN 浴: h_1 = -κ, h_2 = -κ'。"""
        return cls(hoppings={1: -kappa, 2: -kappa_p}, p=0, q=2, name="nnn")

    @classmethod
    def from_hoppings(cls, hoppings: Mapping[int, complex], *, name: str = "custom") -> BathSpec:
        """非ゼロのホッピングから p, q を推定して生成する。"""
        nonzero = {n: h for n, h in hoppings.items() if h != 0}
        if not nonzero:
            raise DegenerateBathError("全ホッピングがゼロです")
        p = max(0, -min(nonzero))
        q = max(0, max(nonzero))
        return cls(hoppings=nonzero, p=p, q=q, name=name)

    @property
    def offsets(self) -> npt.NDArray[np.int64]:
        """オフセット n = -p, ..., q。"""
        return np.arange(-self.p, self.q + 1)

    @property
    def coefficients(self) -> ComplexArray:
        """offsets に対応する h_n の配列。"""
        values = [self.hoppings.get(int(n), 0j) for n in self.offsets]
        return np.array(values, dtype=np.complex128)

    @property
    def h0(self) -> complex:
        """オンサイト項 h_0。"""
        return self.hoppings.get(0, 0j)

    @property
    def degree(self) -> int:
        """シンボル多項式 y^q (E - h(y)) の次数 p + q。"""
        return self.p + self.q

    @property
    def is_unidirectional(self) -> bool:
        return self.p == 0 or self.q == 0

    @property
    def scale(self) -> float:
        """エネルギースケール Σ|h_n|（|h_k| の上界）。"""
        return float(np.sum(np.abs(self.coefficients)))


class SelfIntersection(NamedTuple):
    """分散の自己交差点。"""

    k_pair: tuple[float, float]  # k1 < k2, いずれも (-π, π]
    energy: complex


class SymbolRoot(NamedTuple):
    """E = h(y) の根。"""

    value: complex
    multiplicity: int
    on_circle: bool  # ||y| - 1| < η


class SymbolRoots(NamedTuple):
    """E = h(y) の全根（|y| 昇順、同率は偏角昇順）。"""

    roots: list[SymbolRoot]
    energy: complex

    @property
    def values(self) -> ComplexArray:
        """重複を展開しない根の値。"""
        return np.array([r.value for r in self.roots], dtype=np.complex128)

    @property
    def multiplicities(self) -> npt.NDArray[np.int64]:
        return np.array([r.multiplicity for r in self.roots], dtype=np.int64)

    @property
    def total_multiplicity(self) -> int:
        return int(sum(r.multiplicity for r in self.roots))

    @property
    def has_on_circle(self) -> bool:
        return any(r.on_circle for r in self.roots)

    def count_inside(self) -> int:
        """単位円の厳密に内側にある根の数（重複度込み）。"""
        return sum(r.multiplicity for r in self.roots if abs(r.value) < 1 and not r.on_circle)

    def circle_distance(self) -> float:
        """単位円に最も近い根の ||y| - 1|。"""
        return float(min(abs(abs(r.value) - 1) for r in self.roots))


def dispersion(bath: BathSpec, k: npt.ArrayLike) -> complex | ComplexArray:
    """分散 h_k = Σ h_n e^{-ink} を評価する。

    k は評価前に実部を (-π, π] に折り返す。複素運動量も受け付ける。
    """
    k_arr = wrap_momentum(k)
    result = np.exp(-1j * np.multiply.outer(k_arr, bath.offsets)) @ bath.coefficients
    if np.ndim(result) == 0:
        return complex(result)
    return result


def dispersion_derivative(
    bath: BathSpec, k: npt.ArrayLike, order: int = 1
) -> complex | ComplexArray:
    """分散の k 微分 Σ (-in)^order h_n e^{-ink} を評価する。

    Args:
        bath: 格子浴。
        k: 運動量（実数または複素数）。
        order: 微分の階数（1 または 2）。
    """
    if order not in (1, 2):
        raise ValueError(f"order は 1 または 2 です: {order}")
    k_arr = wrap_momentum(k)
    weights = (-1j * bath.offsets) ** order * bath.coefficients
    result = np.exp(-1j * np.multiply.outer(k_arr, bath.offsets)) @ weights
    if np.ndim(result) == 0:
        return complex(result)
    return result


def symbol_value(bath: BathSpec, y: npt.ArrayLike) -> complex | ComplexArray:
    """シンボル h(y) = Σ h_n y^{-n}（h_k = h(e^{ik})）。"""
    y_arr = np.asarray(y, dtype=np.complex128)
    result = np.zeros_like(y_arr)
    for n, h in bath.hoppings.items():
        result = result + h * y_arr ** (-n)
    if np.ndim(result) == 0:
        return complex(result)
    return result


def symbol_derivative(
    bath: BathSpec, y: npt.ArrayLike, order: int = 1
) -> complex | ComplexArray:
    """シンボルの y 微分 d^j h(y) / dy^j。"""
    y_arr = np.asarray(y, dtype=np.complex128)
    result = np.zeros_like(y_arr)
    for n, h in bath.hoppings.items():
        # d^j/dy^j y^{-n} = (-n)(-n-1)...(-n-j+1) y^{-n-j}
        falling = 1.0
        for i in range(order):
            falling *= -n - i
        if falling != 0:
            result = result + h * falling * y_arr ** (-n - order)
    if np.ndim(result) == 0:
        return complex(result)
    return result


def symbol_polynomial(bath: BathSpec, energy: complex) -> ComplexArray:
    """y^q (E - h(y)) の係数を降べきの順で返す（np.polyval 形式）。"""
    ascending = np.zeros(bath.degree + 1, dtype=np.complex128)
    for n, h in bath.hoppings.items():
        ascending[bath.q - n] -= h
    ascending[bath.q] += energy
    return ascending[::-1]


def _companion_roots(descending: ComplexArray) -> ComplexArray:
    """コンパニオン行列の固有値として多項式の根を求める。"""
    degree = len(descending) - 1
    monic = descending[1:] / descending[0]
    companion = np.zeros((degree, degree), dtype=np.complex128)
    companion[0, :] = -monic
    if degree > 1:
        companion[np.arange(1, degree), np.arange(degree - 1)] = 1.0
    return np.linalg.eigvals(companion)


def _polish(descending: ComplexArray, roots: ComplexArray) -> ComplexArray:
    """各根にニュートン法を1ステップ適用する。"""
    derivative = np.polyder(descending)
    values = np.polyval(descending, roots)
    slopes = np.polyval(derivative, roots)
    polished = roots.copy()
    usable = np.abs(slopes) > 1e-300
    polished[usable] = roots[usable] - values[usable] / slopes[usable]
    # 重根付近ではステップが暴れるので、残差が悪化したら採用しない
    worse = np.abs(np.polyval(descending, polished)) > np.abs(values)
    polished[worse] = roots[worse]
    return polished


def _merge(roots: ComplexArray, tolerance: float) -> list[tuple[complex, int]]:
    """相対距離 tolerance 以内の根をまとめて重複度を付ける。"""
    clusters: list[list[complex]] = []
    for root in roots:
        for cluster in clusters:
            center = complex(np.mean(cluster))
            if abs(root - center) <= tolerance * max(1.0, abs(root), abs(center)):
                cluster.append(complex(root))
                break
        else:
            clusters.append([complex(root)])
    return [(complex(np.mean(c)), len(c)) for c in clusters]


def symbol_roots(bath: BathSpec, energy: complex) -> SymbolRoots:
    """E = h(y) の全根を重複度付きで求める。

    y^q (E - h(y)) のコンパニオン行列の固有値にニュートン法を1ステップ
    かけ、相対 1e-7 以内の根を重根としてまとめる。一方向浴で生じる
    y = 0 の因子は除く。

    Args:
        bath: 格子浴。
        energy: エネルギー E。

    Returns:
        SymbolRoots: |y| 昇順（同率は偏角昇順）に並んだ根。

    Raises:
        InfiniteRootError: 一方向浴で E = h_0 のため次数が落ちる場合。
    """
    descending = symbol_polynomial(bath, energy)
    if descending[0] == 0:
        raise InfiniteRootError(energy)
    # y = 0 の因子を除く
    while len(descending) > 1 and descending[-1] == 0:
        descending = descending[:-1]
    if len(descending) == 1:
        return SymbolRoots(roots=[], energy=energy)
    raw = _polish(descending, _companion_roots(descending))
    merged = _merge(raw, MULTIPLICITY_TOLERANCE)
    merged.sort(key=lambda item: (round(abs(item[0]), 10), float(np.angle(item[0]))))
    roots = [
        SymbolRoot(value=y, multiplicity=m, on_circle=abs(abs(y) - 1) < ON_CIRCLE_TOLERANCE)
        for y, m in merged
    ]
    return SymbolRoots(roots=roots, energy=energy)


def batch_symbol_roots(bath: BathSpec, energies: npt.ArrayLike) -> ComplexArray:
    """多数のエネルギーについて根を一括で求める（重複度の整理はしない）。

    Returns:
        形状 (N, p+q) の根の配列。順序は不定。
    """
    energies = np.atleast_1d(np.asarray(energies, dtype=np.complex128))
    degree = bath.degree
    ascending = np.zeros((energies.size, degree + 1), dtype=np.complex128)
    for n, h in bath.hoppings.items():
        ascending[:, bath.q - n] -= h
    ascending[:, bath.q] += energies
    leading = ascending[:, degree]
    if np.any(leading == 0):
        raise InfiniteRootError(complex(energies[np.argmax(leading == 0)]))
    companion = np.zeros((energies.size, degree, degree), dtype=np.complex128)
    companion[:, 0, :] = -ascending[:, degree - 1 :: -1] / leading[:, None]
    if degree > 1:
        companion[:, np.arange(1, degree), np.arange(degree - 1)] = 1.0
    return np.linalg.eigvals(companion)


def winding_number(bath: BathSpec, z: complex) -> int:
    """z の周りの分散ループの巻き数 ind(h_k - z) を根の数え上げで求める。

    h(y) は y = 0 に q 位の極を持つので、偏角原理から
    巻き数 = (単位円内の根の数) - q となる。符号は h_k = Σ_n h_n e^{-ink}
    （h(y) = Σ_n h_n y^{-n}）を k の増える向きにたどった値で、y^n で展開する
    規約とは逆になる。束縛状態の分類は |w| しか使わない。

    Raises:
        OnBandCurveError: z がバンド曲線上にある場合。
    """
    roots = symbol_roots(bath, z)
    if roots.has_on_circle:
        raise OnBandCurveError(z, roots.circle_distance())
    return roots.count_inside() - bath.q


def winding_number_argument(
    bath: BathSpec, z: complex, *, n_points: int = ARGUMENT_PRINCIPLE_POINTS
) -> int:
    """偏角原理の離散積分で巻き数を求める（winding_number の検算用）。

    Raises:
        OnBandCurveError: z がバンド曲線のサンプルに近すぎる場合。
    """
    k = 2 * np.pi * np.arange(n_points) / n_points
    values = np.asarray(dispersion(bath, k)) - z
    distance = float(np.min(np.abs(values)))
    if distance <= ON_CIRCLE_TOLERANCE * bath.scale:
        raise OnBandCurveError(z, distance)
    increments = np.angle(np.roll(values, -1) / values)
    return int(round(float(np.sum(increments)) / (2 * np.pi)))


def _divided_difference(bath: BathSpec, y1: ComplexArray, y2: ComplexArray) -> ComplexArray:
    """(h(y1) - h(y2)) / (y1 - y2) を対角で特異にならない形で評価する。"""
    total = np.zeros(np.broadcast(y1, y2).shape, dtype=np.complex128)
    for n, h in bath.hoppings.items():
        if n == 0:
            continue
        m = abs(n)
        power_sum = sum(y1**j * y2 ** (m - 1 - j) for j in range(m))
        if n > 0:
            total = total - h * power_sum / (y1 * y2) ** m
        else:
            total = total + h * power_sum
    return total


def self_intersections(
    bath: BathSpec, *, grid: int = SELF_INTERSECTION_GRID
) -> list[SelfIntersection]:
    """h_{k1} = h_{k2}（k1 ≠ k2）となる自己交差点を数値的に探す。

    差商 (h(y1) - h(y2)) / (y1 - y2) の |.| を grid × grid の格子で評価し、
    局所最小を初期値としてニュートン法で精密化する。格子解像度を超えた
    網羅性は保証しない。k1 = k2 に縮退する解（2次の極）は含めない。
    """
    scale = bath.scale
    k = -np.pi + 2 * np.pi * np.arange(grid) / grid
    k1, k2 = np.meshgrid(k, k, indexing="ij")
    magnitude = np.abs(_divided_difference(bath, np.exp(1j * k1), np.exp(1j * k2)))
    is_min = np.ones_like(magnitude, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di or dj:
                is_min &= magnitude <= np.roll(np.roll(magnitude, di, axis=0), dj, axis=1)
    is_min &= k1 < k2
    seeds = np.stack([k1[is_min], k2[is_min]], axis=1)
    if seeds.size == 0:
        return []

    step = 1e-7
    for _ in range(40):
        y1 = np.exp(1j * seeds[:, 0])
        y2 = np.exp(1j * seeds[:, 1])
        value = _divided_difference(bath, y1, y2)
        d1 = (
            _divided_difference(bath, np.exp(1j * (seeds[:, 0] + step)), y2)
            - _divided_difference(bath, np.exp(1j * (seeds[:, 0] - step)), y2)
        ) / (2 * step)
        d2 = (
            _divided_difference(bath, y1, np.exp(1j * (seeds[:, 1] + step)))
            - _divided_difference(bath, y1, np.exp(1j * (seeds[:, 1] - step)))
        ) / (2 * step)
        jacobian = np.stack(
            [np.stack([d1.real, d2.real], axis=-1), np.stack([d1.imag, d2.imag], axis=-1)],
            axis=-2,
        )
        rhs = np.stack([value.real, value.imag], axis=-1)
        singular = np.abs(np.linalg.det(jacobian)) < 1e-300
        jacobian[singular] = np.eye(2)
        rhs[singular] = 0.0
        delta = np.linalg.solve(jacobian, rhs[..., None])[..., 0]
        seeds = seeds - np.clip(delta, -0.5, 0.5)

    found: list[SelfIntersection] = []
    for a, b in seeds:
        a, b = float(wrap_momentum(a)), float(wrap_momentum(b))
        if abs(float(wrap_momentum(a - b))) < COINCIDENT_MOMENTUM:
            continue
        residual = abs(_divided_difference(bath, np.exp(1j * a), np.exp(1j * b)))
        if residual > ROOT_RESIDUAL_TOLERANCE * scale:
            continue
        h_a = complex(dispersion(bath, a))
        if abs(h_a - complex(dispersion(bath, b))) > ROOT_RESIDUAL_TOLERANCE * scale:
            continue
        pair = (min(a, b), max(a, b))
        duplicate = any(
            abs(pair[0] - s.k_pair[0]) < SELF_INTERSECTION_DEDUP
            and abs(pair[1] - s.k_pair[1]) < SELF_INTERSECTION_DEDUP
            for s in found
        )
        if not duplicate:
            found.append(SelfIntersection(k_pair=pair, energy=h_a))
    found.sort(key=lambda s: s.k_pair)
    logger.info("自己交差点を %d 個検出しました（%s）", len(found), bath.name)
    return found
