"""有限サイズ・熱力学極限の自己エネルギーとその解析的関係。"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from enum import Enum
from typing import NamedTuple

import numpy as np
import numpy.typing as npt

from nh_scatter.bath import (
    BathSpec,
    SymbolRoots,
    batch_symbol_roots,
    dispersion,
    dispersion_derivative,
    symbol_derivative,
    symbol_roots,
)
from nh_scatter.math import ComplexArray, kahan_sum

logger = logging.getLogger(__name__)

COLLISION_TOLERANCE: float = 1e-12
HEAVISIDE_EXPONENT: float = 700.0
JUMP_TOLERANCE: float = 1e-10
GROUP_VELOCITY_TOLERANCE: float = 1e-9
QUADRATURE_POINTS: int = 100_000


class SelfEnergyError(Exception):
    """自己エネルギー計算の基底例外。"""


class LatticeTooSmallError(SelfEnergyError):
    """格子サイズ L が p + q + 1 未満。"""

    def __init__(self, L: int, minimum: int) -> None:
        self.L = L
        self.minimum = minimum
        super().__init__(f"格子サイズが小さすぎます: L={L} < {minimum}")


class OnFiniteSpectrumError(SelfEnergyError):
    """z が有限サイズのバンドスペクトル {h_k} と衝突している。"""

    def __init__(self, z: complex, k: float) -> None:
        self.z = z
        self.k = k
        super().__init__(f"z が有限スペクトル上の h_k と衝突しています: z={z}, k={k:.12g}")


class AmbiguousBranchError(SelfEnergyError):
    """単位円上の根があるのに分枝が指定されていない。"""


class NumericalOverflowError(SelfEnergyError):
    """y^L などの評価が倍精度の範囲を超えた。"""


class VanishingGroupVelocityError(SelfEnergyError):
    """群速度 h'_k がほぼゼロ（2次の極の近傍）。"""

    def __init__(self, k: float, group_velocity: complex) -> None:
        self.k = k
        self.group_velocity = group_velocity
        super().__init__(f"h'_k がほぼゼロです: k={k:.12g}, h'_k={group_velocity}")


class BranchIdentityError(SelfEnergyError):
    """分枝間の跳び Σ^> - Σ^< が J^2 e^{ikx} / (i h'_k) と一致しない。"""

    def __init__(self, jump: complex, expected: complex) -> None:
        self.jump = jump
        self.expected = expected
        super().__init__(f"分枝の跳びが恒等式と一致しません: {jump} != {expected}")


class HighMultiplicityError(SelfEnergyError):
    """3重以上の根での留数評価は未対応。"""

    def __init__(self, root: complex, multiplicity: int) -> None:
        self.root = root
        self.multiplicity = multiplicity
        super().__init__(f"{multiplicity} 重根の留数は未対応です: y={root}")


class Branch(Enum):
    """熱力学極限量のバンド上への解析接続の分枝。"""

    GREATER = ">"  # 単位円上の根 e^{ik} を内側に数える
    LESS = "<"  # 単位円上の根 e^{ik} を外側に数える


class Side(Enum):
    """x = 0 の評価に使う半直線の表式。"""

    POSITIVE = "x>=0"
    NEGATIVE = "x<0"


class SelfEnergyKind(Enum):
    FINITE_SUM = "finite_sum"
    FINITE_RESIDUE = "finite_residue"
    THERMO = "thermo"


class SelfEnergyResult(NamedTuple):
    """自己エネルギーの評価結果。"""

    value: complex
    kind: SelfEnergyKind
    x: int
    L: int | None = None  # THERMO では None
    branch: Branch | None = None  # THERMO のみ
    side: Side | None = None  # 一方向浴の x = 0 で使った表式
    truncated: bool = False  # |y|^L をヘヴィサイド極限で置き換えた


def check_lattice(bath: BathSpec, L: int) -> None:
    """L >= p + q + 1 を検証する。"""
    minimum = bath.degree + 1
    if L < minimum:
        raise LatticeTooSmallError(L, minimum)


def site_window(L: int) -> npt.NDArray[np.int64]:
    """格子点 x = -⌊L/2⌋, ..., ⌊(L-1)/2⌋。"""
    return np.arange(-(L // 2), (L - 1) // 2 + 1)


def reduce_site(x: npt.ArrayLike, L: int) -> npt.NDArray[np.int64]:
    """x を mod L で site_window に折り返す。"""
    half = L // 2
    return np.mod(np.asarray(x, dtype=np.int64) + half, L) - half


def finite_momenta(L: int) -> npt.NDArray[np.float64]:
    """有限格子の運動量 k = 2πm/L（m = 1, ..., L）。"""
    return 2 * np.pi * np.arange(1, L + 1) / L


def convention_side(bath: BathSpec) -> Side:
    """x = 0 の表式: p = 0 なら正の半直線、q = 0 なら負の半直線。"""
    if bath.q == 0:
        return Side.NEGATIVE
    return Side.POSITIVE


def _positive_mask(bath: BathSpec, x: npt.NDArray[np.int64], side: Side | None) -> npt.NDArray:
    at_origin = side if side is not None else convention_side(bath)
    return np.where(x == 0, at_origin is Side.POSITIVE, x > 0)


def _check_collision(bath: BathSpec, L: int, z: complex) -> None:
    k = finite_momenta(L)
    distance = np.abs(z - np.asarray(dispersion(bath, k)))
    index = int(np.argmin(distance))
    if distance[index] <= COLLISION_TOLERANCE * (1 + abs(z)):
        raise OnFiniteSpectrumError(z, float(k[index]))


def f_plus(y: npt.ArrayLike, L: int) -> complex | ComplexArray:
    """f_+^(L)(y) = 1 / (y^L - 1) を桁あふれなしに評価する。"""
    y = np.asarray(y, dtype=np.complex128)
    log_y = np.log(y)
    inside = np.abs(y) <= 1
    power = np.exp(np.where(inside, L, -L) * log_y)
    result = np.where(inside, 1 / (power - 1), power / (1 - power))
    return complex(result) if result.ndim == 0 else result


def f_minus(y: npt.ArrayLike, L: int) -> complex | ComplexArray:
    """f_-^(L)(y) = -1 / (y^{-L} - 1) = f_+^(L)(y) + 1。"""
    y = np.asarray(y, dtype=np.complex128)
    log_y = np.log(y)
    inside = np.abs(y) <= 1
    power = np.exp(np.where(inside, L, -L) * log_y)
    result = np.where(inside, power / (power - 1), 1 / (1 - power))
    return complex(result) if result.ndim == 0 else result


def heaviside_limit(y: npt.ArrayLike, L: int) -> npt.NDArray[np.bool_]:
    """L |log|y|| が大きく f_± が実質ヘヴィサイド関数になっているか。"""
    return L * np.abs(np.log(np.abs(np.asarray(y, dtype=np.complex128)))) > HEAVISIDE_EXPONENT


def _weighted_powers(
    y: complex, x: npt.NDArray[np.int64], positive: npt.NDArray, L: int | None, inside: bool
) -> tuple[ComplexArray, ComplexArray]:
    """n0 = y^{x-1} φ(y) と φ'(y)/φ(y) を返す。

    φ は有限サイズでは f_±^(L)、熱力学極限では -θ(内側)（x ≥ 0）と
    θ(外側)（x < 0）。有限サイズでは指数をまとめてから exp を取る。
    """
    log_y = np.log(y)
    if L is None:
        weight = np.where(positive, -1.0 if inside else 0.0, 0.0 if inside else 1.0)
        n0 = weight * np.exp((x - 1) * log_y)
        return n0, np.zeros_like(n0)
    if abs(y) <= 1:
        power = np.exp(L * log_y)
        exponent = np.where(positive, x - 1, x - 1 + L)
        n0 = np.exp(exponent * log_y) / (power - 1)
        fp, fm = 1 / (power - 1), power / (power - 1)
    else:
        power = np.exp(-L * log_y)
        exponent = np.where(positive, x - 1 - L, x - 1)
        n0 = np.exp(exponent * log_y) / (1 - power)
        fp, fm = power / (1 - power), 1 / (1 - power)
    # f_±' = -(L / y) f_+ f_-
    ratio = np.where(positive, -(L / y) * fm, -(L / y) * fp)
    return n0, ratio


def _residue_sum(
    bath: BathSpec,
    J: float,
    values: Sequence[complex],
    multiplicities: Sequence[int],
    inside: Sequence[bool],
    x: npt.NDArray[np.int64],
    positive: npt.NDArray,
    L: int | None,
) -> ComplexArray:
    """Σ_x = -J^2 Σ_y Res_y[β^{x-1} φ(β) / (E - h(β))] を根ごとに足し上げる。"""
    total = np.zeros(x.shape, dtype=np.complex128)
    for y, multiplicity, is_inside in zip(values, multiplicities, inside, strict=True):
        n0, ratio = _weighted_powers(y, x, positive, L, is_inside)
        if multiplicity == 1:
            total = total + J**2 * n0 / complex(symbol_derivative(bath, y, 1))
        elif multiplicity == 2:
            logger.debug("2重根 y=%s の留数を極限で評価します", y)
            # E - h(β) = a2 t^2 + a3 t^3 + ...（t = β - y）
            a2 = -complex(symbol_derivative(bath, y, 2)) / 2
            a3 = -complex(symbol_derivative(bath, y, 3)) / 6
            n1 = n0 * ((x - 1) / y + ratio)
            residue = (n1 * a2 - n0 * a3) / a2**2
            total = total - J**2 * residue
        else:
            raise HighMultiplicityError(y, multiplicity)
    if not np.all(np.isfinite(total)):
        raise NumericalOverflowError("自己エネルギーの評価で桁あふれが発生しました")
    return total


def sigma_finite_sum(bath: BathSpec, J: float, L: int, z: complex, x: int = 0) -> SelfEnergyResult:
    """有限サイズ自己エネルギー Σ_x^(L)(z) = (J^2/L) Σ_k e^{ikx} / (z - h_k) を直接和で求める。

    k = 2πm/L を m = 1, ..., L の順に補償付き加算する。

    Raises:
        LatticeTooSmallError: L < p + q + 1 の場合。
        OnFiniteSpectrumError: z がいずれかの h_k と衝突する場合。
    """
    check_lattice(bath, L)
    x = int(reduce_site(x, L))
    _check_collision(bath, L, z)
    k = finite_momenta(L)
    terms = np.exp(1j * k * x) / (z - np.asarray(dispersion(bath, k)))
    value = J**2 / L * kahan_sum(complex(t) for t in terms)
    return SelfEnergyResult(value=value, kind=SelfEnergyKind.FINITE_SUM, x=x, L=L)


def sigma_finite_profile(
    bath: BathSpec, J: float, L: int, z: complex, *, side: Side | None = None
) -> ComplexArray:
    """site_window(L) 上の全 x について留数公式で Σ_x^(L)(z) を求める。"""
    check_lattice(bath, L)
    _check_collision(bath, L, z)
    roots = symbol_roots(bath, z)
    x = site_window(L)
    inside = [abs(r.value) < 1 for r in roots.roots]
    return _residue_sum(
        bath,
        J,
        roots.values,
        roots.multiplicities,
        inside,
        x,
        _positive_mask(bath, x, side),
        L,
    )


def sigma_finite_residue(
    bath: BathSpec, J: float, L: int, z: complex, x: int = 0, *, side: Side | None = None
) -> SelfEnergyResult:
    """留数公式 Σ_x^(L) = J^2 Σ_y f_{s_x}(y) y^{x-1} / h'(y) で自己エネルギーを求める。

    x ≥ 0 では f_+、x < 0 では f_- を使う。一方向浴の x = 0 は p = 0 なら
    正、q = 0 なら負の半直線の表式を採る（side で上書き可能）。重根は
    ロピタルの定理による2位の留数で評価する。

    Raises:
        LatticeTooSmallError: L < p + q + 1 の場合。
        OnFiniteSpectrumError: z がいずれかの h_k と衝突する場合。
        NumericalOverflowError: 桁あふれした場合。
    """
    check_lattice(bath, L)
    x_arr = np.array([int(reduce_site(x, L))])
    _check_collision(bath, L, z)
    roots = symbol_roots(bath, z)
    positive = _positive_mask(bath, x_arr, side)
    inside = [abs(r.value) < 1 for r in roots.roots]
    value = _residue_sum(bath, J, roots.values, roots.multiplicities, inside, x_arr, positive, L)
    used_side = None
    if x_arr[0] == 0 and bath.is_unidirectional:
        used_side = Side.POSITIVE if positive[0] else Side.NEGATIVE
    truncated = bool(np.any(heaviside_limit(roots.values, L)))
    return SelfEnergyResult(
        value=complex(value[0]),
        kind=SelfEnergyKind.FINITE_RESIDUE,
        x=int(x_arr[0]),
        L=L,
        side=used_side,
        truncated=truncated,
    )


def _classify(roots: SymbolRoots, branch: Branch | None) -> list[bool]:
    if roots.has_on_circle and branch is None:
        raise AmbiguousBranchError(
            f"単位円上の根があるため分枝の指定が必要です: E={roots.energy}"
        )
    return [
        (branch is Branch.GREATER) if r.on_circle else abs(r.value) < 1 for r in roots.roots
    ]


def sigma_thermo_profile(
    bath: BathSpec,
    J: float,
    z: complex,
    x: npt.ArrayLike,
    branch: Branch | None = None,
    *,
    side: Side | None = None,
) -> ComplexArray:
    """熱力学極限の Σ_x(z) を複数の x について求める（sigma_thermo の一括版）。"""
    roots = symbol_roots(bath, z)
    inside = _classify(roots, branch)
    x_arr = np.atleast_1d(np.asarray(x, dtype=np.int64))
    positive = _positive_mask(bath, x_arr, side)
    return _residue_sum(bath, J, roots.values, roots.multiplicities, inside, x_arr, positive, None)


def sigma_thermo(
    bath: BathSpec,
    J: float,
    z: complex,
    x: int = 0,
    branch: Branch | None = None,
    *,
    side: Side | None = None,
) -> SelfEnergyResult:
    """熱力学極限の自己エネルギー Σ_x(z) を留数で求める。

    x ≥ 0 では -J^2 Σ_{|y|<1} y^{x-1}/h'(y)、x < 0 では
    +J^2 Σ_{|y|>1} y^{x-1}/h'(y)。バンド上（単位円上の根がある）では
    GREATER はその根を内側、LESS は外側に数える。

    Raises:
        AmbiguousBranchError: 単位円上の根があり branch が None の場合。
    """
    value = sigma_thermo_profile(bath, J, z, [x], branch, side=side)
    used_side = None
    if x == 0 and bath.is_unidirectional:
        used_side = side if side is not None else convention_side(bath)
    return SelfEnergyResult(
        value=complex(value[0]), kind=SelfEnergyKind.THERMO, x=x, branch=branch, side=used_side
    )


def _continued_classification(
    bath: BathSpec, k_tilde: complex, branch: Branch
) -> tuple[SymbolRoots, list[bool]]:
    energy = complex(dispersion(bath, k_tilde))
    roots = symbol_roots(bath, energy)
    special = int(np.argmin(np.abs(roots.values - np.exp(1j * k_tilde))))
    inside = [
        (branch is Branch.GREATER) if (i == special or r.on_circle) else abs(r.value) < 1
        for i, r in enumerate(roots.roots)
    ]
    return roots, inside


def sigma_thermo_at(
    bath: BathSpec,
    J: float,
    k_tilde: complex,
    x: npt.ArrayLike = 0,
    branch: Branch = Branch.GREATER,
    *,
    side: Side | None = None,
) -> complex | ComplexArray:
    """複素運動量 k̃ で分枝ごとに解析接続した Σ_x(h_{k̃}) を求める。

    根 e^{ik̃} は分枝に従って（GREATER なら内側）数え、他の根は絶対値で
    内外を判定する。k̃ が実数ならバンド上の sigma_thermo と一致する。
    """
    roots, inside = _continued_classification(bath, k_tilde, branch)
    x_arr = np.atleast_1d(np.asarray(x, dtype=np.int64))
    positive = _positive_mask(bath, x_arr, side)
    values = _residue_sum(
        bath, J, roots.values, roots.multiplicities, inside, x_arr, positive, None
    )
    return complex(values[0]) if np.ndim(x) == 0 else values


def sigma_thermo_at_batch(
    bath: BathSpec,
    J: float,
    k_tildes: npt.ArrayLike,
    branch: Branch,
    *,
    side: Side | None = None,
) -> ComplexArray:
    """多数の k̃ について x = 0 の接続自己エネルギーを一括で求める（単純根を仮定）。"""
    k_tildes = np.atleast_1d(np.asarray(k_tildes, dtype=np.complex128))
    energies = np.asarray(dispersion(bath, k_tildes))
    roots = batch_symbol_roots(bath, energies)
    special = np.argmin(np.abs(roots - np.exp(1j * k_tildes)[:, None]), axis=1)
    is_special = np.arange(roots.shape[1])[None, :] == special[:, None]
    inside = np.where(is_special, branch is Branch.GREATER, np.abs(roots) < 1)
    at_origin = side if side is not None else convention_side(bath)
    derivative = np.asarray(symbol_derivative(bath, roots, 1))
    weights = 1 / (roots * derivative)
    if at_origin is Side.POSITIVE:
        return -(J**2) * np.sum(np.where(inside, weights, 0), axis=1)
    return J**2 * np.sum(np.where(inside, 0, weights), axis=1)


def sigma_thermo_quadrature(
    bath: BathSpec, J: float, z: complex, x: int = 0, *, n_points: int = QUADRATURE_POINTS
) -> complex:
    """熱力学極限の Σ_x(z) を一様 k 格子の求積で評価する（バンド外の z 用の独立検算）。"""
    k = 2 * np.pi * np.arange(n_points) / n_points
    terms = np.exp(1j * k * x) / (z - np.asarray(dispersion(bath, k)))
    return complex(J**2 * np.mean(terms))


def branch_jump(bath: BathSpec, J: float, k: float, x: int = 0) -> complex:
    """バンド上の跳び Σ_x^>(h_k) - Σ_x^<(h_k) を返す。

    結果が J^2 e^{ikx} / (i h'_k) と相対 1e-10 で一致することを確かめる。

    Raises:
        VanishingGroupVelocityError: |h'_k| が小さすぎる場合。
        BranchIdentityError: 恒等式が成り立たない場合。
    """
    velocity = complex(dispersion_derivative(bath, k, 1))
    if abs(velocity) < GROUP_VELOCITY_TOLERANCE * bath.scale:
        raise VanishingGroupVelocityError(k, velocity)
    z = complex(dispersion(bath, k))
    greater = sigma_thermo(bath, J, z, x, Branch.GREATER).value
    less = sigma_thermo(bath, J, z, x, Branch.LESS).value
    jump = greater - less
    expected = J**2 * np.exp(1j * k * x) / (1j * velocity)
    logger.debug("分枝の跳び k=%.6f x=%d: %s", k, x, jump)
    if abs(jump - expected) > JUMP_TOLERANCE * abs(expected):
        raise BranchIdentityError(jump, expected)
    return jump


def sum_rule_residual(bath: BathSpec, energy: complex) -> complex:
    """和則 Σ_y 1/(y h'(y)) = 0 の残差を返す。

    一方向浴では β = 0 または β = ∞ の寄与 1/(E - h_0) が加わり、
    p = 0 では 1/(E - h_0) + Σ_y 1/(y h'(y))、q = 0 では
    Σ_y 1/(y h'(y)) - 1/(E - h_0) がゼロになる。
    """
    roots = symbol_roots(bath, energy)
    total = 0j
    for root in roots.roots:
        y = root.value
        if root.multiplicity == 1:
            total += 1 / (y * complex(symbol_derivative(bath, y, 1)))
        elif root.multiplicity == 2:
            a2 = -complex(symbol_derivative(bath, y, 2)) / 2
            a3 = -complex(symbol_derivative(bath, y, 3)) / 6
            residue = (-(1 / y**2) * a2 - (1 / y) * a3) / a2**2
            total -= residue
        else:
            raise HighMultiplicityError(y, root.multiplicity)
    if bath.p == 0:
        total += 1 / (energy - bath.h0)
    elif bath.q == 0:
        total -= 1 / (energy - bath.h0)
    return total


def finite_size_deviation(
    bath: BathSpec, J: float, z: complex, L_values: Sequence[int]
) -> list[float]:
    """バンド外の z について |Σ^(L)(z) - Σ(z)| を L ごとに返す。"""
    thermo = sigma_thermo(bath, J, z).value
    return [abs(sigma_finite_residue(bath, J, L, z).value - thermo) for L in L_values]


def on_band_series(bath: BathSpec, J: float, k: float, L_values: Sequence[int]) -> list[float]:
    """バンド上 z = h_k での |Σ^(L)(z)| を L ごとに返す（熱力学極限に収束しない）。"""
    z = complex(dispersion(bath, k))
    return [abs(sigma_finite_residue(bath, J, L, z).value) for L in L_values]


class Region(Enum):
    """NNN 浴の運動量領域。"""

    K1 = "k1"  # |k| < k_SI: もう一方の根 -r が単位円の内側
    K2 = "k2"  # |k| > k_SI: -r が外側


def nnn_evanescent_root(kappa: float, kappa_p: float, k: complex) -> complex:
    """NNN 浴で E = h_k のもう一方の根 -κ' / (κ + κ' e^{-ik})。"""
    return complex(-kappa_p / (kappa + kappa_p * np.exp(-1j * k)))


def nnn_region(kappa: float, kappa_p: float, k: complex) -> Region:
    """Re k がどちらの領域に属するかを根の絶対値で判定する。"""
    root = nnn_evanescent_root(kappa, kappa_p, float(np.real(k)))
    return Region.K1 if abs(root) < 1 else Region.K2


def self_intersection_momentum(kappa: float, kappa_p: float) -> float | None:
    """NNN 浴の自己交差運動量 k_SI = arccos(-κ / 2κ')。交差がなければ None。"""
    ratio = -kappa / (2 * kappa_p)
    if abs(ratio) > 1:
        return None
    return float(np.arccos(ratio))


def hn_sigma(
    u: float, kappa: float, J: float, k: complex, x: npt.ArrayLike, branch: Branch
) -> ComplexArray:
    """Hatano-Nelson 浴の分枝ごとの Σ_x(h_k) の閉じた形。

    δ = (u - κ/2) e^{ik} - (u + κ/2) e^{-ik}、ρ = (u - κ/2)/(u + κ/2) として
    x ≥ 0 で Σ^> = (J^2/δ) e^{ikx}、Σ^< = 0。x < 0 で
    Σ^> = (J^2/δ) ρ^{-x} e^{-ikx}、Σ^< = (J^2/δ)(ρ^{-x} e^{-ikx} - e^{ikx})。
    """
    a, b = u - kappa / 2, u + kappa / 2
    delta = a * np.exp(1j * k) - b * np.exp(-1j * k)
    x = np.asarray(x, dtype=np.int64)
    plane = np.exp(1j * k * x)
    # ρ^{-x} は対数で評価する
    evanescent = np.exp(-x * np.log(complex(a / b)) - 1j * k * x)
    if branch is Branch.GREATER:
        value = np.where(x >= 0, plane, evanescent)
    else:
        value = np.where(x >= 0, 0, evanescent - plane)
    return J**2 / delta * value


def nnn_sigma(
    kappa: float,
    kappa_p: float,
    J: float,
    k: complex,
    x: npt.ArrayLike,
    region: Region,
    branch: Branch,
) -> ComplexArray:
    """一方向 NNN 浴の領域・分枝ごとの Σ_x(h_k) の閉じた形（x = 0 は正の半直線の表式）。

    δ = κ + 2κ' e^{-ik}、根 -r = -κ'/(κ + κ' e^{-ik}) として、e^{ik} と -r の
    寄与はそれぞれ e^{ik(x+1)}/δ と -(-r)^{x+1}/δ。
    """
    delta = kappa + 2 * kappa_p * np.exp(-1j * k)
    root = nnn_evanescent_root(kappa, kappa_p, k)
    x = np.asarray(x, dtype=np.int64)
    plane = np.exp(1j * k * (x + 1))
    evanescent = np.exp((x + 1) * np.log(root))
    positive = x >= 0
    if region is Region.K1:
        if branch is Branch.GREATER:
            value = np.where(positive, evanescent - plane, 0)
        else:
            value = np.where(positive, evanescent, plane)
    elif branch is Branch.GREATER:
        value = np.where(positive, -plane, -evanescent)
    else:
        value = np.where(positive, 0, plane - evanescent)
    return J**2 / delta * value
