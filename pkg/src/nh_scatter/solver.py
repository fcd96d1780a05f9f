"""永年方程式の解: 散乱状態の複素運動量、束縛状態、縮退した場合の解。"""

from __future__ import annotations

import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np
from tqdm import tqdm

from nh_scatter.bath import (
    BathSpec,
    InfiniteRootError,
    OnBandCurveError,
    SelfIntersection,
    dispersion,
    dispersion_derivative,
    self_intersections,
    symbol_roots,
    winding_number,
)
from nh_scatter.math import ComplexArray, wrap_momentum
from nh_scatter.selfenergy import (
    AmbiguousBranchError,
    Branch,
    Region,
    OnFiniteSpectrumError,
    SelfEnergyError,
    Side,
    check_lattice,
    convention_side,
    finite_momenta,
    nnn_sigma,
    sigma_finite_residue,
    sigma_thermo,
    sigma_thermo_at,
    sigma_thermo_at_batch,
)

logger = logging.getLogger(__name__)

MAX_NEWTON_STEPS: int = 100
POLE_TOLERANCE: float = 1e-12
FINE_TUNED_RADIUS: float = 1e-3
VANISHING_DERIVATIVE: float = 1e-6
DEGENERACY_TOLERANCE: float = 1e-10
BOUND_GRID: int = 64
BOUND_IM_RANGE: float = 3.0
BOUND_DEDUP: float = 1e-6
BOUND_BAND_DISTANCE: float = 1e-6
TINY_EMITTER: float = 1e-12
FINITE_STEP: float = 1e-7
ROUNDING_FACTOR: float = 16.0


class SolverError(Exception):
    """永年方程式ソルバーの基底例外。"""


class InvalidEmitterError(SolverError):
    """結合 J がゼロなど、エミッタのパラメータが不正。"""


class AtPoleError(SolverError):
    """z がエミッタのグリーン関数の極（束縛状態のエネルギー）上にある。"""

    def __init__(self, z: complex, denominator: complex) -> None:
        self.z = z
        self.denominator = denominator
        super().__init__(f"z がグリーン関数の極上にあります: z={z}, |1/G|={abs(denominator):.3e}")


class NoConvergenceError(SolverError):
    """ニュートン法が規定回数内に収束しない。"""

    def __init__(self, label: str, trace: list[float]) -> None:
        self.label = label
        self.trace = trace
        last = trace[-1] if trace else float("nan")
        super().__init__(f"ニュートン法が収束しません（{label}）: {len(trace)} 反復, 残差 {last:.3e}")


class ConvergedToBoundStateError(SolverError):
    """解が散乱領域を外れた（|Im k̃| > 10/L）。"""

    def __init__(self, m: int, k_tilde: complex, L: int) -> None:
        self.m = m
        self.k_tilde = k_tilde
        self.L = L
        super().__init__(f"モード m={m} の解が束縛状態に収束しました: k̃={k_tilde}, L={L}")


class NotDegenerateError(SolverError):
    """縮退・微調整の条件を満たさない。"""


class FineTunedInputError(SolverError):
    """運動量が自己交差点または群速度ゼロの点の除外半径内にある。"""

    def __init__(self, k: float, fine_tuned: float) -> None:
        self.k = k
        self.fine_tuned = fine_tuned
        super().__init__(f"k={k:.6f} は微調整点 {fine_tuned:.6f} に近すぎます")


@dataclass(frozen=True)
class EmitterParams:
    """二準位エミッタの結合 J と離調 Δ。"""

    J: float
    delta: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.J) and np.isfinite(self.delta)):
            raise InvalidEmitterError(f"J と Δ は有限である必要があります: J={self.J}, Δ={self.delta}")

    def require_coupling(self) -> None:
        """J ≠ 0 を要求する。"""
        if self.J == 0:
            raise InvalidEmitterError("結合 J はゼロであってはいけません")


class BoundKind(Enum):
    CONVENTIONAL = "conventional"  # 巻き数 0 の領域
    HIDDEN = "hidden"  # 巻き数が非ゼロの領域


class SecondOrderPole(NamedTuple):
    """群速度がゼロになる運動量 k_r と求めるモード番号。"""

    k_r: float
    modes: tuple[int, ...] = (1, 2)


class ScatteringMomentum(NamedTuple):
    """有限サイズ散乱状態の複素運動量。"""

    k_base: float  # 2πm/L または目標運動量
    k_tilde: complex
    E: complex
    L: int
    residual: complex  # E - Δ - Σ^(L)(E)
    branch_used: Branch
    m: int | None = None
    iterations: int = 0
    emitter_weight: float = 0.0  # 規格化した状態での |c_e|^2
    partner: complex | None = None  # 縮退した場合の相方 k̃_γ

    @property
    def tiny_emitter(self) -> bool:
        """|c_e| < 1e-12。"""
        return self.emitter_weight < TINY_EMITTER**2

    @property
    def is_degenerate(self) -> bool:
        return self.partner is not None


class ScatteringBatch(NamedTuple):
    """scattering_momenta の結果。"""

    momenta: list[ScatteringMomentum]
    skipped: dict[int, SolverError]


class BoundState(NamedTuple):
    """熱力学極限のエミッタのグリーン関数の極。"""

    E_b: complex
    k_tilde: complex
    pole_branch: Branch
    region_winding: int
    kind: BoundKind
    side: Side
    residual: complex  # E_b - Δ - Σ(E_b)
    branches: tuple[Branch, ...] = ()

    @property
    def localization_length(self) -> float:
        """局在長 1/|Im k̃|（格子間隔単位）。"""
        return 1.0 / abs(self.k_tilde.imag)


def _green_denominator(
    bath: BathSpec, params: EmitterParams, z: complex, sigma: complex
) -> complex:
    denominator = z - params.delta - sigma
    if abs(denominator) < POLE_TOLERANCE * bath.scale:
        raise AtPoleError(z, denominator)
    return denominator


def emitter_green(
    bath: BathSpec,
    params: EmitterParams,
    z: complex,
    branch: Branch | None = None,
    *,
    side: Side | None = None,
) -> complex:
    """エミッタのグリーン関数 G_e(z) = 1 / (z - Δ - Σ(z)) を分枝を指定して求める。

    一方向浴では x = 0 の自己エネルギーに side（既定は物理的な側）の表式を使う。

    Raises:
        AtPoleError: |z - Δ - Σ(z)| < 1e-12 * scale の場合。
        AmbiguousBranchError: バンド上で branch が指定されていない場合。
    """
    sigma = sigma_thermo(bath, params.J, z, 0, branch, side=side).value
    return 1 / _green_denominator(bath, params, z, sigma)


def emitter_green_at(
    bath: BathSpec,
    params: EmitterParams,
    k_tilde: complex,
    branch: Branch,
    *,
    side: Side | None = None,
) -> complex:
    """複素運動量 k̃ へ分枝ごとに解析接続した G_e(h_{k̃})。"""
    sigma = complex(sigma_thermo_at(bath, params.J, k_tilde, 0, branch, side=side))
    return 1 / _green_denominator(bath, params, complex(dispersion(bath, k_tilde)), sigma)


def nnn_emitter_green(
    kappa: float,
    kappa_p: float,
    params: EmitterParams,
    k: complex,
    region: Region,
    branch: Branch,
    side: Side = Side.POSITIVE,
) -> complex:
    """NNN 浴のエミッタのグリーン関数の閉じた形（領域・分枝・側ごと）。

    負の側の表式は x → 0⁻ の自己エネルギーを使い、正の側とは
    J^2 / h_k だけ異なる。
    """
    energy = complex(-kappa * np.exp(-1j * k) - kappa_p * np.exp(-2j * k))
    sigma = complex(nnn_sigma(kappa, kappa_p, params.J, k, 0, region, branch))
    if side is Side.NEGATIVE:
        sigma -= params.J**2 / energy
    return 1 / (energy - params.delta - sigma)


def imk_leading(bath: BathSpec, params: EmitterParams, L: int, k: float) -> float:
    """Im k̃ の主要項 (1/L) log|G_e^>(h_k) / G_e^<(h_k)|。"""
    z = complex(dispersion(bath, k))
    greater = emitter_green(bath, params, z, Branch.GREATER)
    less = emitter_green(bath, params, z, Branch.LESS)
    return float(np.log(abs(greater / less)) / L)


def ratio_momentum(bath: BathSpec, params: EmitterParams, L: int, m: int) -> complex:
    """e^{ik̃L} ≈ G_e^< / G_e^> から k̃ ≈ (2πm - i Log(G_e^< / G_e^>)) / L を求める。"""
    z = complex(dispersion(bath, 2 * np.pi * m / L))
    greater = emitter_green(bath, params, z, Branch.GREATER)
    less = emitter_green(bath, params, z, Branch.LESS)
    return complex(wrap_momentum((2 * np.pi * m - 1j * np.log(less / greater)) / L))


def fine_tuned_momenta(bath: BathSpec) -> list[float]:
    """自己交差点の運動量と群速度がゼロになる運動量を列挙する。"""
    momenta = [k for si in self_intersections(bath) for k in si.k_pair]
    grid = -np.pi + 2 * np.pi * np.arange(4096) / 4096
    speed = np.abs(np.asarray(dispersion_derivative(bath, grid, 1)))
    is_min = (speed <= np.roll(speed, 1)) & (speed <= np.roll(speed, -1))
    for k in grid[is_min]:
        for _ in range(20):
            curvature = complex(dispersion_derivative(bath, k, 2))
            if curvature == 0:
                break
            k = float(np.real(k - complex(dispersion_derivative(bath, k, 1)) / curvature))
        if abs(complex(dispersion_derivative(bath, k, 1))) < VANISHING_DERIVATIVE * bath.scale:
            momenta.append(float(wrap_momentum(k)))
    return momenta


def _check_fine_tuned(k: float, fine_tuned: Iterable[float]) -> None:
    for point in fine_tuned:
        if abs(float(wrap_momentum(k - point))) < FINE_TUNED_RADIUS:
            raise FineTunedInputError(k, point)


def emitter_weight(bath: BathSpec, params: EmitterParams, L: int, energy: complex) -> float:
    """規格化した有限サイズ固有状態の |c_e|^2 = 1 / (1 + (J^2/L) Σ_k |E - h_k|^{-2})。"""
    bands = np.asarray(dispersion(bath, finite_momenta(L)))
    with np.errstate(divide="ignore"):
        weight = params.J**2 / L * np.sum(1 / np.abs(energy - bands) ** 2)
    return float(1 / (1 + weight)) if np.isfinite(weight) else 0.0


def _secular_tolerance(bath: BathSpec, params: EmitterParams, energy: ComplexArray) -> np.ndarray:
    return 1e-10 * (np.abs(energy) + abs(params.delta) + params.J**2 / bath.scale)


def _rounding_floor(
    energy: ComplexArray, sigma_slope: ComplexArray, magnitude: np.ndarray
) -> np.ndarray:
    """E の丸め誤差と和の丸め誤差が永年方程式の残差に持ち込む大きさ。"""
    eps = np.finfo(np.float64).eps
    return ROUNDING_FACTOR * eps * (np.abs(energy) * np.abs(sigma_slope) + magnitude)


def scattering_momenta(
    bath: BathSpec,
    params: EmitterParams,
    L: int,
    modes: Sequence[int] | None = None,
    *,
    fine_tuned: Sequence[float] | None = None,
    max_steps: int = MAX_NEWTON_STEPS,
    progress: bool = False,
) -> ScatteringBatch:
    """複数のモード m について有限サイズの永年方程式 E - Δ - Σ^(L)(E) = 0 を解く。

    各モードで格子の極 h_m を括り出した
    G(E) = (E - h_m)(E - Δ - Σ'(E)) - J^2/L（Σ' は m 以外の和）を
    E = h_{k̃} としてニュートン法で k̃ について解く。初期値は ratio_momentum。
    記録する残差は E - Δ - Σ^(L)(E) を留数公式で評価し直したもので、
    1e-10 (|E| + |Δ| + J^2/scale) に E の丸めが持ち込む幅を足した範囲に収まらなければ棄却する。
    失敗したモードは skipped に理由の例外とともに入る。
    """
    params.require_coupling()
    check_lattice(bath, L)
    modes = list(range(1, L + 1)) if modes is None else list(modes)
    if fine_tuned is None:
        fine_tuned = fine_tuned_momenta(bath)
    lattice_k = finite_momenta(L)
    bands = np.asarray(dispersion(bath, lattice_k))
    coupling = params.J**2 / L

    skipped: dict[int, SolverError] = {}
    active_modes: list[int] = []
    initial: list[complex] = []
    for m in tqdm(modes, desc="初期値", disable=not progress):
        if not 1 <= m <= L:
            raise ValueError(f"モード番号は 1..L です: m={m}, L={L}")
        k = float(wrap_momentum(lattice_k[m - 1]))
        try:
            _check_fine_tuned(k, fine_tuned)
        except FineTunedInputError as exc:
            skipped[m] = exc
            continue
        try:
            guess = ratio_momentum(bath, params, L, m)
        except (AtPoleError, SelfEnergyError):
            guess = complex(k)
        active_modes.append(m)
        initial.append(guess)
    if not active_modes:
        return ScatteringBatch(momenta=[], skipped=skipped)

    index = np.array(active_modes) - 1
    k_tilde = np.array(initial, dtype=np.complex128)
    pole = bands[index]
    own = np.zeros((len(index), L), dtype=bool)
    own[np.arange(len(index)), index] = True
    iterations = np.zeros(len(index), dtype=np.int64)
    converged = np.zeros(len(index), dtype=bool)
    traces: list[list[float]] = [[] for _ in index]
    secular = np.zeros(len(index), dtype=np.complex128)
    floor = np.zeros(len(index))
    max_step = np.pi / L

    for _ in range(max_steps):
        active = ~converged
        if not np.any(active):
            break
        energy = np.asarray(dispersion(bath, k_tilde[active]))
        velocity = np.asarray(dispersion_derivative(bath, k_tilde[active], 1))
        diff = energy[:, None] - bands[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            inverse = np.where(own[active], 0, 1 / diff)
        rest = coupling * np.sum(inverse, axis=1)
        rest_slope = -coupling * np.sum(inverse**2, axis=1)
        offset = energy - pole[active]
        value = offset * (energy - params.delta - rest) - coupling
        slope = (energy - params.delta - rest) + offset * (1 - rest_slope)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = value / (slope * velocity)
        step = np.where(np.isfinite(step), step, 0)
        too_long = np.abs(step) > max_step
        step[too_long] *= max_step / np.abs(step[too_long])
        k_tilde[active] -= step
        iterations[active] += 1
        with np.errstate(divide="ignore", invalid="ignore"):
            own_term = coupling / offset
            current = energy - params.delta - rest - own_term
            sigma_slope = rest_slope - own_term / offset
            magnitude = coupling * np.sum(np.abs(inverse), axis=1) + np.abs(own_term)
        secular[active] = current
        floor[active] = _rounding_floor(energy, sigma_slope, magnitude)
        for i, r in zip(np.flatnonzero(active), np.abs(current), strict=True):
            traces[i].append(float(r))
        small_step = np.abs(step) <= 1e-15 * (1 + np.abs(k_tilde[active]))
        small_value = np.abs(current) <= _secular_tolerance(bath, params, energy) + floor[active]
        converged[np.flatnonzero(active)[small_step | small_value]] = True

    momenta: list[ScatteringMomentum] = []
    for i, m in enumerate(active_modes):
        solved = complex(wrap_momentum(k_tilde[i]))
        energy = complex(dispersion(bath, solved))
        tolerance = float(_secular_tolerance(bath, params, np.array([energy]))[0]) + floor[i]
        try:
            sigma = sigma_finite_residue(bath, params.J, L, energy).value
            residual = energy - params.delta - sigma
        except OnFiniteSpectrumError:
            residual = complex(secular[i])
        if not converged[i] or not abs(residual) <= tolerance:
            skipped[m] = NoConvergenceError(f"m={m}, L={L}", traces[i])
            continue
        if abs(solved.imag) > 10 / L:
            skipped[m] = ConvergedToBoundStateError(m, solved, L)
            continue
        momenta.append(
            ScatteringMomentum(
                k_base=float(wrap_momentum(lattice_k[m - 1])),
                k_tilde=solved,
                E=energy,
                L=L,
                residual=residual,
                branch_used=Branch.LESS,
                m=m,
                iterations=int(iterations[i]),
                emitter_weight=emitter_weight(bath, params, L, energy),
            )
        )
    logger.info(
        "散乱状態を %d 個求めました（L=%d, スキップ %d）", len(momenta), L, len(skipped)
    )
    for m, exc in skipped.items():
        logger.debug("モード m=%d をスキップ: %s", m, exc)
    return ScatteringBatch(momenta=momenta, skipped=skipped)


def scattering_momentum(
    bath: BathSpec,
    params: EmitterParams,
    L: int,
    m: int,
    *,
    fine_tuned: Sequence[float] | None = None,
    max_steps: int = MAX_NEWTON_STEPS,
) -> ScatteringMomentum:
    """モード m の散乱状態の複素運動量 k̃ を有限サイズの永年方程式から求める。

    Raises:
        FineTunedInputError: 2πm/L が微調整点に近すぎる場合。
        NoConvergenceError: ニュートン法が収束しない場合。
        ConvergedToBoundStateError: |Im k̃| > 10/L の場合。
    """
    batch = scattering_momenta(bath, params, L, [m], fine_tuned=fine_tuned, max_steps=max_steps)
    if m in batch.skipped:
        raise batch.skipped[m]
    return batch.momenta[0]


def _approximate_residual(
    bath: BathSpec, params: EmitterParams, L: int, k_tilde: complex, branch: Branch
) -> complex:
    energy = complex(dispersion(bath, k_tilde))
    sigma = complex(sigma_thermo_at(bath, params.J, k_tilde, 0, branch))
    jump = params.J**2 / (1j * complex(dispersion_derivative(bath, k_tilde, 1)))
    phase = np.exp(1j * k_tilde * L)
    inverse_green = energy - params.delta - sigma
    if branch is Branch.LESS:
        # h - Δ - Σ^< + D / (e^{ik̃L} - 1) = 0 に (e^{ik̃L} - 1) を掛けた形
        return complex((phase - 1) * inverse_green + jump)
    # h - Δ - Σ^> + D e^{ik̃L} / (e^{ik̃L} - 1) = 0
    return complex((phase - 1) * inverse_green + jump * phase)


def approximate_momentum(
    bath: BathSpec,
    params: EmitterParams,
    L: int,
    m: int,
    branch: Branch = Branch.LESS,
    *,
    max_steps: int = MAX_NEWTON_STEPS,
) -> ScatteringMomentum:
    """主要次数の永年方程式を branch の形で解く。

    LESS 形は h - Δ - Σ^< - J^2 / (i h'(1 - e^{ik̃L})) = 0、GREATER 形は
    Σ^> を使った同値な式。どちらも同じ k̃ を与える。
    """
    params.require_coupling()
    k_tilde = ratio_momentum(bath, params, L, m)
    trace: list[float] = []
    for step_count in range(1, max_steps + 1):
        value = _approximate_residual(bath, params, L, k_tilde, branch)
        trace.append(abs(value))
        slope = (
            _approximate_residual(bath, params, L, k_tilde + FINITE_STEP, branch)
            - _approximate_residual(bath, params, L, k_tilde - FINITE_STEP, branch)
        ) / (2 * FINITE_STEP)
        step = value / slope
        if abs(step) > np.pi / L:
            step *= (np.pi / L) / abs(step)
        k_tilde -= step
        if abs(step) <= 1e-14 * (1 + abs(k_tilde)):
            energy = complex(dispersion(bath, k_tilde))
            return ScatteringMomentum(
                k_base=float(wrap_momentum(2 * np.pi * m / L)),
                k_tilde=complex(wrap_momentum(k_tilde)),
                E=energy,
                L=L,
                residual=_approximate_residual(bath, params, L, k_tilde, branch),
                branch_used=branch,
                m=m,
                iterations=step_count,
                emitter_weight=emitter_weight(bath, params, L, energy),
            )
    raise NoConvergenceError(f"近似式 m={m}, L={L}, {branch.value}", trace)


def _bound_residual(
    bath: BathSpec, params: EmitterParams, k: ComplexArray, branch: Branch, side: Side
) -> ComplexArray:
    energy = np.asarray(dispersion(bath, k))
    return energy - params.delta - sigma_thermo_at_batch(bath, params.J, k, branch, side=side)


def _bound_newton(
    bath: BathSpec,
    params: EmitterParams,
    seeds: ComplexArray,
    branch: Branch,
    side: Side,
    steps: int = 60,
) -> tuple[ComplexArray, ComplexArray]:
    """全初期値について一括でニュートン法を回し、(k̃, 残差) を返す。"""
    k = seeds.copy()
    for _ in range(steps):
        value = _bound_residual(bath, params, k, branch, side)
        slope = (
            _bound_residual(bath, params, k + FINITE_STEP, branch, side)
            - _bound_residual(bath, params, k - FINITE_STEP, branch, side)
        ) / (2 * FINITE_STEP)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = value / slope
        step = np.where(np.isfinite(step), step, 0)
        too_long = np.abs(step) > 0.5
        step[too_long] *= 0.5 / np.abs(step[too_long])
        k = k - step
        limit = 2 * BOUND_IM_RANGE
        k = np.real(wrap_momentum(k)) + 1j * np.clip(k.imag, -limit, limit)
    return k, _bound_residual(bath, params, k, branch, side)


def _polish_bound(
    bath: BathSpec, params: EmitterParams, k_tilde: complex, branch: Branch, side: Side
) -> complex:
    """接続した自己エネルギー（重根も扱う）で k̃ を数ステップ精密化する。"""

    def residual(k: complex) -> complex:
        energy = complex(dispersion(bath, k))
        sigma = complex(sigma_thermo_at(bath, params.J, k, 0, branch, side=side))
        return energy - params.delta - sigma

    for _ in range(8):
        value = residual(k_tilde)
        slope = (residual(k_tilde + FINITE_STEP) - residual(k_tilde - FINITE_STEP)) / (
            2 * FINITE_STEP
        )
        if slope == 0:
            break
        step = value / slope
        k_tilde -= step
        if abs(step) <= 1e-15 * (1 + abs(k_tilde)):
            break
    return complex(wrap_momentum(k_tilde))


def _representative(
    bath: BathSpec, candidates: list[tuple[complex, Branch, Side]], winding: int
) -> tuple[complex, Branch, Side]:
    """領域の巻き数に合う分枝（w = 0 なら GREATER、それ以外は LESS）の極を代表にする。

    同じ分枝の中では規約の側、|Im k̃| の小さい方、Re k̃ の大きい方の順に選ぶ。
    """
    preferred = Branch.GREATER if winding == 0 else Branch.LESS
    side = convention_side(bath)

    def key(candidate: tuple[complex, Branch, Side]) -> tuple:
        k_tilde, branch, member_side = candidate
        return (
            branch is not preferred,
            member_side is not side,
            round(abs(k_tilde.imag), 9),
            -round(k_tilde.real, 9),
        )

    return min(candidates, key=key)


def bound_states(
    bath: BathSpec,
    params: EmitterParams,
    *,
    grid: int = BOUND_GRID,
    im_range: float = BOUND_IM_RANGE,
) -> list[BoundState]:
    """分枝ごとのエミッタのグリーン関数の極として束縛状態をすべて求める。

    Re k̃ ∈ (-π, π]、Im k̃ ∈ [-im_range, im_range] の grid × grid 個の初期値から
    1/G_e^{branch}(h_{k̃}) = 0 をニュートン法で解く。根 e^{ik̃} の実際の内外が
    分枝と一致し、エネルギーがバンド外にあり、物理的な自己エネルギーで
    E_b - Δ - Σ(E_b) = 0 を満たす解だけを残す。同じ E_b は一つにまとめ、
    その領域の巻き数に合う分枝の極を代表とする。
    """
    re = -np.pi + 2 * np.pi * (np.arange(grid) + 1) / grid
    im = np.linspace(-im_range, im_range, grid)
    seeds = (re[:, None] + 1j * im[None, :]).ravel()
    sides = [Side.POSITIVE, Side.NEGATIVE] if bath.is_unidirectional else [Side.POSITIVE]
    scale = bath.scale + abs(params.delta) + params.J**2 / bath.scale
    tolerance = 1e-10 * scale

    found: list[tuple[complex, list[tuple[complex, Branch, Side]]]] = []
    for branch in (Branch.GREATER, Branch.LESS):
        for side in sides:
            try:
                solutions, values = _bound_newton(bath, params, seeds, branch, side)
            except InfiniteRootError:
                logger.warning("束縛状態探索で根が無限遠に逃げました（%s, %s）", branch.value, side)
                continue
            keep = np.isfinite(solutions) & (np.abs(values) < 1e-6 * scale)
            solutions = solutions[keep]
            solutions = solutions[np.abs(solutions.imag) <= 2 * im_range]
            inside = solutions.imag > 0
            solutions = solutions[inside == (branch is Branch.GREATER)]
            for k_tilde in np.unique(np.round(solutions, 8)):
                try:
                    k_tilde = _polish_bound(bath, params, complex(k_tilde), branch, side)
                    energy = complex(dispersion(bath, k_tilde))
                    physical = sigma_thermo(bath, params.J, energy).value
                except (SelfEnergyError, InfiniteRootError):
                    continue
                if abs(energy - params.delta - physical) > tolerance:
                    continue
                if (k_tilde.imag > 0) != (branch is Branch.GREATER):
                    continue
                for e_b, members in found:
                    if abs(e_b - energy) < BOUND_DEDUP * bath.scale:
                        members.append((k_tilde, branch, side))
                        break
                else:
                    found.append((energy, [(k_tilde, branch, side)]))

    states: list[BoundState] = []
    for energy, members in found:
        if symbol_roots(bath, energy).circle_distance() < BOUND_BAND_DISTANCE:
            continue
        try:
            winding = winding_number(bath, energy)
        except OnBandCurveError:
            continue
        k_tilde, branch, side = _representative(bath, members, winding)
        energy = complex(dispersion(bath, k_tilde))
        try:
            physical = sigma_thermo(bath, params.J, energy).value
        except AmbiguousBranchError:
            continue
        states.append(
            BoundState(
                E_b=energy,
                k_tilde=k_tilde,
                pole_branch=branch,
                region_winding=winding,
                kind=BoundKind.CONVENTIONAL if winding == 0 else BoundKind.HIDDEN,
                side=side,
                residual=energy - params.delta - physical,
                branches=tuple(sorted({b for _, b, _ in members}, key=lambda b: b.value)),
            )
        )
    states.sort(key=lambda s: (s.E_b.real, s.E_b.imag))
    logger.info("束縛状態を %d 個検出しました（%s）", len(states), bath.name)
    return states


def _degenerate_energy(
    bath: BathSpec,
    params: EmitterParams,
    L: int,
    start: complex,
    max_steps: int,
) -> tuple[complex, complex, int, list[float]]:
    """最寄りの2つの格子極を括り出してエネルギー E についてニュートン法で解く。"""
    bands = np.asarray(dispersion(bath, finite_momenta(L)))
    nearest = np.argsort(np.abs(bands - start))[:2]
    h_a, h_b = bands[nearest]
    rest_bands = np.delete(bands, nearest)
    coupling = params.J**2 / L
    energy = complex(start)
    trace: list[float] = []
    for step_count in range(1, max_steps + 1):
        inverse = 1 / (energy - rest_bands)
        rest = coupling * np.sum(inverse)
        rest_slope = -coupling * np.sum(inverse**2)
        product = (energy - h_a) * (energy - h_b)
        value = product * (energy - params.delta - rest) - coupling * (2 * energy - h_a - h_b)
        slope = (
            (2 * energy - h_a - h_b) * (energy - params.delta - rest)
            + product * (1 - rest_slope)
            - 2 * coupling
        )
        step = value / slope
        energy -= step
        trace.append(abs(value))
        if abs(step) <= 1e-15 * (1 + abs(energy)):
            secular = value / product
            return complex(energy), complex(secular), step_count, trace
    raise NoConvergenceError(f"縮退 E0={start}, L={L}", trace)


def _pair_momenta(bath: BathSpec, energy: complex) -> tuple[complex, complex]:
    """E = h(y) の根のうち単位円に最も近い2つを k̃ = -i log y に直す。"""
    roots = symbol_roots(bath, energy)
    values = np.repeat(roots.values, roots.multiplicities)
    nearest = values[np.argsort(np.abs(np.abs(values) - 1))[:2]]
    pair = sorted((complex(wrap_momentum(-1j * np.log(y))) for y in nearest), key=lambda k: k.real)
    return pair[0], pair[1]


def degenerate_momenta(
    bath: BathSpec,
    params: EmitterParams,
    L: int,
    target: SelfIntersection | SecondOrderPole,
    *,
    max_steps: int = MAX_NEWTON_STEPS,
) -> list[ScatteringMomentum]:
    """自己交差点または2次の極の近くで縮退した永年方程式を解く。

    自己交差点では E0 = h_{k_SI} から、2次の極ではモード m ごとに
    E0 = h(k_r + mπ/L) から出発し、最寄りの2つの格子極を括り出した
    永年方程式をニュートン法で解く。得られた E の単位円に近い2根を
    (k̃_α, k̃_γ) とし、それぞれを partner 付きの ScatteringMomentum で返す。

    Raises:
        NotDegenerateError: 自己交差・群速度ゼロの条件を満たさない場合。
    """
    params.require_coupling()
    check_lattice(bath, L)
    scale = bath.scale
    if isinstance(target, SelfIntersection):
        k1, k2 = target.k_pair
        gap = abs(complex(dispersion(bath, k1)) - complex(dispersion(bath, k2)))
        if gap > DEGENERACY_TOLERANCE * scale:
            raise NotDegenerateError(f"h_k1 と h_k2 が一致しません: |Δh|={gap:.3e}")
        starts = [(complex(target.energy), None, k1)]
    else:
        velocity = abs(complex(dispersion_derivative(bath, target.k_r, 1)))
        if velocity >= VANISHING_DERIVATIVE * scale:
            raise NotDegenerateError(f"h'_k が消えていません: |h'|={velocity:.3e}")
        starts = [
            (complex(dispersion(bath, target.k_r + m * np.pi / L)), m, target.k_r)
            for m in target.modes
        ]

    momenta: list[ScatteringMomentum] = []
    for start, mode, k_base in starts:
        energy, secular, step_count, _ = _degenerate_energy(bath, params, L, start, max_steps)
        alpha, gamma = _pair_momenta(bath, energy)
        weight = emitter_weight(bath, params, L, energy)
        for k_tilde, partner in ((alpha, gamma), (gamma, alpha)):
            momenta.append(
                ScatteringMomentum(
                    k_base=float(k_base),
                    k_tilde=k_tilde,
                    E=energy,
                    L=L,
                    residual=secular,
                    branch_used=Branch.LESS,
                    m=mode,
                    iterations=step_count,
                    emitter_weight=weight,
                    partner=partner,
                )
            )
        logger.info("縮退した解 E=%s, k̃=(%s, %s)", energy, alpha, gamma)
    return momenta
