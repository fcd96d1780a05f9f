"""光子の波動関数: 有限サイズの形式解、LS 波動関数、閉じた形、縮退した状態。"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, replace

import numpy as np
import numpy.typing as npt

from nh_scatter.bath import BathSpec, dispersion, dispersion_derivative
from nh_scatter.math import ComplexArray, FloatArray, linear_fit, wrap_momentum
from nh_scatter.selfenergy import (
    Branch,
    Region,
    check_lattice,
    finite_momenta,
    hn_sigma,
    nnn_region,
    nnn_sigma,
    reduce_site,
    self_intersection_momentum,
    sigma_finite_profile,
    sigma_thermo_at,
    site_window,
)
from nh_scatter.solver import (
    FINE_TUNED_RADIUS,
    EmitterParams,
    FineTunedInputError,
    NotDegenerateError,
    ScatteringMomentum,
    emitter_green_at,
    fine_tuned_momenta,
)

logger = logging.getLogger(__name__)

SECULAR_TOLERANCE: float = 1e-8
DEGENERATE_ENERGY: float = 1e-12


class WaveFunctionError(Exception):
    """波動関数構成の基底例外。"""


class HermitianLimitError(WaveFunctionError):
    """κ = 0 の Hatano-Nelson 閉形式（エルミート極限）は扱わない。"""

    def __init__(self) -> None:
        super().__init__(
            "κ = 0 は非エルミート閉形式の極限ではありません（エルミート極限は未対応）"
        )


class ClosedFormDomainError(WaveFunctionError):
    """閉じた形の前提（減衰する根の位置）が成り立たない。"""


class RegionMismatchError(WaveFunctionError):
    """指定した NNN 領域が Re k̃ と矛盾する。"""

    def __init__(self, region: Region, actual: Region, k_tilde: complex) -> None:
        self.region = region
        self.actual = actual
        self.k_tilde = k_tilde
        super().__init__(f"領域 {region.value} は k̃={k_tilde} の領域 {actual.value} と矛盾します")


class ZeroStateError(WaveFunctionError):
    """全振幅がゼロで規格化できない。"""


class NotEigenvalueError(WaveFunctionError):
    """E が有限サイズの永年方程式を満たさない。"""

    def __init__(self, energy: complex, residual: complex) -> None:
        self.energy = energy
        self.residual = residual
        super().__init__(f"E={energy} は永年方程式の解ではありません: 残差 {abs(residual):.3e}")


@dataclass(frozen=True)
class WaveFunction:
    """単一励起セクターの状態 c_e |e⟩ + Σ_x ψ(x) |x⟩。

    amplitudes は site_window(L) の順（x = -⌊L/2⌋, ..., ⌊(L-1)/2⌋）に並んだ
    格子点の振幅で、[c_e, amplitudes] がそのまま厳密対角化の固有ベクトルと
    比較できる。
    """

    amplitudes: ComplexArray
    c_e: complex
    L: int
    normalized: bool = False
    kind: str = "formal"
    E: complex | None = None
    k_tilde: complex | None = None
    branch: Branch | None = None

    def __post_init__(self) -> None:
        amplitudes = np.array(self.amplitudes, dtype=np.complex128)
        if amplitudes.shape != (self.L,):
            raise ValueError(f"振幅の長さが L と一致しません: {amplitudes.shape} != ({self.L},)")
        amplitudes.setflags(write=False)
        object.__setattr__(self, "amplitudes", amplitudes)
        object.__setattr__(self, "c_e", complex(self.c_e))

    @property
    def positions(self) -> npt.NDArray[np.int64]:
        return site_window(self.L)

    def at(self, x: int) -> complex:
        """ψ(x)。x は mod L で窓に折り返す。"""
        return complex(self.amplitudes[int(reduce_site(x, self.L)) + self.L // 2])

    def as_vector(self) -> ComplexArray:
        """(L+1) 次元ベクトル [c_e, ψ(x)...]。"""
        return np.concatenate([[self.c_e], self.amplitudes])

    @property
    def weight(self) -> float:
        """|c_e|^2 + Σ_x |ψ(x)|^2。"""
        return float(abs(self.c_e) ** 2 + np.sum(np.abs(self.amplitudes) ** 2))

    def fourier_coefficients(self) -> ComplexArray:
        """c_k = L^{-1/2} Σ_x ψ(x) e^{-ikx}（k = 2πm/L, m = 1, ..., L）。"""
        phases = np.exp(-1j * np.outer(finite_momenta(self.L), self.positions))
        return phases @ self.amplitudes / np.sqrt(self.L)

    def scaled(self, factor: complex) -> WaveFunction:
        return replace(
            self, amplitudes=self.amplitudes * factor, c_e=self.c_e * factor, normalized=False
        )


def normalize(wf: WaveFunction) -> WaveFunction:
    """正の実数倍で |c_e|^2 + Σ_x |ψ(x)|^2 = 1 に規格化する。

    Raises:
        ZeroStateError: 全振幅がゼロの場合。
    """
    weight = wf.weight
    if weight == 0 or not np.isfinite(weight):
        raise ZeroStateError(f"規格化できません: 重み {weight}")
    return replace(wf.scaled(1 / np.sqrt(weight)), normalized=True)


def mean_position(wf: WaveFunction) -> float:
    """光子密度の重心 Σ x |ψ(x)|^2 / Σ |ψ(x)|^2。"""
    density = np.abs(wf.amplitudes) ** 2
    total = float(np.sum(density))
    if total == 0:
        raise ZeroStateError("光子の振幅がすべてゼロです")
    return float(np.sum(wf.positions * density) / total)


def localization_length(
    profile: npt.ArrayLike, positions: npt.ArrayLike, *, center: int = 0, floor: float = 0.0
) -> float:
    """|ψ(x)| ∝ e^{-|x - center| / ξ} をフィットして局在長 ξ を返す。

    floor > 0 なら max|ψ| * floor 以下の点（丸め誤差の底）はフィットから除く。
    減衰しない（傾きが非負の）プロファイルでは inf。
    """
    magnitude = np.abs(np.asarray(profile, dtype=np.complex128))
    distance = np.abs(np.asarray(positions) - center).astype(np.float64)
    usable = magnitude > floor * float(np.max(magnitude, initial=0.0))
    if np.count_nonzero(usable) < 2:
        return float("inf")
    fit = linear_fit(distance[usable], np.log(magnitude[usable]))
    if fit.slope >= 0:
        return float("inf")
    return -1.0 / fit.slope


def formal_wavefunction(
    bath: BathSpec,
    params: EmitterParams,
    L: int,
    E: complex,
    c_e: complex = 1.0,
    *,
    tolerance: float | None = SECULAR_TOLERANCE,
) -> WaveFunction:
    """有限サイズの形式解 ψ(x) = c_e Σ_x^(L)(E) / J を留数公式で全格子点について求める。

    tolerance が None でなければ |E - Δ - Σ^(L)(E)| <= tolerance * scale を確かめる。

    Raises:
        NotEigenvalueError: E が永年方程式を満たさない場合。
    """
    params.require_coupling()
    check_lattice(bath, L)
    sigma = sigma_finite_profile(bath, params.J, L, E)
    if tolerance is not None:
        residual = E - params.delta - sigma[L // 2]
        if abs(residual) > tolerance * bath.scale:
            raise NotEigenvalueError(E, residual)
    return WaveFunction(amplitudes=c_e * sigma / params.J, c_e=c_e, L=L, kind="formal", E=E)


def _check_fine_tuned(k_tilde: complex, fine_tuned: Sequence[float]) -> None:
    for point in fine_tuned:
        if abs(float(wrap_momentum(k_tilde.real - point))) < FINE_TUNED_RADIUS:
            raise FineTunedInputError(float(k_tilde.real), point)


def ls_wavefunction(
    bath: BathSpec,
    params: EmitterParams,
    k_tilde: complex,
    branch: Branch,
    L: int,
    *,
    fine_tuned: Sequence[float] | None = None,
) -> WaveFunction:
    """熱力学極限の LS 波動関数 ψ(x) = e^{ik̃x} + G_e(h_{k̃}) Σ_x(h_{k̃}) を窓上に並べる。

    c_e = J G_e。GREATER と LESS の構成は比 G_e^> / G_e^< の定数倍だけ異なる。

    Raises:
        FineTunedInputError: Re k̃ が微調整点の除外半径内にある場合。
    """
    k_tilde = complex(k_tilde)
    if fine_tuned is None:
        fine_tuned = fine_tuned_momenta(bath)
    _check_fine_tuned(k_tilde, fine_tuned)
    x = site_window(L)
    sigma = np.asarray(sigma_thermo_at(bath, params.J, k_tilde, x, branch))
    green = emitter_green_at(bath, params, k_tilde, branch)
    return WaveFunction(
        amplitudes=np.exp(1j * k_tilde * x) + green * sigma,
        c_e=params.J * green,
        L=L,
        kind="ls",
        E=complex(dispersion(bath, k_tilde)),
        k_tilde=k_tilde,
        branch=branch,
    )


def hn_closed_form(
    u: float, kappa: float, params: EmitterParams, k_tilde: complex, branch: Branch, L: int
) -> WaveFunction:
    """Hatano-Nelson 浴の LS 波動関数の閉じた形。

    GREATER: x ≥ 0 で e^{ik̃x}(1 + G^> J^2/δ)、x < 0 で
    e^{ik̃x} + G^> (J^2/δ) ρ^{-x} e^{-ik̃x}。LESS: x ≥ 0 で e^{ik̃x}、x < 0 で
    e^{ik̃x} + G^< (J^2/δ)(ρ^{-x} e^{-ik̃x} - e^{ik̃x})。

    Raises:
        HermitianLimitError: κ = 0 の場合。
        ClosedFormDomainError: u κ < 0 で減衰する根が単位円の内側にある場合。
    """
    if kappa == 0:
        raise HermitianLimitError()
    if u * kappa < 0:
        raise ClosedFormDomainError(f"u κ > 0 が必要です: u={u}, κ={kappa}")
    k_tilde = complex(k_tilde)
    x = site_window(L)
    sigma = hn_sigma(u, kappa, params.J, k_tilde, x, branch)
    a, b = u - kappa / 2, u + kappa / 2
    energy = complex(-a * np.exp(1j * k_tilde) - b * np.exp(-1j * k_tilde))
    green = 1 / (energy - params.delta - complex(hn_sigma(u, kappa, params.J, k_tilde, 0, branch)))
    return WaveFunction(
        amplitudes=np.exp(1j * k_tilde * x) + green * sigma,
        c_e=params.J * green,
        L=L,
        kind="hn",
        E=energy,
        k_tilde=k_tilde,
        branch=branch,
    )


def nnn_closed_form(
    kappa: float,
    kappa_p: float,
    params: EmitterParams,
    k_tilde: complex,
    region: Region,
    branch: Branch,
    L: int,
) -> WaveFunction:
    """一方向 NNN 浴の LS 波動関数の閉じた形（領域・分枝ごと）。

    エミッタ振幅は物理的な側（x ≥ 0）のグリーン関数で決まり、両半直線で共有する。

    Raises:
        RegionMismatchError: region が Re k̃ の領域と矛盾する場合。
        FineTunedInputError: Re k̃ が ±k_SI の除外半径内にある場合。
    """
    k_tilde = complex(k_tilde)
    k_si = self_intersection_momentum(kappa, kappa_p)
    if k_si is not None:
        _check_fine_tuned(k_tilde, [k_si, -k_si])
    actual = nnn_region(kappa, kappa_p, k_tilde)
    if actual is not region:
        raise RegionMismatchError(region, actual, k_tilde)
    x = site_window(L)
    sigma = nnn_sigma(kappa, kappa_p, params.J, k_tilde, x, region, branch)
    energy = complex(-kappa * np.exp(-1j * k_tilde) - kappa_p * np.exp(-2j * k_tilde))
    sigma_0 = complex(nnn_sigma(kappa, kappa_p, params.J, k_tilde, 0, region, branch))
    green = 1 / (energy - params.delta - sigma_0)
    return WaveFunction(
        amplitudes=np.exp(1j * k_tilde * x) + green * sigma,
        c_e=params.J * green,
        L=L,
        kind=f"nnn-{region.value}",
        E=energy,
        k_tilde=k_tilde,
        branch=branch,
    )


def degenerate_wavefunction(
    bath: BathSpec,
    params: EmitterParams,
    L: int,
    pair: tuple[ScatteringMomentum, ScatteringMomentum] | tuple[complex, complex],
    *,
    include_rest: bool = False,
) -> WaveFunction:
    """2つの単位円近傍の根 (k̃_α, k̃_γ) を持つ縮退した状態の波動関数（c_e = 1）。

    x ≥ 0 で Σ_s J e^{ik̃_s x} / (i h'_s (1 - e^{ik̃_s L}))、x < 0 で
    Σ_s J e^{ik̃_s x} / (i h'_s (e^{-ik̃_s L} - 1))。include_rest なら
    残りの根の寄与も含めた有限サイズの形式解を返す。
    """
    params.require_coupling()
    check_lattice(bath, L)
    momenta = [p.k_tilde if isinstance(p, ScatteringMomentum) else complex(p) for p in pair]
    if len(momenta) != 2:
        raise NotDegenerateError(f"k̃ の組が必要です: {len(momenta)} 個")
    energy = (
        pair[0].E
        if isinstance(pair[0], ScatteringMomentum)
        else complex(dispersion(bath, momenta[0]))
    )
    if include_rest:
        wf = formal_wavefunction(bath, params, L, energy, 1.0, tolerance=None)
        return replace(wf, kind="degenerate", k_tilde=momenta[0])

    x = site_window(L)
    amplitudes = np.zeros(L, dtype=np.complex128)
    for k_tilde in momenta:
        velocity = complex(dispersion_derivative(bath, k_tilde, 1))
        phase = np.exp(1j * k_tilde * L)
        forward = params.J / (1j * velocity * (1 - phase))
        backward = params.J / (1j * velocity * (1 / phase - 1))
        amplitudes += np.where(x >= 0, forward, backward) * np.exp(1j * k_tilde * x)
    return WaveFunction(
        amplitudes=amplitudes, c_e=1.0, L=L, kind="degenerate", E=energy, k_tilde=momenta[0]
    )


def plane_wave_superposition(bath: BathSpec, L: int, E: complex) -> list[WaveFunction]:
    """厳密に縮退した有限サイズ固有値 E に属する c_e = 0 の平面波の重ね合わせ。

    h_k = E となる l + 1 個の運動量について、和がゼロになる係数の超平面の
    正規直交基底（Helmert 基底）から l 個の状態を作る。

    Raises:
        NotDegenerateError: E を共有する運動量が2つ未満の場合。
    """
    check_lattice(bath, L)
    k = finite_momenta(L)
    bands = np.asarray(dispersion(bath, k))
    shared = k[np.abs(bands - E) <= DEGENERATE_ENERGY * (1 + abs(E))]
    if shared.size < 2:
        raise NotDegenerateError(f"E={E} を共有する運動量が {shared.size} 個しかありません")
    x = site_window(L)
    waves = np.exp(1j * np.outer(x, shared)) / np.sqrt(L)
    states: list[WaveFunction] = []
    for j in range(1, shared.size):
        coefficients = np.zeros(shared.size)
        coefficients[:j] = 1.0
        coefficients[j] = -j
        coefficients /= np.sqrt(j * (j + 1))
        states.append(
            WaveFunction(amplitudes=waves @ coefficients, c_e=0.0, L=L, kind="plane-wave", E=E)
        )
    logger.debug("E=%s の縮退度 %d から %d 個の状態を作りました", E, shared.size, len(states))
    return states


def amplitude_contrast(wf: WaveFunction) -> float:
    """max|ψ| / min|ψ|（一様な平面波なら 1）。"""
    magnitude: FloatArray = np.abs(wf.amplitudes)
    smallest = float(np.min(magnitude))
    return float("inf") if smallest == 0 else float(np.max(magnitude)) / smallest
