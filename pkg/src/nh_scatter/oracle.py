"""厳密対角化による検証用オラクル。

単一励起セクター（エミッタ励起 ⊕ 格子点の光子）の (L+1) 次元ハミルトニアンを
周期境界 (PBC) または開放境界 (OBC) で組み立て、リポジトリ内の固有値ソルバーで
全固有対を求め、解析的な予測と分類・照合する。
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, replace
from enum import Enum
from typing import NamedTuple

import numpy as np
import numpy.typing as npt

from nh_scatter.bath import BathSpec, dispersion
from nh_scatter.eigensolver import OracleError, eig, residuals
from nh_scatter.math import ComplexArray, FloatArray, align
from nh_scatter.selfenergy import check_lattice, reduce_site, site_window
from nh_scatter.solver import EmitterParams
from nh_scatter.wavefn import WaveFunction, localization_length

logger = logging.getLogger(__name__)

DEFAULT_MAX_DIM: int = 2048
BAND_SAMPLES: int = 2048
BOUND_SPACING_FACTOR: float = 10.0
BOUND_LENGTH_FRACTION: float = 0.1
NOISE_FLOOR: float = 1e-12
FAMILY_TOLERANCE: float = 1e-6
SKIN_FRACTION: float = 0.25
BOUND_RADIUS: float = 10.0


class DimensionMismatchError(OracleError):
    """比較するベクトルの次元が一致しない。"""

    def __init__(self, expected: int, actual: int) -> None:
        self.expected = expected
        self.actual = actual
        super().__init__(f"次元が一致しません: {actual} != {expected}")


class DimensionLimitError(OracleError):
    """行列の次元が設定された上限を超えている。"""

    def __init__(self, dimension: int, max_dim: int) -> None:
        self.dimension = dimension
        self.max_dim = max_dim
        super().__init__(f"次元 {dimension} は上限 {max_dim} を超えています")


class Boundary(Enum):
    PBC = "pbc"
    OBC = "obc"


class StateClass(Enum):
    SCATTERING = "scattering"
    BOUND = "bound"
    DEGENERATE_FAMILY = "degenerate_family"


@dataclass(frozen=True)
class LatticeHamiltonian:
    """単一励起セクターの密なハミルトニアン。

    添字 0 がエミッタ、添字 1 + (x + ⌊L/2⌋) が格子点 x。
    """

    matrix: ComplexArray
    boundary: Boundary
    bath: BathSpec
    params: EmitterParams
    L: int

    def __post_init__(self) -> None:
        matrix = np.array(self.matrix, dtype=np.complex128)
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @property
    def dimension(self) -> int:
        return self.L + 1

    @property
    def bath_block(self) -> ComplexArray:
        return self.matrix[1:, 1:]

    def site_index(self, x: int) -> int:
        return 1 + int(x) + self.L // 2

    def eigen_residual(self, wf: WaveFunction, energy: complex | None = None) -> float:
        """||(H - E) v|| / ||v||（v は [c_e, ψ(x)...]、E の既定は wf.E）。

        Raises:
            DimensionMismatchError: wf の次元が L+1 でない場合。
        """
        vector = wf.as_vector()
        if vector.size != self.dimension:
            raise DimensionMismatchError(self.dimension, vector.size)
        target = wf.E if energy is None else energy
        if target is None:
            raise ValueError("エネルギーが指定されていません")
        diff = self.matrix @ vector - target * vector
        return float(np.linalg.norm(diff) / np.linalg.norm(vector))


@dataclass(frozen=True)
class EDResult:
    """全固有対と、classify_states で埋まる分類情報。"""

    hamiltonian: LatticeHamiltonian
    eigenvalues: ComplexArray
    eigenvectors: ComplexArray
    residuals: FloatArray
    classes: tuple[StateClass, ...] = ()
    loc_lengths: FloatArray | None = None
    band_distances: FloatArray | None = None

    def __post_init__(self) -> None:
        for name in ("eigenvalues", "eigenvectors", "residuals"):
            array = np.array(getattr(self, name))
            array.setflags(write=False)
            object.__setattr__(self, name, array)

    @property
    def count(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def classified(self) -> bool:
        return len(self.classes) == self.count

    def indices(self, state_class: StateClass) -> list[int]:
        return [i for i, c in enumerate(self.classes) if c is state_class]

    def nearest(self, energy: complex) -> int:
        """energy に最も近い固有値の添字。"""
        return int(np.argmin(np.abs(self.eigenvalues - energy)))

    def wavefunction(self, index: int) -> WaveFunction:
        """固有ベクトルを WaveFunction として取り出す（ノルム 1）。"""
        v = self.eigenvectors[:, index]
        return WaveFunction(
            amplitudes=v[1:],
            c_e=v[0],
            L=self.hamiltonian.L,
            normalized=True,
            kind="ed",
            E=complex(self.eigenvalues[index]),
        )


class SpectrumAccount(NamedTuple):
    """固有値と予測エネルギーの一対一対応。"""

    pairs: dict[int, int]  # 固有値の添字 -> 予測の添字
    distances: dict[int, float]
    unmatched_states: list[int]
    unmatched_predictions: list[int]

    @property
    def complete(self) -> bool:
        return not self.unmatched_states and not self.unmatched_predictions


class SkinReport(NamedTuple):
    mean_positions: FloatArray
    displaced_fraction: float  # SCATTERING のうち |⟨x⟩| > L/4 の割合
    bound_offsets: FloatArray  # BOUND 状態の |⟨x⟩|

    @property
    def bound_near_emitter(self) -> bool:
        return bool(np.all(self.bound_offsets <= BOUND_RADIUS))


def build_hamiltonian(
    bath: BathSpec, params: EmitterParams, L: int, boundary: Boundary = Boundary.PBC
) -> LatticeHamiltonian:
    """H_{00} = Δ、エミッタと x=0 の間に J、浴ブロック H_{x,x'} = h_{x-x'}。

    PBC ではオフセットを mod L で折り返し、OBC では折り返さない。
    """
    check_lattice(bath, L)
    half = L // 2
    matrix = np.zeros((L + 1, L + 1), dtype=np.complex128)
    matrix[0, 0] = params.delta
    origin = 1 + half
    matrix[0, origin] = params.J
    matrix[origin, 0] = params.J
    x = site_window(L)
    for offset, value in bath.hoppings.items():
        partner = x - offset
        if boundary is Boundary.PBC:
            rows, cols = x, reduce_site(partner, L)
        else:
            inside = (partner >= -half) & (partner <= (L - 1) // 2)
            rows, cols = x[inside], partner[inside]
        matrix[1 + rows + half, 1 + cols + half] += value
    logger.debug("ハミルトニアンを構築しました: L=%d, %s", L, boundary.value)
    return LatticeHamiltonian(matrix, boundary, bath, params, L)


def eigenpairs(
    hamiltonian: LatticeHamiltonian, *, max_dim: int = DEFAULT_MAX_DIM, progress: bool = False
) -> EDResult:
    """全固有値と右固有ベクトル。

    Raises:
        DimensionLimitError: 次元が max_dim を超える場合。
        QRStallError: QR 反復がデフレーションしない場合。
    """
    if hamiltonian.dimension > max_dim:
        raise DimensionLimitError(hamiltonian.dimension, max_dim)
    system = eig(hamiltonian.matrix, progress=progress)
    errors = residuals(hamiltonian.matrix, system)
    logger.info(
        "厳密対角化: 次元 %d, 最大残差 %.3e", hamiltonian.dimension, float(np.max(errors, initial=0))
    )
    return EDResult(hamiltonian, system.eigenvalues, system.eigenvectors, errors)


def band_curve(bath: BathSpec, samples: int = BAND_SAMPLES) -> ComplexArray:
    """バンド曲線 h_k の等間隔サンプル（k = 2πj/samples）。"""
    k = 2 * np.pi * np.arange(samples) / samples
    return np.asarray(dispersion(bath, k))


def band_distance(
    bath: BathSpec, energies: npt.ArrayLike, samples: int = BAND_SAMPLES
) -> FloatArray:
    """各エネルギーからサンプルしたバンド曲線までの距離。"""
    curve = band_curve(bath, samples)
    points = np.atleast_1d(np.asarray(energies, dtype=np.complex128))
    return np.min(np.abs(points[:, None] - curve[None, :]), axis=1)


def _median_spacing(values: ComplexArray) -> float:
    gaps = np.abs(values[:, None] - values[None, :])
    np.fill_diagonal(gaps, np.inf)
    return float(np.median(np.min(gaps, axis=1)))


def classify_states(
    ed: EDResult,
    bath: BathSpec | None = None,
    *,
    family_energies: Sequence[complex] = (),
    tolerance: float = FAMILY_TOLERANCE,
) -> EDResult:
    """各固有状態を BOUND / SCATTERING / DEGENERATE_FAMILY に分類する。

    BOUND はバンド曲線からの距離が固有値の最近接間隔の中央値の 10 倍を超え、
    かつフィットした局在長が L/10 未満の状態。family_energies（縮退族の予測
    エネルギー）から tolerance * scale 以内の状態は DEGENERATE_FAMILY。
    """
    bath = bath or ed.hamiltonian.bath
    L = ed.hamiltonian.L
    distances = band_distance(bath, ed.eigenvalues)
    threshold = BOUND_SPACING_FACTOR * _median_spacing(ed.eigenvalues)
    positions = site_window(L)
    lengths = np.array(
        [
            localization_length(ed.eigenvectors[1:, i], positions, floor=NOISE_FLOOR)
            for i in range(ed.count)
        ]
    )
    family = np.zeros(ed.count, dtype=bool)
    for energy in family_energies:
        family |= np.abs(ed.eigenvalues - energy) < tolerance * bath.scale
    classes = []
    for i in range(ed.count):
        if family[i]:
            classes.append(StateClass.DEGENERATE_FAMILY)
        elif distances[i] > threshold and lengths[i] < BOUND_LENGTH_FRACTION * L:
            classes.append(StateClass.BOUND)
        else:
            classes.append(StateClass.SCATTERING)
    result = replace(
        ed, classes=tuple(classes), loc_lengths=lengths, band_distances=distances
    )
    logger.info(
        "分類: BOUND %d, SCATTERING %d, DEGENERATE_FAMILY %d",
        len(result.indices(StateClass.BOUND)),
        len(result.indices(StateClass.SCATTERING)),
        len(result.indices(StateClass.DEGENERATE_FAMILY)),
    )
    return result


def match_state(ed: EDResult, index: int, wf: WaveFunction) -> tuple[complex, float]:
    """ED の固有ベクトルと wf を射影的に揃え、(α, 相対 L2 誤差) を返す。

    α は ||α v_ED - v(wf)|| を最小にする複素数。

    Raises:
        DimensionMismatchError: wf の次元が L+1 でない場合。
    """
    reference = ed.eigenvectors[:, index]
    target = wf.as_vector()
    if target.size != reference.size:
        raise DimensionMismatchError(reference.size, target.size)
    return align(reference, target)


def account_spectrum(
    ed: EDResult, predictions: Sequence[complex], *, tolerance: float = 1e-6
) -> SpectrumAccount:
    """予測エネルギーと固有値を距離の近い順に貪欲に一対一で対応させる。"""
    predicted = np.asarray(predictions, dtype=np.complex128)
    if predicted.size == 0:
        return SpectrumAccount({}, {}, list(range(ed.count)), [])
    gaps = np.abs(ed.eigenvalues[:, None] - predicted[None, :])
    pairs: dict[int, int] = {}
    distances: dict[int, float] = {}
    used: set[int] = set()
    for flat in np.argsort(gaps, axis=None, kind="stable"):
        state, guess = np.unravel_index(flat, gaps.shape)
        if gaps[state, guess] >= tolerance:
            break
        if int(state) in pairs or int(guess) in used:
            continue
        pairs[int(state)] = int(guess)
        distances[int(state)] = float(gaps[state, guess])
        used.add(int(guess))
    unmatched_states = [i for i in range(ed.count) if i not in pairs]
    unmatched_predictions = [j for j in range(predicted.size) if j not in used]
    if unmatched_states or unmatched_predictions:
        logger.warning(
            "対応しない固有値 %d 個、予測 %d 個", len(unmatched_states), len(unmatched_predictions)
        )
    return SpectrumAccount(pairs, distances, unmatched_states, unmatched_predictions)


def skin_report(ed: EDResult) -> SkinReport:
    """各状態の光子密度の重心と、表皮効果・束縛状態の位置の要約。

    classify_states 済みの EDResult が必要。
    """
    if not ed.classified:
        raise ValueError("skin_report には classify_states 済みの結果が必要です")
    L = ed.hamiltonian.L
    density = np.abs(ed.eigenvectors[1:, :]) ** 2
    totals = np.sum(density, axis=0)
    positions = site_window(L).astype(np.float64)
    means = np.divide(
        positions @ density, totals, out=np.zeros(ed.count), where=totals > 0
    )
    scattering = ed.indices(StateClass.SCATTERING)
    displaced = (
        float(np.mean(np.abs(means[scattering]) > SKIN_FRACTION * L)) if scattering else 0.0
    )
    bound = ed.indices(StateClass.BOUND)
    return SkinReport(means, displaced, np.abs(means[bound]))
