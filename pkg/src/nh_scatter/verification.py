"""不変量の検証スイート（`nhscatter verify`）。

自己エネルギーの恒等式、境界状態とその個数、波動関数の分枝の同値性、
厳密対角化との一致（エネルギー・固有ベクトル・微調整点の状態）、Im k̃ の
スケーリング、OBC の表皮効果をモデルごとに確かめ、合否を CheckResult の列として返す。
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from itertools import pairwise
from typing import NamedTuple

import numpy as np

from nh_scatter.bath import BathError, BathSpec, dispersion, self_intersections
from nh_scatter.eigensolver import OracleError
from nh_scatter.export import VerifySummary
from nh_scatter.math import align, loglog_fit, profile_correlation
from nh_scatter.oracle import (
    Boundary,
    EDResult,
    StateClass,
    band_distance,
    build_hamiltonian,
    classify_states,
    eigenpairs,
    match_state,
    skin_report,
)
from nh_scatter.selfenergy import (
    Branch,
    SelfEnergyError,
    VanishingGroupVelocityError,
    branch_jump,
    finite_momenta,
    finite_size_deviation,
    on_band_series,
    sigma_finite_residue,
    sigma_finite_sum,
    site_window,
    sum_rule_residual,
)
from nh_scatter.solver import (
    BoundKind,
    BoundState,
    EmitterParams,
    FineTunedInputError,
    SecondOrderPole,
    SolverError,
    bound_states,
    degenerate_momenta,
    fine_tuned_momenta,
    imk_leading,
    scattering_momenta,
    scattering_momentum,
)
from nh_scatter.wavefn import (
    HermitianLimitError,
    WaveFunctionError,
    degenerate_wavefunction,
    hn_closed_form,
    ls_wavefunction,
)

logger = logging.getLogger(__name__)

PACKAGE_ERRORS = (BathError, SelfEnergyError, SolverError, WaveFunctionError, OracleError)

IDENTITY_TOLERANCE: float = 1e-10
CANCELLATION_FACTOR: float = 1e3
BRANCH_TOLERANCE: float = 1e-9
ED_RESIDUAL: float = 1e-8
ED_MATCH: float = 1e-6
ON_BAND_CV: float = 0.1
ON_BAND_SIZES: tuple[int, ...] = tuple(range(100, 2001, 100))
CONVERGENCE_SIZES: tuple[int, ...] = (32, 64, 128, 256, 512)
WAVEFUNCTION_MATCH: float = 1e-4
FINE_TUNED_MATCH: float = 1e-3
FAMILY_CORRELATION: float = 0.99
SCALING_SIZES: tuple[int, ...] = (101, 201, 401, 801, 1601)
SCALING_SLOPE: tuple[float, float] = (-2.3, -1.7)
SKIN_DISPLACED: float = 0.8
SKIN_SIZE: int = 201
BOUND_OFFSET: float = 10.0
REFERENCE_EMITTER: tuple[float, float] = (20.0, 2.14)
REFERENCE_BOUND_COUNTS: dict[str, int] = {"hn": 3, "nnn": 4}


class CheckResult(NamedTuple):
    name: str
    model: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""


@dataclass
class VerificationReport:
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def summary(self) -> VerifySummary:
        return {
            "command": "verify",
            "passed": self.passed,
            "checks": [c._asdict() for c in self.checks],
        }


@dataclass(frozen=True)
class Model:
    name: str
    bath: BathSpec
    params: EmitterParams
    expected_bounds: int | None = None  # 既知の束縛状態の個数


def reference_models(J: float = 20.0, delta: float = 2.14) -> list[Model]:
    """HN (u=6, κ=2) と NNN (κ=5, κ'=12) の2つの基準モデル。

    エミッタが基準値 (J=20, Δ=2.14) のときは束縛状態の個数 3, 4 も確かめる。
    """
    params = EmitterParams(J=J, delta=delta)
    counts = REFERENCE_BOUND_COUNTS if (J, delta) == REFERENCE_EMITTER else {}
    return [
        Model("hn", BathSpec.hatano_nelson(6.0, 2.0), params, counts.get("hn")),
        Model("nnn", BathSpec.next_nearest(5.0, 12.0), params, counts.get("nnn")),
    ]


def second_order_pole_model() -> Model:
    """k = π で群速度が2位の零点を持つ NNN (κ=10, κ'=5)。"""
    return Model("nnn-pole", BathSpec.next_nearest(10.0, 5.0), EmitterParams(*REFERENCE_EMITTER))


def _upper(
    name: str, model: Model, value: float, threshold: float, detail: str = ""
) -> CheckResult:
    return CheckResult(name, model.name, bool(value <= threshold), float(value), threshold, detail)


def _off_band_point(bath: BathSpec, rng: np.random.Generator) -> complex:
    while True:
        k = rng.uniform(-np.pi, np.pi)
        radius = rng.uniform(0.05, 0.5) * bath.scale
        z = complex(dispersion(bath, k)) + radius * np.exp(1j * rng.uniform(0, 2 * np.pi))
        if band_distance(bath, z)[0] > 0.02 * bath.scale:
            return z


def check_residue_formula(model: Model, rng: np.random.Generator, instances: int) -> CheckResult:
    """留数公式と直接和の相対誤差。

    和が打ち消し合う場合は最大の項 max_k |J^2/(z - h_k)| の丸め誤差までを許す。
    """
    eps = np.finfo(np.float64).eps
    J = model.params.J
    worst = 0.0
    for _ in range(instances):
        L = int(rng.integers(model.bath.degree + 8, 65))
        z = _off_band_point(model.bath, rng)
        x = int(rng.choice(site_window(L)))
        direct = sigma_finite_sum(model.bath, J, L, z, x).value
        residue = sigma_finite_residue(model.bath, J, L, z, x).value
        bands = np.asarray(dispersion(model.bath, finite_momenta(L)))
        floor = CANCELLATION_FACTOR * eps * J**2 * float(np.max(1 / np.abs(z - bands)))
        allowed = max(IDENTITY_TOLERANCE * abs(direct), floor)
        worst = max(worst, abs(residue - direct) / allowed * IDENTITY_TOLERANCE)
    return _upper("residue_vs_sum", model, worst, IDENTITY_TOLERANCE)


def check_branch_jump(model: Model, rng: np.random.Generator, instances: int) -> CheckResult:
    """Σ^> - Σ^< = J^2 e^{ikx} / (i h'_k) が成り立たない k の数。"""
    failures = 0
    skipped = 0
    for _ in range(instances):
        k = rng.uniform(-np.pi, np.pi)
        x = int(rng.integers(-10, 11))
        try:
            branch_jump(model.bath, model.params.J, k, x)
        except VanishingGroupVelocityError:
            skipped += 1
        except SelfEnergyError as exc:
            failures += 1
            logger.debug("分枝の跳びが一致しません: k=%s: %s", k, exc)
    return _upper("branch_jump", model, failures, 0, f"skipped={skipped}")


def check_sum_rule(model: Model, rng: np.random.Generator, instances: int) -> CheckResult:
    worst = 0.0
    for _ in range(instances):
        energy = _off_band_point(model.bath, rng)
        scale = 1 + 1 / abs(energy - model.bath.h0)
        worst = max(worst, abs(sum_rule_residual(model.bath, energy)) / scale)
    return _upper("sum_rule", model, worst, IDENTITY_TOLERANCE)


def check_on_band_series(model: Model) -> CheckResult:
    """バンド上の |Σ^(L)(h_k)| の変動係数（大きいほど収束しない）。"""
    series = np.array(on_band_series(model.bath, model.params.J, 1.0, ON_BAND_SIZES))
    cv = float(np.std(series) / np.mean(series))
    return CheckResult("on_band_nonconvergence", model.name, cv > ON_BAND_CV, cv, ON_BAND_CV)


def check_off_band_convergence(model: Model, rng: np.random.Generator) -> CheckResult:
    z = _off_band_point(model.bath, rng)
    deviations = finite_size_deviation(model.bath, model.params.J, z, CONVERGENCE_SIZES)
    increases = sum(1 for a, b in pairwise(deviations) if b > a and b > 1e-13)
    return _upper("off_band_convergence", model, increases, 0, f"z={z:.4f}")


def check_branch_equivalence(
    model: Model, L: int, rng: np.random.Generator, samples: int
) -> CheckResult:
    """GREATER と LESS の LS 波動関数が定数倍を除いて一致する。"""
    modes = sorted(int(m) for m in rng.choice(np.arange(1, L + 1), size=samples, replace=False))
    bath, params = model.bath, model.params
    fine_tuned = fine_tuned_momenta(bath)
    batch = scattering_momenta(bath, params, L, modes, fine_tuned=fine_tuned)
    worst = 0.0
    for momentum in batch.momenta:
        k_tilde = momentum.k_tilde
        try:
            greater, less = (
                ls_wavefunction(bath, params, k_tilde, branch, L, fine_tuned=fine_tuned)
                for branch in (Branch.GREATER, Branch.LESS)
            )
        except FineTunedInputError:
            continue
        worst = max(worst, align(less.as_vector(), greater.as_vector())[1])
    detail = f"states={len(batch.momenta)}"
    return _upper("branch_equivalence", model, worst, BRANCH_TOLERANCE, detail)


def check_bound_residuals(model: Model, bounds: Sequence[BoundState]) -> CheckResult:
    worst = max((abs(b.residual) for b in bounds), default=0.0)
    detail = ", ".join(f"{b.k_tilde:.3f}" for b in bounds)
    return _upper("bound_residual", model, worst, IDENTITY_TOLERANCE * model.bath.scale, detail)


def check_ed_soundness(model: Model, ed: EDResult) -> list[CheckResult]:
    hamiltonian = ed.hamiltonian
    trace = complex(np.trace(hamiltonian.matrix))
    trace_error = abs(complex(np.sum(ed.eigenvalues)) - trace) / max(abs(trace), 1.0)
    return [
        _upper("ed_residual", model, float(np.max(ed.residuals)), ED_RESIDUAL),
        CheckResult(
            "ed_count", model.name, ed.count == hamiltonian.L + 1, ed.count, hamiltonian.L + 1
        ),
        _upper("ed_trace", model, trace_error, ED_RESIDUAL),
    ]


def _match_allowance(model: Model, bound: BoundState, L: int) -> float:
    return max(ED_MATCH, 10 * model.bath.scale * np.exp(-abs(bound.k_tilde.imag) * L))


def check_ed_bound_states(model: Model, ed: EDResult, bounds: Sequence[BoundState]) -> CheckResult:
    """局在長が L/10 未満の境界状態がすべて BOUND の固有値と一致する。

    有限サイズの補正 e^{-|Im k̃| L} が許容値を超える状態は許容値を広げる。
    """
    L = ed.hamiltonian.L
    bound_energies = ed.eigenvalues[ed.indices(StateClass.BOUND)]
    worst = 0.0
    for bound in bounds:
        if bound.localization_length >= L / 10:
            continue
        if bound_energies.size == 0:
            return CheckResult("ed_bound_match", model.name, False, np.inf, ED_MATCH, "BOUND なし")
        allowed = _match_allowance(model, bound, L)
        distance = float(np.min(np.abs(bound_energies - bound.E_b)))
        worst = max(worst, distance / allowed * ED_MATCH)
    return _upper("ed_bound_match", model, worst, ED_MATCH)


def check_ed_scattering(
    model: Model, ed: EDResult, rng: np.random.Generator, samples: int
) -> CheckResult:
    L = ed.hamiltonian.L
    modes = sorted(int(m) for m in rng.choice(np.arange(1, L + 1), size=samples, replace=False))
    batch = scattering_momenta(model.bath, model.params, L, modes)
    worst = max(
        (float(np.min(np.abs(ed.eigenvalues - m.E))) for m in batch.momenta), default=0.0
    )
    return _upper("ed_scattering_match", model, worst, ED_MATCH, f"states={len(batch.momenta)}")


def _sample_modes(rng: np.random.Generator, L: int, samples: int) -> list[int]:
    return sorted(int(m) for m in rng.choice(np.arange(1, L + 1), size=samples, replace=False))


def check_ed_wavefunctions(
    model: Model, ed: EDResult, rng: np.random.Generator, samples: int
) -> CheckResult:
    """LS 波動関数と最も近い ED 固有ベクトルの相対 L2 誤差の最大値。"""
    L = ed.hamiltonian.L
    bath, params = model.bath, model.params
    fine_tuned = fine_tuned_momenta(bath)
    batch = scattering_momenta(bath, params, L, _sample_modes(rng, L, samples))
    worst = 0.0
    for momentum in batch.momenta:
        try:
            wf = ls_wavefunction(
                bath, params, momentum.k_tilde, Branch.GREATER, L, fine_tuned=fine_tuned
            )
        except FineTunedInputError:
            continue
        _, error = match_state(ed, ed.nearest(momentum.E), wf)
        worst = max(worst, error)
    detail = f"states={len(batch.momenta)}"
    return _upper("ed_wavefunction_match", model, worst, WAVEFUNCTION_MATCH, detail)


def check_bound_count(model: Model, ed: EDResult, bounds: Sequence[BoundState]) -> CheckResult:
    """ED の BOUND のうち、求めた束縛状態のどれとも一致しないものの数。

    モデルが既知の個数を持つ場合は、束縛状態の総数との差も足す。
    """
    L = ed.hamiltonian.L
    observed = ed.eigenvalues[ed.indices(StateClass.BOUND)]
    unexplained = sum(
        1
        for energy in observed
        if not any(abs(energy - b.E_b) <= _match_allowance(model, b, L) for b in bounds)
    )
    mismatch = unexplained
    if model.expected_bounds is not None:
        mismatch += abs(len(bounds) - model.expected_bounds)
    detail = f"ed={observed.size}, unexplained={unexplained}, total={len(bounds)}"
    return _upper("bound_count", model, mismatch, 0, detail)


def check_self_intersection_state(model: Model, ed: EDResult) -> CheckResult:
    """自己交差点の2極の状態と ED 固有ベクトルの相対 L2 誤差。"""
    intersections = self_intersections(model.bath)
    if not intersections:
        return CheckResult(
            "ed_self_intersection", model.name, True, 0.0, FINE_TUNED_MATCH, "自己交差点なし"
        )
    L = ed.hamiltonian.L
    first = degenerate_momenta(model.bath, model.params, L, intersections[0])[0]
    wf = degenerate_wavefunction(model.bath, model.params, L, (first.k_tilde, first.partner))
    _, error = match_state(ed, ed.nearest(first.E), wf)
    detail = f"k={first.k_tilde:.4f}"
    return _upper("ed_self_intersection", model, error, FINE_TUNED_MATCH, detail)


def check_second_order_pole(model: Model, L: int, *, max_dim: int) -> CheckResult:
    """k = π の2位の極の族 m = 1, 2 と cos(πx) sin(mπx/L) の相関の最小値。"""
    ed = eigenpairs(build_hamiltonian(model.bath, model.params, L), max_dim=max_dim)
    x = site_window(L)
    worst = 1.0
    for momentum in degenerate_momenta(
        model.bath, model.params, L, SecondOrderPole(np.pi, (1, 2))
    ):
        m = momentum.m if momentum.m is not None else 0
        family = np.cos(np.pi * x) * np.sin(m * np.pi * x / L)
        vector = ed.eigenvectors[1:, ed.nearest(momentum.E)]
        worst = min(worst, profile_correlation(family, vector))
    return CheckResult(
        "second_order_pole_family",
        model.name,
        worst > FAMILY_CORRELATION,
        worst,
        FAMILY_CORRELATION,
    )


def check_scaling_fit(model: Model, sizes: Sequence[int] = SCALING_SIZES) -> CheckResult:
    """k ≈ 1 のモードで |Im k̃ - imk_leading| を L に対して両対数フィットした傾き。"""
    deviations = []
    for size in sizes:
        m = round(size / (2 * np.pi))
        k_tilde = scattering_momentum(model.bath, model.params, size, m).k_tilde
        leading = imk_leading(model.bath, model.params, size, 2 * np.pi * m / size)
        deviations.append(abs(k_tilde.imag - leading))
    fit = loglog_fit(sizes, deviations)
    low, high = SCALING_SLOPE
    return CheckResult(
        "imk_scaling_slope",
        model.name,
        bool(low <= fit.slope <= high),
        fit.slope,
        high,
        f"R2={fit.r_squared:.4f}",
    )


def _is_reciprocal(bath: BathSpec) -> bool:
    return all(
        np.isclose(abs(h), abs(bath.hoppings.get(-n, 0.0))) for n, h in bath.hoppings.items()
    )


def check_skin_effect(
    model: Model, bounds: Sequence[BoundState], *, size: int = SKIN_SIZE, max_dim: int
) -> list[CheckResult]:
    """OBC で散乱状態が端へ寄り、通常の束縛状態はエミッタの近くに残る。"""
    if _is_reciprocal(model.bath):
        return [CheckResult("skin_effect", model.name, True, 0.0, SKIN_DISPLACED, "相反な浴")]
    hamiltonian = build_hamiltonian(model.bath, model.params, size, Boundary.OBC)
    ed = classify_states(eigenpairs(hamiltonian, max_dim=max_dim))
    report = skin_report(ed)
    offsets = [
        abs(float(report.mean_positions[ed.nearest(b.E_b)]))
        for b in bounds
        if b.kind is BoundKind.CONVENTIONAL and b.localization_length < size / 10
    ]
    return [
        CheckResult(
            "skin_effect",
            model.name,
            report.displaced_fraction > SKIN_DISPLACED,
            report.displaced_fraction,
            SKIN_DISPLACED,
        ),
        _upper("bound_near_emitter", model, max(offsets, default=0.0), BOUND_OFFSET),
    ]


def check_hermitian_limit(L: int) -> list[CheckResult]:
    """κ = 0 の HN 浴では固有値が実数になり、閉じた形は使えない。"""
    model = Model("hn-hermitian", BathSpec.hatano_nelson(1.0, 0.0), EmitterParams(J=1.0, delta=0.3))
    ed = eigenpairs(build_hamiltonian(model.bath, model.params, L, Boundary.PBC))
    imaginary = float(np.max(np.abs(ed.eigenvalues.imag)))
    try:
        hn_closed_form(1.0, 0.0, model.params, 0.5, Branch.GREATER, L)
        rejected = False
    except HermitianLimitError:
        rejected = True
    return [
        _upper("hermitian_real_spectrum", model, imaginary, IDENTITY_TOLERANCE),
        CheckResult("hermitian_closed_form_rejected", model.name, rejected, float(rejected), 1.0),
    ]


def _failed(name: str, model: Model, exc: Exception) -> CheckResult:
    logger.warning("%s (%s) が失敗しました: %s", name, model.name, exc)
    return CheckResult(name, model.name, False, np.nan, np.nan, str(exc))


def _guarded(name: str, model: Model, run: Callable[[], list[CheckResult]]) -> list[CheckResult]:
    try:
        return run()
    except PACKAGE_ERRORS as exc:
        return [_failed(name, model, exc)]


def _oracle_checks(
    model: Model,
    L: int,
    rng: np.random.Generator,
    bounds: Sequence[BoundState],
    *,
    samples: int,
    max_dim: int,
    progress: bool,
) -> list[CheckResult]:
    hamiltonian = build_hamiltonian(model.bath, model.params, L)
    ed = classify_states(eigenpairs(hamiltonian, max_dim=max_dim, progress=progress))
    checks = [
        *check_ed_soundness(model, ed),
        check_ed_bound_states(model, ed, bounds),
        check_bound_count(model, ed, bounds),
        check_ed_scattering(model, ed, rng, samples),
    ]
    checks += _guarded(
        "ed_wavefunction_match", model, lambda: [check_ed_wavefunctions(model, ed, rng, samples)]
    )
    checks += _guarded(
        "ed_self_intersection", model, lambda: [check_self_intersection_state(model, ed)]
    )
    return checks


def model_checks(
    model: Model,
    L: int,
    rng: np.random.Generator,
    *,
    instances: int = 50,
    samples: int = 20,
    max_dim: int = 2048,
    progress: bool = False,
) -> list[CheckResult]:
    """1つのモデルについて全項目を実行する。失敗した項目は NG として記録する。"""
    checks = _guarded(
        "identities",
        model,
        lambda: [
            check_residue_formula(model, rng, instances),
            check_branch_jump(model, rng, 2 * instances),
            check_sum_rule(model, rng, instances),
            check_on_band_series(model),
            check_off_band_convergence(model, rng),
        ],
    )
    bounds: list[BoundState] = []
    try:
        bounds = bound_states(model.bath, model.params)
        checks.append(check_bound_residuals(model, bounds))
    except PACKAGE_ERRORS as exc:
        checks.append(_failed("bound_states", model, exc))
    checks += _guarded(
        "branch_equivalence", model, lambda: [check_branch_equivalence(model, L, rng, samples)]
    )
    checks += _guarded(
        "oracle",
        model,
        lambda: _oracle_checks(
            model, L, rng, bounds, samples=samples, max_dim=max_dim, progress=progress
        ),
    )
    checks += _guarded("scaling", model, lambda: [check_scaling_fit(model)])
    checks += _guarded(
        "skin_effect", model, lambda: check_skin_effect(model, bounds, max_dim=max_dim)
    )
    return checks


def run_verification(
    models: Sequence[Model],
    L: int,
    *,
    seed: int = 0,
    instances: int = 50,
    samples: int = 20,
    max_dim: int = 2048,
    progress: bool = False,
) -> VerificationReport:
    """全モデルについて検証スイートを実行する（乱数は seed で固定）。"""
    rng = np.random.default_rng(seed)
    report = VerificationReport()
    samples = min(samples, L)
    for model in models:
        logger.info("検証: %s (L=%d)", model.name, L)
        report.checks += model_checks(
            model,
            L,
            rng,
            instances=instances,
            samples=samples,
            max_dim=max_dim,
            progress=progress,
        )
    pole = second_order_pole_model()
    report.checks += _guarded(
        "second_order_pole", pole, lambda: [check_second_order_pole(pole, L, max_dim=max_dim)]
    )
    report.checks += check_hermitian_limit(min(L, 101))
    for check in report.checks:
        status = "OK" if check.passed else "NG"
        logger.info(
            "%s [%s]: %s (%.3e / %.3e)",
            check.name,
            check.model,
            status,
            check.value,
            check.threshold,
        )
    return report
