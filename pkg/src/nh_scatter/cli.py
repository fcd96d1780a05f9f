"""nhscatter CLI エントリポイント。"""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Callable
from pathlib import Path
from typing import NamedTuple

import numpy as np
from tqdm import tqdm

from nh_scatter.bath import BathSpec, dispersion, dispersion_derivative, self_intersections
from nh_scatter.config import (
    ConfigError,
    FineTuned,
    ModelKind,
    OutputFormat,
    ParameterDomainError,
    RunConfig,
    describe,
    load_config,
)
from nh_scatter.export import (
    BAND_COLUMNS,
    BOUND_COLUMNS,
    SPECTRUM_COLUMNS,
    WAVEFUNCTION_COLUMNS,
    BoundSummary,
    ExportError,
    OutputWriter,
    ScalingSummary,
    SpectrumSummary,
    StateSummary,
    bound_rows,
    spectrum_rows,
)
from nh_scatter.math import loglog_fit, profile_correlation
from nh_scatter.oracle import (
    BAND_SAMPLES,
    Boundary,
    EDResult,
    StateClass,
    build_hamiltonian,
    classify_states,
    eigenpairs,
    match_state,
)
from nh_scatter.selfenergy import (
    Branch,
    finite_size_deviation,
    nnn_region,
    on_band_series,
    site_window,
)
from nh_scatter.solver import (
    VANISHING_DERIVATIVE,
    BoundState,
    ScatteringMomentum,
    SecondOrderPole,
    bound_states,
    degenerate_momenta,
    fine_tuned_momenta,
    imk_leading,
    scattering_momenta,
    scattering_momentum,
)
from nh_scatter.verification import (
    ON_BAND_SIZES,
    PACKAGE_ERRORS,
    Model,
    reference_models,
    run_verification,
)
from nh_scatter.wavefn import (
    WaveFunction,
    degenerate_wavefunction,
    hn_closed_form,
    ls_wavefunction,
    nnn_closed_form,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

MIN_SCALING_SIZES = 4
SCALING_MOMENTUM = 1.0


class CommandResult(NamedTuple):
    files: list[Path]
    passed: bool = True


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"整数のカンマ区切りではありません: {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="設定ファイル（section.key = value）")
    common.add_argument("--model", choices=[m.value for m in ModelKind])
    common.add_argument("--u", type=float)
    common.add_argument("--kappa", type=float)
    common.add_argument("--kappap", dest="kappa_p", type=float)
    common.add_argument("--bath-file", dest="bath_file", type=Path, help="custom モデルのホッピング")
    common.add_argument("--J", type=float)
    common.add_argument("--delta", type=float)
    common.add_argument("--L", type=_int_list, help="格子サイズ（カンマ区切りで複数）")
    common.add_argument("--boundary", choices=[b.value for b in Boundary])
    common.add_argument("--out", dest="out_dir", type=Path, help="出力ディレクトリ")
    common.add_argument("--format", choices=[f.value for f in OutputFormat])
    common.add_argument("--seed", type=int)
    common.add_argument("--max-dim", dest="max_dim", type=int)
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("--quiet", action="store_true", help="進捗表示を出さない")

    parser = argparse.ArgumentParser(prog="nhscatter")
    subparsers = parser.add_subparsers(dest="command")
    subparsers.add_parser("spectrum", parents=[common], help="厳密対角化のスペクトルを出力する")
    state = subparsers.add_parser("state", parents=[common], help="散乱状態を ED と比較する")
    state.add_argument("--m", type=int, help="モード番号")
    state.add_argument("--k-target", dest="k_target", type=float, help="目標運動量")
    state.add_argument("--fine", choices=[f.value for f in FineTuned], help="微調整点の状態")
    state.add_argument("--modes", type=_int_list, help="2次の極の族のモード番号")
    state.add_argument("--samples", type=int, help="ランダムに選ぶ状態の数")
    subparsers.add_parser("bound", parents=[common], help="束縛状態の表を出力する")
    scaling = subparsers.add_parser("scaling", parents=[common], help="Im k̃ の有限サイズ依存性")
    scaling.add_argument("--k-target", dest="k_target", type=float)
    verify = subparsers.add_parser("verify", parents=[common], help="不変量の検証スイート")
    verify.add_argument("--instances", type=int, default=50, help="恒等式ごとのランダム試行数")
    verify.add_argument("--samples", type=int, help="比較する散乱状態の数")
    return parser


def load_run_config(args: argparse.Namespace) -> RunConfig:
    """設定ファイル → CLI フラグの順に上書きした RunConfig を返す。"""
    base = load_config(args.config) if args.config is not None else RunConfig()
    converters: dict[str, Callable[[str], object]] = {
        "model": ModelKind,
        "boundary": Boundary,
        "format": OutputFormat,
        "fine": FineTuned,
    }
    overrides: dict[str, object] = {}
    for name in (
        "model", "u", "kappa", "kappa_p", "bath_file", "J", "delta", "L", "boundary",
        "out_dir", "format", "seed", "max_dim", "m", "k_target", "fine", "modes", "samples",
    ):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = converters[name](value) if name in converters else value
    return base.with_overrides(**overrides)


def _writer(config: RunConfig, command: str) -> OutputWriter:
    metadata = {"command": command, **describe(config)}
    return OutputWriter(config.output_dir(), config.format, metadata)


def _diagonalize(config: RunConfig, bath: BathSpec, L: int, *, progress: bool) -> EDResult:
    hamiltonian = build_hamiltonian(bath, config.params(), L, config.boundary)
    return classify_states(
        eigenpairs(hamiltonian, max_dim=config.max_dim, progress=progress), bath
    )


def _nearest_bound(ed: EDResult, bound: BoundState) -> complex:
    candidates = ed.indices(StateClass.BOUND) or list(range(ed.count))
    energies = ed.eigenvalues[candidates]
    return complex(energies[int(np.argmin(np.abs(energies - bound.E_b)))])


def cmd_spectrum(config: RunConfig, *, progress: bool = True) -> CommandResult:
    """ED スペクトル、バンド曲線のサンプル、束縛状態の印と要約を書く。"""
    bath = config.validate(require_coupling=False)
    params = config.params()
    L = config.lattice_size
    ed = _diagonalize(config, bath, L, progress=progress)
    bounds = bound_states(bath, params) if params.J != 0 else []
    k = 2 * np.pi * np.arange(BAND_SAMPLES) / BAND_SAMPLES
    curve = np.asarray(dispersion(bath, k))
    trace = complex(np.trace(ed.hamiltonian.matrix))
    summary: SpectrumSummary = {
        "command": "spectrum",
        "L": L,
        "boundary": config.boundary.value,
        "eigenvalue_count": ed.count,
        "bound_count": len(ed.indices(StateClass.BOUND)),
        "scattering_count": len(ed.indices(StateClass.SCATTERING)),
        "degenerate_count": len(ed.indices(StateClass.DEGENERATE_FAMILY)),
        "max_residual": float(np.max(ed.residuals)),
        "trace_error": abs(complex(np.sum(ed.eigenvalues)) - trace) / max(abs(trace), 1.0),
    }
    with _writer(config, "spectrum") as writer:
        writer.table("spectrum", SPECTRUM_COLUMNS, spectrum_rows(ed))
        writer.table(
            "band",
            BAND_COLUMNS,
            [(float(kk), float(h.real), float(h.imag)) for kk, h in zip(k, curve, strict=True)],
        )
        matched = [_nearest_bound(ed, b) for b in bounds]
        writer.table("bound_markers", BOUND_COLUMNS, bound_rows(bounds, matched))
        writer.summary("spectrum_summary", summary)
        return CommandResult(list(writer.written))


def _analytic_state(
    config: RunConfig, bath: BathSpec, momentum: ScatteringMomentum, L: int
) -> WaveFunction:
    """HN と NNN は閉じた形、それ以外は LS 波動関数（GREATER 分枝）。"""
    params = config.params()
    k_tilde = momentum.k_tilde
    if config.model is ModelKind.HN:
        u, kappa = config.parameter("u"), config.parameter("kappa")
        return hn_closed_form(u, kappa, params, k_tilde, Branch.GREATER, L)
    if config.model is ModelKind.NNN:
        kappa, kappa_p = config.parameter("kappa"), config.parameter("kappa_p")
        region = nnn_region(kappa, kappa_p, k_tilde)
        return nnn_closed_form(kappa, kappa_p, params, k_tilde, region, Branch.GREATER, L)
    return ls_wavefunction(bath, params, k_tilde, Branch.GREATER, L)


def _resolve_modes(config: RunConfig, L: int) -> list[int]:
    if config.m is not None:
        if not 1 <= config.m <= L:
            raise ParameterDomainError(f"m は 1..{L} である必要があります: {config.m}")
        return [config.m]
    if config.k_target is not None:
        m = int(round(config.k_target * L / (2 * np.pi))) % L
        return [m or L]
    rng = np.random.default_rng(config.seed)
    count = min(config.samples, L)
    return sorted(int(m) for m in rng.choice(np.arange(1, L + 1), size=count, replace=False))


def _degenerate_states(
    config: RunConfig, bath: BathSpec, L: int
) -> list[tuple[str, ScatteringMomentum, WaveFunction, np.ndarray | None]]:
    """微調整点の状態を (ラベル, 運動量, 波動関数, 比較する族の形) で返す。"""
    params = config.params()
    if config.fine is FineTuned.SELF_INTERSECTION:
        intersections = self_intersections(bath)
        if not intersections:
            raise ParameterDomainError("この浴には自己交差点がありません")
        momenta = degenerate_momenta(bath, params, L, intersections[0])
        first = momenta[0]
        wf = degenerate_wavefunction(bath, params, L, (first.k_tilde, first.partner))
        return [("si", first, wf, None)]
    poles = [
        k
        for k in fine_tuned_momenta(bath)
        if abs(complex(dispersion_derivative(bath, k, 1))) < VANISHING_DERIVATIVE * bath.scale
    ]
    if not poles:
        raise ParameterDomainError("この浴には群速度がゼロになる運動量がありません")
    k_r = poles[0]
    x = site_window(L)
    states = []
    for momentum in degenerate_momenta(bath, params, L, SecondOrderPole(k_r, config.modes)):
        m = momentum.m if momentum.m is not None else 0
        wf = degenerate_wavefunction(bath, params, L, (momentum.k_tilde, momentum.partner))
        family = np.cos(k_r * x) * np.sin(m * np.pi * x / L)
        states.append((f"pole_m{m}", momentum, wf, family))
    return states


def cmd_state(config: RunConfig, *, progress: bool = True) -> CommandResult:
    """解析的な状態と、揃えた ED 固有ベクトル、その差を書く。"""
    bath = config.validate()
    params = config.params()
    L = config.lattice_size
    if config.fine is not None:
        targets = _degenerate_states(config, bath, L)
        mode = config.fine.value
    else:
        modes = _resolve_modes(config, L)
        batch = scattering_momenta(bath, params, L, modes, progress=progress)
        targets = [
            (f"m{momentum.m}", momentum, _analytic_state(config, bath, momentum, L), None)
            for momentum in batch.momenta
        ]
        mode = "m" if config.m is not None else "k" if config.k_target is not None else "random"
    ed = _diagonalize(config, bath, L, progress=progress)
    records = []
    with _writer(config, "state") as writer:
        for label, momentum, analytic, family in tqdm(targets, desc="状態", disable=not progress):
            index = ed.nearest(momentum.E)
            alpha, error = match_state(ed, index, analytic)
            aligned = ed.wavefunction(index).scaled(alpha)
            deviation = analytic.amplitudes - aligned.amplitudes
            writer.wavefunction(f"state_{label}_analytic", analytic)
            writer.wavefunction(f"state_{label}_ed", aligned)
            writer.table(
                f"state_{label}_deviation",
                WAVEFUNCTION_COLUMNS,
                [
                    (int(xx), float(d.real), float(d.imag), float(abs(d)))
                    for xx, d in zip(analytic.positions, deviation, strict=True)
                ],
            )
            record = {
                "label": label,
                "k_tilde": momentum.k_tilde,
                "E": momentum.E,
                "ed_E": complex(ed.eigenvalues[index]),
                "alpha": alpha,
                "relative_error": error,
                "tiny_emitter": momentum.tiny_emitter,
            }
            if family is not None:
                record["family_correlation"] = profile_correlation(
                    family, ed.eigenvectors[1:, index]
                )
            records.append(record)
        summary: StateSummary = {"command": "state", "L": L, "mode": mode, "states": records}
        writer.summary("state_summary", summary)
        return CommandResult(list(writer.written))


def cmd_bound(config: RunConfig, *, progress: bool = True) -> CommandResult:
    """束縛状態の k̃, E_b, 分枝, 巻き数, 種類と対応する ED 固有値を書く。"""
    bath = config.validate()
    bounds = bound_states(bath, config.params())
    ed = _diagonalize(config, bath, config.lattice_size, progress=progress)
    matched = [_nearest_bound(ed, b) for b in bounds]
    summary: BoundSummary = {
        "command": "bound",
        "bound_count": len(bounds),
        "conventional_count": sum(1 for b in bounds if b.region_winding == 0),
        "hidden_count": sum(1 for b in bounds if b.region_winding != 0),
        "matched_count": len(ed.indices(StateClass.BOUND)),
    }
    with _writer(config, "bound") as writer:
        writer.table("bound_states", BOUND_COLUMNS, bound_rows(bounds, matched))
        writer.summary("bound_summary", summary)
        return CommandResult(list(writer.written))


def cmd_scaling(config: RunConfig, *, progress: bool = True) -> CommandResult:
    """|Im k̃ - imk_leading| の L 依存性と、Σ^(L) の収束・非収束の系列を書く。"""
    bath = config.validate()
    params = config.params()
    sizes = sorted(set(config.L))
    if len(sizes) < MIN_SCALING_SIZES:
        raise ParameterDomainError(f"L は {MIN_SCALING_SIZES} 個以上必要です: {sizes}")
    k = config.k_target if config.k_target is not None else SCALING_MOMENTUM
    rows = []
    for L in tqdm(sizes, desc="L", disable=not progress):
        m = int(round(k * L / (2 * np.pi))) % L or L
        k_tilde = scattering_momentum(bath, params, L, m).k_tilde
        leading = imk_leading(bath, params, L, 2 * np.pi * m / L)
        rows.append((L, m, k_tilde.real, k_tilde.imag, leading, abs(k_tilde.imag - leading)))
    fit = loglog_fit([r[0] for r in rows], [r[5] for r in rows])
    on_band = on_band_series(bath, params.J, k, ON_BAND_SIZES)
    off_band_z = complex(dispersion(bath, k + 0.5j))
    off_band = finite_size_deviation(bath, params.J, off_band_z, ON_BAND_SIZES)
    summary: ScalingSummary = {
        "command": "scaling",
        "L_values": sizes,
        "slope": fit.slope,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "on_band_cv": float(np.std(on_band) / np.mean(on_band)),
    }
    with _writer(config, "scaling") as writer:
        writer.table(
            "scaling", ("L", "m", "re_k", "im_k", "imk_leading", "deviation"), rows
        )
        writer.table(
            "sigma_series",
            ("L", "on_band_abs_sigma", "off_band_deviation"),
            list(zip(ON_BAND_SIZES, on_band, off_band, strict=True)),
            {"on_band_k": str(k), "off_band_z": str(off_band_z)},
        )
        writer.summary("scaling_summary", summary)
        return CommandResult(list(writer.written))


def _verification_models(config: RunConfig, bath: BathSpec) -> list[Model]:
    explicit = any(v is not None for v in (config.u, config.kappa, config.kappa_p))
    if config.model is ModelKind.CUSTOM or explicit:
        return [Model(config.model.value, bath, config.params())]
    return reference_models(config.J, config.delta)


def cmd_verify(config: RunConfig, *, progress: bool = True, instances: int = 50) -> CommandResult:
    """検証スイートを実行し、合否の報告を書く。"""
    bath = config.validate()
    if config.model is ModelKind.HN:
        # κ = 0 は閉じた形の定義域外
        u, kappa = config.parameter("u"), config.parameter("kappa")
        hn_closed_form(u, kappa, config.params(), 0.5, Branch.GREATER, config.lattice_size)
    report = run_verification(
        _verification_models(config, bath),
        config.lattice_size,
        seed=config.seed,
        instances=instances,
        samples=config.samples,
        max_dim=config.max_dim,
        progress=progress,
    )
    with _writer(config, "verify") as writer:
        writer.summary("verify_report", report.summary())
        return CommandResult(list(writer.written), report.passed)


COMMANDS: dict[str, Callable[..., CommandResult]] = {
    "spectrum": cmd_spectrum,
    "state": cmd_state,
    "bound": cmd_bound,
    "scaling": cmd_scaling,
    "verify": cmd_verify,
}


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command is None:
        parser.print_help()
        return EXIT_OK

    _configure_logging(args.verbose)
    options = {"instances": args.instances} if args.command == "verify" else {}
    try:
        config = load_run_config(args)
        logger.info("%s を実行します: model=%s L=%s", args.command, config.model.value, config.L)
        result = COMMANDS[args.command](config, progress=not args.quiet, **options)
    except ConfigError as exc:
        print(f"設定エラー: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (*PACKAGE_ERRORS, ExportError) as exc:
        print(f"エラー: {exc}", file=sys.stderr)
        return EXIT_FAILURE

    for path in result.files:
        print(path)
    if not result.passed:
        print("検証に失敗した項目があります", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
