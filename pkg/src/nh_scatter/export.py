"""計算結果のファイル出力（CSV / JSON）。

CSV は UTF-8、`# key=value` のメタデータ行の後にヘッダー行、浮動小数点は
有効数字 17 桁。JSON の要約は下の TypedDict のスキーマに従う。
"""

from __future__ import annotations

import csv
import json
import logging
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path
from types import TracebackType
from typing import TYPE_CHECKING, Any, TypedDict

import numpy as np

from nh_scatter.config import OutputFormat
from nh_scatter.oracle import EDResult
from nh_scatter.solver import BoundState
from nh_scatter.wavefn import WaveFunction

if TYPE_CHECKING:
    from typing import Self

logger = logging.getLogger(__name__)

WAVEFUNCTION_COLUMNS = ("x", "re_psi", "im_psi", "abs_psi")
SPECTRUM_COLUMNS = ("re_E", "im_E", "class", "loc_length", "band_distance", "residual")
BAND_COLUMNS = ("k", "re_h", "im_h")
BOUND_COLUMNS = (
    "re_k",
    "im_k",
    "re_E",
    "im_E",
    "branch",
    "region_winding",
    "kind",
    "side",
    "abs_residual",
    "ed_re_E",
    "ed_im_E",
    "ed_distance",
)


class ExportError(Exception):
    """出力ファイルの書き込みに失敗した場合の例外。"""


class SpectrumSummary(TypedDict):
    command: str
    L: int
    boundary: str
    eigenvalue_count: int
    bound_count: int
    scattering_count: int
    degenerate_count: int
    max_residual: float
    trace_error: float


class BoundSummary(TypedDict):
    command: str
    bound_count: int
    conventional_count: int
    hidden_count: int
    matched_count: int


class StateSummary(TypedDict):
    command: str
    L: int
    mode: str
    states: list[dict[str, Any]]


class ScalingSummary(TypedDict):
    command: str
    L_values: list[int]
    slope: float
    intercept: float
    r_squared: float
    on_band_cv: float


class VerifySummary(TypedDict):
    command: str
    passed: bool
    checks: list[dict[str, Any]]


def format_value(value: object) -> str:
    """CSV のセル表現。浮動小数点は有効数字 17 桁。"""
    if isinstance(value, bool | str):
        return str(value)
    if isinstance(value, int | np.integer):
        return str(int(value))
    if isinstance(value, float | np.floating):
        return f"{float(value):.17g}"
    return str(value)


def _json_default(value: object) -> object:
    if isinstance(value, complex | np.complexfloating):
        return {"re": float(value.real), "im": float(value.imag)}
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"JSON に変換できません: {type(value).__name__}")


def write_csv(
    path: Path,
    columns: Sequence[str],
    rows: Iterable[Sequence[object]],
    metadata: Mapping[str, str] | None = None,
) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        for key, value in (metadata or {}).items():
            f.write(f"# {key}={value}\n")
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(cell) for cell in row])
    return path


def write_json(path: Path, payload: Mapping[str, Any]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True, default=_json_default)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def read_csv(path: Path) -> tuple[dict[str, str], list[dict[str, str]]]:
    """write_csv で書いたファイルを (メタデータ, 行) として読み戻す。"""
    metadata: dict[str, str] = {}
    lines = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition("=")
            metadata[key] = value
        else:
            lines.append(line)
    return metadata, list(csv.DictReader(lines))


def wavefunction_rows(wf: WaveFunction) -> list[tuple[object, ...]]:
    return [
        (int(x), float(psi.real), float(psi.imag), float(abs(psi)))
        for x, psi in zip(wf.positions, wf.amplitudes, strict=True)
    ]


def wavefunction_metadata(wf: WaveFunction) -> dict[str, str]:
    return {
        "kind": wf.kind,
        "L": str(wf.L),
        "c_e": format_value(complex(wf.c_e)),
        "E": format_value(wf.E),
        "k_tilde": format_value(wf.k_tilde),
        "branch": wf.branch.value if wf.branch is not None else "none",
        "normalized": str(wf.normalized),
    }


def spectrum_rows(ed: EDResult) -> list[tuple[object, ...]]:
    rows = []
    for i, energy in enumerate(ed.eigenvalues):
        state_class = ed.classes[i].value if ed.classified else ""
        loc = float(ed.loc_lengths[i]) if ed.loc_lengths is not None else float("nan")
        dist = float(ed.band_distances[i]) if ed.band_distances is not None else float("nan")
        rows.append(
            (float(energy.real), float(energy.imag), state_class, loc, dist, float(ed.residuals[i]))
        )
    return rows


def bound_rows(
    bounds: Sequence[BoundState], matched: Sequence[complex | None]
) -> list[tuple[object, ...]]:
    rows = []
    for bound, ed_energy in zip(bounds, matched, strict=True):
        if ed_energy is None:
            ed_part: tuple[object, ...] = (float("nan"), float("nan"), float("nan"))
        else:
            ed_part = (
                float(ed_energy.real),
                float(ed_energy.imag),
                float(abs(ed_energy - bound.E_b)),
            )
        rows.append(
            (
                float(bound.k_tilde.real),
                float(bound.k_tilde.imag),
                float(bound.E_b.real),
                float(bound.E_b.imag),
                bound.pole_branch.value,
                bound.region_winding,
                bound.kind.value,
                bound.side.value,
                float(abs(bound.residual)),
                *ed_part,
            )
        )
    return rows


class OutputWriter:
    """1つのコマンドの出力ファイルをまとめて書き、失敗時には書いた分を消す。

    with 文の中で例外が起きた場合、それまでに書いたファイルを削除する。
    """

    def __init__(
        self,
        out_dir: Path,
        output_format: OutputFormat = OutputFormat.CSV,
        metadata: Mapping[str, str] | None = None,
    ) -> None:
        self.out_dir = Path(out_dir)
        self.output_format = output_format
        self.metadata = dict(metadata or {})
        self.written: list[Path] = []

    def __enter__(self) -> Self:
        return self

    def __exit__(
        self,
        exc_type: type[BaseException] | None,
        exc: BaseException | None,
        tb: TracebackType | None,
    ) -> None:
        if exc_type is not None:
            self.cleanup()

    def cleanup(self) -> None:
        for path in self.written:
            path.unlink(missing_ok=True)
        if self.written:
            logger.info("途中まで書いた %d 個のファイルを削除しました", len(self.written))
        self.written.clear()

    def table(
        self,
        name: str,
        columns: Sequence[str],
        rows: Iterable[Sequence[object]],
        metadata: Mapping[str, str] | None = None,
    ) -> Path:
        """表を出力形式（CSV または JSON のレコード列）で書く。"""
        merged = {**self.metadata, **(metadata or {})}
        suffix = "csv" if self.output_format is OutputFormat.CSV else "json"
        path = self.out_dir / f"{name}.{suffix}"
        self.written.append(path)
        try:
            if self.output_format is OutputFormat.CSV:
                write_csv(path, columns, rows, merged)
            else:
                records = [dict(zip(columns, row, strict=True)) for row in rows]
                write_json(path, {"metadata": merged, "columns": list(columns), "rows": records})
        except OSError as exc:
            raise ExportError(f"{name} を書き込めません: {exc}") from exc
        logger.info("書き込みました: %s", path)
        return path

    def summary(self, name: str, payload: Mapping[str, Any]) -> Path:
        path = self.out_dir / f"{name}.json"
        self.written.append(path)
        try:
            write_json(path, {**payload, "metadata": self.metadata})
        except OSError as exc:
            raise ExportError(f"{name} を書き込めません: {exc}") from exc
        logger.info("書き込みました: %s", path)
        return path

    def wavefunction(self, name: str, wf: WaveFunction, **extra: str) -> Path:
        metadata = {**wavefunction_metadata(wf), **extra}
        return self.table(name, WAVEFUNCTION_COLUMNS, wavefunction_rows(wf), metadata)
