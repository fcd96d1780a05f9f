"""実行設定の定義と読み込み。"""

from __future__ import annotations

import os
from collections.abc import Callable, Mapping
from dataclasses import dataclass, fields, replace
from enum import Enum
from pathlib import Path

import platformdirs

from nh_scatter.bath import BathError, BathSpec
from nh_scatter.oracle import DEFAULT_MAX_DIM, Boundary
from nh_scatter.solver import EmitterParams

APP_NAME = "nh-scatter"
OUTPUT_DIR_ENV = "NH_SCATTER_OUTPUT_DIR"


class ConfigError(Exception):
    """設定の読み込み・検証に失敗した場合の基底例外。"""


class ConfigParseError(ConfigError):
    """設定ファイルの構文エラー。"""

    def __init__(self, source: str, line_no: int, reason: str) -> None:
        self.source = source
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"{source}:{line_no}: {reason}")


class BathFileError(ConfigError):
    """ホッピングファイルの構文エラーまたは不正な浴。"""

    def __init__(self, source: str, line_no: int | None, reason: str) -> None:
        self.source = source
        self.line_no = line_no
        self.reason = reason
        where = source if line_no is None else f"{source}:{line_no}"
        super().__init__(f"{where}: {reason}")


class ParameterDomainError(ConfigError):
    """パラメータが定義域外。"""


class ModelKind(Enum):
    HN = "hn"
    NNN = "nnn"
    CUSTOM = "custom"


class OutputFormat(Enum):
    CSV = "csv"
    JSON = "json"


class FineTuned(Enum):
    SELF_INTERSECTION = "si"
    SECOND_ORDER_POLE = "pole"


# モデルごとの既定値
MODEL_DEFAULTS: dict[ModelKind, dict[str, float]] = {
    ModelKind.HN: {"u": 6.0, "kappa": 2.0},
    ModelKind.NNN: {"kappa": 5.0, "kappa_p": 12.0},
    ModelKind.CUSTOM: {},
}


@dataclass(frozen=True)
class RunConfig:
    """1回の実行の設定。

    u, kappa, kappa_p が None ならモデルごとの既定値を使う。
    """

    model: ModelKind = ModelKind.HN
    u: float | None = None
    kappa: float | None = None
    kappa_p: float | None = None
    bath_file: Path | None = None
    J: float = 20.0
    delta: float = 2.14
    L: tuple[int, ...] = (801,)
    boundary: Boundary = Boundary.PBC
    out_dir: Path | None = None
    format: OutputFormat = OutputFormat.CSV
    seed: int = 0
    m: int | None = None
    k_target: float | None = None
    fine: FineTuned | None = None
    modes: tuple[int, ...] = (1, 2)
    samples: int = 20
    max_dim: int = DEFAULT_MAX_DIM

    def parameter(self, name: str) -> float:
        """u, kappa, kappa_p の値（未指定ならモデルの既定値）。"""
        value = getattr(self, name)
        if value is not None:
            return float(value)
        try:
            return MODEL_DEFAULTS[self.model][name]
        except KeyError:
            message = f"モデル {self.model.value} に {name} が指定されていません"
            raise ParameterDomainError(message) from None

    @property
    def lattice_size(self) -> int:
        """単一サイズのコマンドで使う L（リストの先頭）。"""
        return self.L[0]

    def bath(self) -> BathSpec:
        """設定から浴を組み立てる。

        Raises:
            ParameterDomainError: 浴が不正な場合。
            BathFileError: ホッピングファイルが読めない場合。
        """
        if self.model is ModelKind.CUSTOM:
            if self.bath_file is None:
                raise ParameterDomainError("custom モデルにはホッピングファイルが必要です")
            return load_bath_file(self.bath_file)
        try:
            if self.model is ModelKind.HN:
                return BathSpec.hatano_nelson(self.parameter("u"), self.parameter("kappa"))
            return BathSpec.next_nearest(self.parameter("kappa"), self.parameter("kappa_p"))
        except BathError as exc:
            raise ParameterDomainError(f"浴のパラメータが不正です: {exc}") from exc

    def params(self) -> EmitterParams:
        return EmitterParams(J=self.J, delta=self.delta)

    def validate(self, *, require_coupling: bool = True) -> BathSpec:
        """パラメータの定義域を検証し、浴を返す。

        Raises:
            ParameterDomainError: L < p+q+1、J = 0（必要な場合）などの場合。
        """
        bath = self.bath()
        if not self.L:
            raise ParameterDomainError("L が指定されていません")
        minimum = bath.degree + 1
        too_small = [size for size in self.L if size < minimum]
        if too_small:
            raise ParameterDomainError(f"L は {minimum} 以上である必要があります: {too_small}")
        if require_coupling and self.J == 0:
            raise ParameterDomainError("このコマンドには J ≠ 0 が必要です")
        if self.max_dim < 1:
            raise ParameterDomainError(f"max_dim は正である必要があります: {self.max_dim}")
        if self.samples < 1:
            raise ParameterDomainError(f"samples は正である必要があります: {self.samples}")
        if not self.modes or any(m < 1 for m in self.modes):
            raise ParameterDomainError(f"modes は正の整数である必要があります: {self.modes}")
        return bath

    def output_dir(self) -> Path:
        return resolve_output_dir(self.out_dir)

    def with_overrides(self, **values: object) -> RunConfig:
        """None でない値だけで上書きした設定を返す。"""
        return replace(self, **{k: v for k, v in values.items() if v is not None})


def resolve_output_dir(out_dir: Path | None = None) -> Path:
    """出力ディレクトリを解決する。

    優先順位:
    1. 引数（--out）
    2. 環境変数 NH_SCATTER_OUTPUT_DIR
    3. OS 標準データディレクトリ: platformdirs.user_data_dir("nh-scatter") / "runs"
    """
    if out_dir is not None:
        return Path(out_dir)
    env = os.environ.get(OUTPUT_DIR_ENV)
    if env:
        return Path(env)
    return Path(platformdirs.user_data_dir(APP_NAME)) / "runs"


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(",") if part.strip())


def _optional_float(text: str) -> float | None:
    return None if text.lower() == "none" else float(text)


def _optional_int(text: str) -> int | None:
    return None if text.lower() == "none" else int(text)


def _fine(text: str) -> FineTuned | None:
    return None if text.lower() == "none" else FineTuned(text.lower())


# 設定ファイルのキー -> (RunConfig のフィールド, 変換関数)
CONFIG_KEYS: dict[str, tuple[str, Callable[[str], object]]] = {
    "model.name": ("model", lambda s: ModelKind(s.lower())),
    "model.u": ("u", float),
    "model.kappa": ("kappa", float),
    "model.kappa_p": ("kappa_p", float),
    "model.bath_file": ("bath_file", Path),
    "emitter.J": ("J", float),
    "emitter.delta": ("delta", float),
    "lattice.L": ("L", _int_list),
    "lattice.boundary": ("boundary", lambda s: Boundary(s.lower())),
    "output.dir": ("out_dir", Path),
    "output.format": ("format", lambda s: OutputFormat(s.lower())),
    "run.seed": ("seed", int),
    "run.m": ("m", _optional_int),
    "run.k_target": ("k_target", _optional_float),
    "run.fine": ("fine", _fine),
    "run.modes": ("modes", _int_list),
    "run.samples": ("samples", int),
    "run.max_dim": ("max_dim", int),
}


def _key_values(text: str, source: str) -> list[tuple[int, str, str]]:
    """`key = value` 行を (行番号, key, value) に分解する。空行と # コメントは無視。"""
    entries = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip() or not value.strip():
            raise ConfigParseError(source, line_no, f"`key = value` の形式ではありません: {raw!r}")
        entries.append((line_no, key.strip(), value.strip()))
    return entries


def parse_config_text(
    text: str, *, source: str = "<config>", base: RunConfig | None = None
) -> RunConfig:
    """`section.key = value` 形式の設定を読み、base を上書きした RunConfig を返す。

    Raises:
        ConfigParseError: 未知のキーや変換できない値がある場合。
    """
    values: dict[str, object] = {}
    for line_no, key, value in _key_values(text, source):
        if key not in CONFIG_KEYS:
            raise ConfigParseError(source, line_no, f"未知のキーです: {key}")
        name, convert = CONFIG_KEYS[key]
        try:
            values[name] = convert(value)
        except ValueError as exc:
            raise ConfigParseError(source, line_no, f"{key} の値が不正です: {exc}") from exc
    return replace(base or RunConfig(), **values)


def load_config(path: Path, *, base: RunConfig | None = None) -> RunConfig:
    """設定ファイルを読み込む。

    Raises:
        ConfigParseError: ファイルが読めない場合や構文エラーの場合。
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigParseError(str(path), 0, f"読み込めません: {exc}") from exc
    return parse_config_text(text, source=str(path), base=base)


def _complex(text: str) -> complex:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) == 1:
        return complex(float(parts[0]), 0.0)
    if len(parts) == 2:
        return complex(float(parts[0]), float(parts[1]))
    raise ValueError(f"`re,im` の形式ではありません: {text!r}")


def parse_bath_text(text: str, *, source: str = "<bath>", name: str = "custom") -> BathSpec:
    """`p = <int>`、`q = <int>`、`hop.<n> = <re>,<im>` 形式のホッピングを読む。

    Raises:
        BathFileError: 構文エラー、または得られた浴が不正な場合。
    """
    ranges: dict[str, int] = {}
    hoppings: dict[int, complex] = {}
    try:
        entries = _key_values(text, source)
    except ConfigParseError as exc:
        raise BathFileError(source, exc.line_no, exc.reason) from exc
    for line_no, key, value in entries:
        try:
            if key in ("p", "q"):
                ranges[key] = int(value)
            elif key.startswith("hop."):
                hoppings[int(key.removeprefix("hop."))] = _complex(value)
            else:
                raise BathFileError(source, line_no, f"未知のキーです: {key}")
        except ValueError as exc:
            raise BathFileError(source, line_no, f"{key} の値が不正です: {exc}") from exc
    missing = [key for key in ("p", "q") if key not in ranges]
    if missing:
        raise BathFileError(source, None, f"{', '.join(missing)} が指定されていません")
    try:
        return BathSpec(hoppings=hoppings, p=ranges["p"], q=ranges["q"], name=name)
    except BathError as exc:
        raise BathFileError(source, None, str(exc)) from exc


def load_bath_file(path: Path) -> BathSpec:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise BathFileError(str(path), None, f"読み込めません: {exc}") from exc
    return parse_bath_text(text, source=str(path), name=Path(path).stem)


def describe(config: RunConfig) -> Mapping[str, str]:
    """出力ファイルのメタデータ用に設定を文字列化する。"""
    described = {}
    for name in (f.name for f in fields(RunConfig)):
        value = getattr(config, name)
        if isinstance(value, Enum):
            value = value.value
        elif isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        described[name] = str(value)
    return described
