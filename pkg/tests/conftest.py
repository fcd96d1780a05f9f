"""テスト用フィクスチャ。"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from nh_scatter.bath import BathSpec
from nh_scatter.solver import EmitterParams

from .bath_factory import make_hn, make_nnn, make_params


@pytest.fixture
def hn_bath() -> BathSpec:
    """Hatano-Nelson 浴（u=6, κ=2）。"""
    return make_hn()


@pytest.fixture
def nnn_bath() -> BathSpec:
    """一方向 NNN 浴（κ=5, κ'=12）。"""
    return make_nnn()


@pytest.fixture
def pole_bath() -> BathSpec:
    """k = π で群速度がゼロになる NNN 浴（κ=10, κ'=5）。"""
    return make_nnn(kappa=10.0, kappa_p=5.0)


@pytest.fixture
def params() -> EmitterParams:
    """エミッタ（J=20, Δ=2.14）。"""
    return make_params()


@pytest.fixture
def rng() -> np.random.Generator:
    """シード固定の乱数生成器。"""
    return np.random.default_rng(1234)


@pytest.fixture
def out_dir(tmp_path: Path) -> Path:
    """出力ファイル用ディレクトリ。"""
    return tmp_path / "out"


@pytest.fixture(autouse=True)
def _isolated_output_env(monkeypatch: pytest.MonkeyPatch, tmp_path: Path) -> None:
    """既定の出力先がユーザーのデータディレクトリに向かないようにする。"""
    monkeypatch.setenv("NH_SCATTER_OUTPUT_DIR", str(tmp_path / "default-out"))
