"""CLI エントリポイントのテスト。"""

import json
from pathlib import Path
from unittest.mock import patch

import pytest

from nh_scatter.cli import (
    EXIT_FAILURE,
    EXIT_OK,
    EXIT_USAGE,
    build_parser,
    load_run_config,
    main,
)
from nh_scatter.config import ModelKind, OutputFormat
from nh_scatter.export import read_csv
from nh_scatter.solver import NoConvergenceError
from nh_scatter.verification import CheckResult, VerificationReport


def _summary(out_dir: Path, name: str) -> dict:
    return json.loads((out_dir / f"{name}.json").read_text(encoding="utf-8"))


class TestCli:
    """main のテスト。"""

    def test_no_command_prints_help(self, capsys: pytest.CaptureFixture[str]) -> None:
        """サブコマンドなし → ヘルプを表示して 0。"""
        assert main([]) == EXIT_OK
        captured = capsys.readouterr()
        assert "spectrum" in captured.out
        assert "verify" in captured.out

    def test_spectrum(self, out_dir: Path, capsys: pytest.CaptureFixture[str]) -> None:
        """spectrum → スペクトル・バンド曲線・束縛状態・要約を書き、パスを表示する。"""
        code = main(["spectrum", "--L", "21", "--out", str(out_dir), "--quiet"])
        assert code == EXIT_OK
        for name in ("spectrum.csv", "band.csv", "bound_markers.csv", "spectrum_summary.json"):
            assert (out_dir / name).exists()
        summary = _summary(out_dir, "spectrum_summary")
        assert summary["eigenvalue_count"] == 22
        assert summary["metadata"]["model"] == "hn"
        _, band = read_csv(out_dir / "band.csv")
        assert len(band) == 2048
        metadata, rows = read_csv(out_dir / "spectrum.csv")
        assert metadata["command"] == "spectrum"
        assert len(rows) == 22
        assert str(out_dir / "spectrum.csv") in capsys.readouterr().out

    def test_spectrum_json(self, out_dir: Path) -> None:
        """--format json → 表も JSON。"""
        code = main(
            ["spectrum", "--model", "nnn", "--L", "16", "--out", str(out_dir), "--format", "json",
             "--quiet"]
        )
        assert code == EXIT_OK
        payload = json.loads((out_dir / "spectrum.json").read_text(encoding="utf-8"))
        assert len(payload["rows"]) == 17

    def test_bound(self, out_dir: Path) -> None:
        """bound → HN の基準パラメータで3つの束縛状態。"""
        assert main(["bound", "--L", "41", "--out", str(out_dir), "--quiet"]) == EXIT_OK
        summary = _summary(out_dir, "bound_summary")
        assert summary["bound_count"] == 3
        assert summary["hidden_count"] == 1
        _, rows = read_csv(out_dir / "bound_states.csv")
        assert len(rows) == 3

    def test_state_single_mode(self, out_dir: Path) -> None:
        """state --m → 解析解・ED・差の3つの表と要約。"""
        code = main(["state", "--m", "5", "--L", "61", "--out", str(out_dir), "--quiet"])
        assert code == EXIT_OK
        summary = _summary(out_dir, "state_summary")
        assert summary["mode"] == "m"
        assert summary["states"][0]["tiny_emitter"] is False
        for suffix in ("analytic", "ed", "deviation"):
            assert (out_dir / f"state_m5_{suffix}.csv").exists()

    def test_scaling(self, out_dir: Path) -> None:
        """scaling → 偏差の表と Σ^(L) の系列。"""
        code = main(["scaling", "--L", "64,128,256,512", "--out", str(out_dir), "--quiet"])
        assert code == EXIT_OK
        _, rows = read_csv(out_dir / "scaling.csv")
        assert [int(r["L"]) for r in rows] == [64, 128, 256, 512]
        assert "slope" in _summary(out_dir, "scaling_summary")
        assert (out_dir / "sigma_series.csv").exists()

    def test_scaling_needs_sizes(self, out_dir: Path, capsys: pytest.CaptureFixture[str]) -> None:
        """L が4個未満 → 設定エラーで 2。"""
        assert main(["scaling", "--L", "101,201", "--out", str(out_dir)]) == EXIT_USAGE
        assert "設定エラー" in capsys.readouterr().err

    def test_lattice_too_small(self, out_dir: Path) -> None:
        """L < p + q + 1 → 2。"""
        assert main(["spectrum", "--L", "2", "--out", str(out_dir)]) == EXIT_USAGE

    def test_missing_config_file(self, tmp_path: Path) -> None:
        """存在しない設定ファイル → 2。"""
        assert main(["bound", "--config", str(tmp_path / "none.conf")]) == EXIT_USAGE

    def test_custom_without_bath_file(self, out_dir: Path) -> None:
        """custom でホッピングファイルなし → 2。"""
        assert main(["spectrum", "--model", "custom", "--out", str(out_dir)]) == EXIT_USAGE

    def test_self_intersection_missing(self, out_dir: Path) -> None:
        """HN に --fine si → 自己交差点がないので 2。"""
        args = ["state", "--fine", "si", "--L", "41", "--out", str(out_dir), "--quiet"]
        assert main(args) == EXIT_USAGE

    def test_numerical_failure(self, out_dir: Path, capsys: pytest.CaptureFixture[str]) -> None:
        """数値計算の失敗 → 1、途中のファイルは残さない。"""
        error = NoConvergenceError("テスト", [1.0])
        with patch("nh_scatter.cli.bound_states", side_effect=error):
            code = main(["bound", "--L", "21", "--out", str(out_dir), "--quiet"])
        assert code == EXIT_FAILURE
        assert "エラー" in capsys.readouterr().err
        assert not (out_dir / "bound_states.csv").exists()

    def test_verify_passes(self, out_dir: Path) -> None:
        """検証がすべて通る → 0 と報告ファイル。"""
        report = VerificationReport([CheckResult("sum_rule", "hn", True, 0.0, 1e-10)])
        with patch("nh_scatter.cli.run_verification", return_value=report) as mock_run:
            code = main(["verify", "--L", "41", "--instances", "3", "--out", str(out_dir)])
        assert code == EXIT_OK
        assert mock_run.call_args.kwargs["instances"] == 3
        assert _summary(out_dir, "verify_report")["passed"] is True

    def test_verify_fails(self, out_dir: Path, capsys: pytest.CaptureFixture[str]) -> None:
        """NG の項目がある → 1。"""
        report = VerificationReport([CheckResult("ed_residual", "hn", False, 1.0, 1e-8)])
        with patch("nh_scatter.cli.run_verification", return_value=report):
            code = main(["verify", "--L", "41", "--out", str(out_dir)])
        assert code == EXIT_FAILURE
        assert "検証に失敗" in capsys.readouterr().err

    def test_verify_hermitian_hn(self, out_dir: Path) -> None:
        """κ = 0 の HN は閉じた形の定義域外 → 1。"""
        args = ["verify", "--kappa", "0", "--L", "41", "--out", str(out_dir)]
        with patch("nh_scatter.cli.run_verification") as mock_run:
            assert main(args) == EXIT_FAILURE
        mock_run.assert_not_called()


class TestLoadRunConfig:
    """load_run_config のテスト。"""

    def test_flags_override_file(self, tmp_path: Path) -> None:
        """設定ファイルの値を CLI フラグが上書きする。"""
        path = tmp_path / "run.conf"
        path.write_text("emitter.J = 5\nemitter.delta = 1\n", encoding="utf-8")
        args = build_parser().parse_args(["bound", "--config", str(path), "--J", "7"])
        config = load_run_config(args)
        assert (config.J, config.delta) == (7.0, 1.0)

    def test_enum_conversion(self) -> None:
        """--model と --format は列挙型に変換する。"""
        args = build_parser().parse_args(["spectrum", "--model", "nnn", "--format", "json"])
        config = load_run_config(args)
        assert config.model is ModelKind.NNN
        assert config.format is OutputFormat.JSON

    def test_lattice_list(self) -> None:
        """--L はカンマ区切り。"""
        args = build_parser().parse_args(["scaling", "--L", "101,201,401"])
        assert load_run_config(args).L == (101, 201, 401)

    def test_bad_lattice_list(self) -> None:
        """整数でない --L → argparse のエラー。"""
        with pytest.raises(SystemExit):
            build_parser().parse_args(["spectrum", "--L", "a,b"])
