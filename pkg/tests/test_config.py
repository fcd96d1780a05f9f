"""config モジュールのテスト。"""

from pathlib import Path

import pytest

from nh_scatter.config import (
    BathFileError,
    ConfigParseError,
    FineTuned,
    ModelKind,
    OutputFormat,
    ParameterDomainError,
    RunConfig,
    describe,
    load_bath_file,
    load_config,
    parse_bath_text,
    parse_config_text,
    resolve_output_dir,
)
from nh_scatter.oracle import Boundary

from .bath_factory import make_nnn, write_bath_file


class TestRunConfig:
    """RunConfig のテスト。"""

    def test_defaults_are_hn_reference_parameters(self) -> None:
        """既定値は HN (u=6, κ=2, J=20, Δ=2.14, L=801)。"""
        config = RunConfig()
        bath = config.validate()
        assert bath.hoppings == {-1: -5.0, 1: -7.0}
        assert (config.J, config.delta, config.lattice_size) == (20.0, 2.14, 801)

    def test_nnn_defaults(self) -> None:
        """NNN の既定値は κ=5, κ'=12。"""
        config = RunConfig(model=ModelKind.NNN)
        assert config.bath().hoppings == {1: -5.0, 2: -12.0}

    def test_explicit_parameter_wins(self) -> None:
        """指定した値が既定値より優先される。"""
        config = RunConfig(model=ModelKind.HN, u=3.0)
        assert config.parameter("u") == 3.0
        assert config.parameter("kappa") == 2.0

    def test_missing_parameter(self) -> None:
        """custom モデルに u はない → ParameterDomainError。"""
        with pytest.raises(ParameterDomainError, match="u"):
            RunConfig(model=ModelKind.CUSTOM).parameter("u")

    def test_custom_needs_file(self) -> None:
        """custom でファイルなし → ParameterDomainError。"""
        with pytest.raises(ParameterDomainError, match="ホッピングファイル"):
            RunConfig(model=ModelKind.CUSTOM).bath()

    def test_custom_bath(self, tmp_path: Path) -> None:
        """custom はファイルから浴を読む。"""
        path = write_bath_file(tmp_path / "nnn.txt", make_nnn())
        config = RunConfig(model=ModelKind.CUSTOM, bath_file=path)
        assert config.bath().hoppings == make_nnn().hoppings

    @pytest.mark.parametrize(
        ("overrides", "match"),
        [
            ({"L": (2,)}, "L は"),
            ({"L": ()}, "L が"),
            ({"J": 0.0}, "J"),
            ({"max_dim": 0}, "max_dim"),
            ({"samples": 0}, "samples"),
            ({"modes": (0,)}, "modes"),
        ],
    )
    def test_validate_rejects(self, overrides: dict, match: str) -> None:
        """定義域外のパラメータ → ParameterDomainError。"""
        config = RunConfig().with_overrides(**overrides)
        with pytest.raises(ParameterDomainError, match=match):
            config.validate()

    def test_zero_coupling_allowed_when_not_required(self) -> None:
        """require_coupling=False なら J = 0 を許す。"""
        RunConfig(J=0.0).validate(require_coupling=False)

    def test_invalid_hopping_parameters(self) -> None:
        """u = κ/2 で h_{-1} = 0 → ParameterDomainError。"""
        with pytest.raises(ParameterDomainError):
            RunConfig(u=1.0, kappa=2.0).bath()

    def test_with_overrides_skips_none(self) -> None:
        """None の値は上書きしない。"""
        config = RunConfig(J=3.0).with_overrides(J=None, delta=1.0)
        assert (config.J, config.delta) == (3.0, 1.0)


class TestResolveOutputDir:
    """resolve_output_dir のテスト。"""

    def test_argument_first(self, tmp_path: Path) -> None:
        """引数が最優先。"""
        assert resolve_output_dir(tmp_path / "a") == tmp_path / "a"

    def test_environment(self, monkeypatch: pytest.MonkeyPatch, tmp_path: Path) -> None:
        """引数がなければ環境変数。"""
        monkeypatch.setenv("NH_SCATTER_OUTPUT_DIR", str(tmp_path / "env"))
        assert resolve_output_dir() == tmp_path / "env"

    def test_platform_default(self, monkeypatch: pytest.MonkeyPatch) -> None:
        """どちらもなければ OS 標準のデータディレクトリ配下の runs。"""
        monkeypatch.delenv("NH_SCATTER_OUTPUT_DIR", raising=False)
        path = resolve_output_dir()
        assert path.name == "runs"
        assert "nh-scatter" in str(path)


class TestParseConfigText:
    """parse_config_text / load_config のテスト。"""

    def test_all_sections(self) -> None:
        """各セクションのキーを型変換して読む。"""
        text = """
        # NNN の設定
        model.name = nnn
        model.kappa = 5
        model.kappa_p = 12
        emitter.J = 20
        emitter.delta = 2.14
        lattice.L = 101, 201
        lattice.boundary = obc
        output.format = json
        run.fine = si
        run.m = none
        """
        config = parse_config_text(text)
        assert config.model is ModelKind.NNN
        assert config.L == (101, 201)
        assert config.boundary is Boundary.OBC
        assert config.format is OutputFormat.JSON
        assert config.fine is FineTuned.SELF_INTERSECTION
        assert config.m is None

    def test_base_is_kept(self) -> None:
        """書かれていない値は base のまま。"""
        base = RunConfig(J=7.0)
        assert parse_config_text("emitter.delta = 1", base=base).J == 7.0

    def test_unknown_key(self) -> None:
        """未知のキー → ConfigParseError（行番号付き）。"""
        with pytest.raises(ConfigParseError) as exc_info:
            parse_config_text("emitter.J = 1\nfoo.bar = 2", source="run.conf")
        assert exc_info.value.line_no == 2
        assert "run.conf:2" in str(exc_info.value)

    def test_bad_value(self) -> None:
        """変換できない値 → ConfigParseError。"""
        with pytest.raises(ConfigParseError, match="emitter.J"):
            parse_config_text("emitter.J = abc")

    def test_missing_separator(self) -> None:
        """`=` のない行 → ConfigParseError。"""
        with pytest.raises(ConfigParseError):
            parse_config_text("lattice.L 101")

    def test_load_missing_file(self, tmp_path: Path) -> None:
        """存在しないファイル → ConfigParseError。"""
        with pytest.raises(ConfigParseError, match="読み込めません"):
            load_config(tmp_path / "missing.conf")

    def test_load_file(self, tmp_path: Path) -> None:
        """ファイルから読む。"""
        path = tmp_path / "run.conf"
        path.write_text("lattice.L = 64\n", encoding="utf-8")
        assert load_config(path).L == (64,)


class TestParseBathText:
    """parse_bath_text / load_bath_file のテスト。"""

    def test_complex_hoppings(self) -> None:
        """`re,im` と実数だけの値を読む。"""
        bath = parse_bath_text("p = 1\nq = 2\nhop.-1 = 1.5\nhop.2 = 0,-2\n")
        assert bath.hoppings == {-1: 1.5, 2: -2j}
        assert (bath.p, bath.q) == (1, 2)

    def test_missing_range(self) -> None:
        """q がない → BathFileError。"""
        with pytest.raises(BathFileError, match="q"):
            parse_bath_text("p = 1\nhop.-1 = 1\n")

    def test_invalid_bath(self) -> None:
        """範囲の端のホッピングがゼロ → BathFileError。"""
        with pytest.raises(BathFileError):
            parse_bath_text("p = 1\nq = 1\nhop.1 = 1\n")

    def test_bad_complex(self) -> None:
        """3成分の値 → BathFileError（行番号付き）。"""
        with pytest.raises(BathFileError) as exc_info:
            parse_bath_text("p = 0\nq = 1\nhop.1 = 1,2,3\n")
        assert exc_info.value.line_no == 3

    def test_unknown_key(self) -> None:
        """未知のキー → BathFileError。"""
        with pytest.raises(BathFileError, match="未知"):
            parse_bath_text("p = 0\nq = 1\nhop.1 = 1\nscale = 2\n")

    def test_load_uses_stem_as_name(self, tmp_path: Path) -> None:
        """ファイル名の stem が浴の名前になる。"""
        path = write_bath_file(tmp_path / "my_bath.txt", make_nnn())
        assert load_bath_file(path).name == "my_bath"

    def test_load_missing(self, tmp_path: Path) -> None:
        """存在しないファイル → BathFileError。"""
        with pytest.raises(BathFileError):
            load_bath_file(tmp_path / "none.txt")


class TestDescribe:
    """describe のテスト。"""

    def test_strings(self) -> None:
        """列挙型は値、タプルはカンマ区切り。"""
        described = describe(RunConfig(L=(101, 201)))
        assert described["model"] == "hn"
        assert described["L"] == "101,201"
        assert described["boundary"] == "pbc"
        assert described["kappa"] == "None"
