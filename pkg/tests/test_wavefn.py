"""wavefn モジュールのテスト。"""

import numpy as np
import pytest

from nh_scatter.bath import BathSpec, dispersion, self_intersections
from nh_scatter.math import align, profile_correlation
from nh_scatter.oracle import build_hamiltonian
from nh_scatter.selfenergy import Branch, Region, finite_momenta, site_window
from nh_scatter.solver import (
    EmitterParams,
    FineTunedInputError,
    NotDegenerateError,
    approximate_momentum,
    bound_states,
    degenerate_momenta,
    scattering_momentum,
)
from nh_scatter.wavefn import (
    ClosedFormDomainError,
    HermitianLimitError,
    NotEigenvalueError,
    RegionMismatchError,
    WaveFunction,
    ZeroStateError,
    amplitude_contrast,
    degenerate_wavefunction,
    formal_wavefunction,
    hn_closed_form,
    localization_length,
    ls_wavefunction,
    mean_position,
    nnn_closed_form,
    normalize,
    plane_wave_superposition,
)

from .bath_factory import make_hn, make_plane_wave, make_triple_bath


class TestWaveFunction:
    """WaveFunction のテスト。"""

    def test_length_mismatch(self) -> None:
        """振幅の長さ ≠ L → ValueError。"""
        with pytest.raises(ValueError, match="長さ"):
            WaveFunction(amplitudes=np.ones(4), c_e=0.0, L=5)

    def test_at_wraps_periodically(self) -> None:
        """at(x + L) = at(x)。"""
        wf = make_plane_wave(10, 0.3)
        assert wf.at(12) == wf.at(2)
        assert wf.at(-5) == pytest.approx(np.exp(-1.5j))

    def test_vector_layout(self) -> None:
        """as_vector は [c_e, ψ(-⌊L/2⌋), ...]。"""
        wf = WaveFunction(amplitudes=[1.0, 2.0, 3.0], c_e=5.0, L=3)
        np.testing.assert_array_equal(wf.as_vector(), [5.0, 1.0, 2.0, 3.0])
        assert list(wf.positions) == [-1, 0, 1]
        assert wf.weight == pytest.approx(39.0)

    def test_fourier_of_plane_wave(self) -> None:
        """e^{ik_3 x} → m = 3 の係数だけが √L。"""
        L = 16
        wf = make_plane_wave(L, 2 * np.pi * 3 / L)
        coefficients = wf.fourier_coefficients()
        expected = np.zeros(L, dtype=complex)
        expected[2] = np.sqrt(L)
        np.testing.assert_allclose(coefficients, expected, atol=1e-12)


class TestNormalize:
    """normalize のテスト。"""

    def test_unit_weight(self) -> None:
        """重みが 1 になり normalized が立つ。"""
        wf = normalize(make_plane_wave(8, 0.4, c_e=2.0))
        assert wf.weight == pytest.approx(1.0)
        assert wf.normalized

    def test_fixed_point(self) -> None:
        """規格化済みの状態は変わらない。"""
        once = normalize(make_plane_wave(8, 0.4, c_e=1j))
        twice = normalize(once)
        np.testing.assert_allclose(twice.as_vector(), once.as_vector(), rtol=1e-15)

    def test_keeps_phase(self) -> None:
        """正の実数倍なので複素位相は保たれる。"""
        wf = make_plane_wave(8, 0.4, c_e=1.0)
        scaled = normalize(wf.scaled(3 + 4j))
        expected = normalize(wf).as_vector() * (3 + 4j) / 5
        np.testing.assert_allclose(scaled.as_vector(), expected, rtol=1e-14)

    def test_zero_state(self) -> None:
        """全振幅ゼロ → ZeroStateError。"""
        with pytest.raises(ZeroStateError):
            normalize(WaveFunction(amplitudes=np.zeros(4), c_e=0.0, L=4))


class TestProfileHelpers:
    """mean_position / localization_length / amplitude_contrast のテスト。"""

    def test_symmetric_profile_centered(self) -> None:
        """左右対称な分布の重心は 0。"""
        x = site_window(9)
        wf = WaveFunction(amplitudes=np.exp(-np.abs(x)), c_e=0.0, L=9)
        assert mean_position(wf) == pytest.approx(0.0, abs=1e-14)

    def test_exponential_decay(self) -> None:
        """e^{-|x|/3} → 局在長 3。"""
        x = site_window(31)
        assert localization_length(np.exp(-np.abs(x) / 3), x) == pytest.approx(3.0)

    def test_flat_profile(self) -> None:
        """減衰しない → inf。"""
        x = site_window(8)
        assert localization_length(np.ones(8), x) == float("inf")

    def test_plane_wave_contrast(self) -> None:
        """平面波の max|ψ| / min|ψ| = 1。"""
        assert amplitude_contrast(make_plane_wave(12, 1.1)) == pytest.approx(1.0)


class TestFormalWavefunction:
    """formal_wavefunction のテスト。"""

    def test_matches_direct_sum(self, hn_bath: BathSpec, params: EmitterParams) -> None:
        """ψ(x) = (J/L) Σ_k e^{ikx}/(E - h_k)（c_e = 1）と一致する。"""
        L = 64
        solved = scattering_momentum(hn_bath, params, L, 9)
        wf = formal_wavefunction(hn_bath, params, L, solved.E)
        k = finite_momenta(L)
        bands = np.asarray(dispersion(hn_bath, k))
        x = site_window(L)
        direct = params.J / L * np.exp(1j * np.outer(x, k)) @ (1 / (solved.E - bands))
        np.testing.assert_allclose(wf.amplitudes, direct, atol=1e-10 * np.max(np.abs(direct)))
        assert wf.c_e == 1.0

    def test_eigen_residual(self, hn_bath: BathSpec, params: EmitterParams) -> None:
        """組み立てた (L+1) ベクトルは H の固有ベクトル。"""
        L = 64
        solved = scattering_momentum(hn_bath, params, L, 21)
        wf = formal_wavefunction(hn_bath, params, L, solved.E)
        hamiltonian = build_hamiltonian(hn_bath, params, L)
        assert hamiltonian.eigen_residual(wf) < 1e-6

    def test_not_an_eigenvalue(self, hn_bath: BathSpec, params: EmitterParams) -> None:
        """永年方程式を満たさない E → NotEigenvalueError。"""
        with pytest.raises(NotEigenvalueError):
            formal_wavefunction(hn_bath, params, 64, 3.0 + 3.0j)

    def test_bound_state_decay(self, hn_bath: BathSpec, params: EmitterParams) -> None:
        """E = E_b の状態は x ≥ 0 で e^{-Im k̃ x} で減衰する。"""
        state = min(bound_states(hn_bath, params), key=lambda s: abs(s.k_tilde.real))
        L = 64
        wf = formal_wavefunction(hn_bath, params, L, state.E_b)
        x = wf.positions
        window = (x >= 0) & (x <= 15)
        length = localization_length(wf.amplitudes[window], x[window])
        assert 1 / length == pytest.approx(state.k_tilde.imag, rel=0.05)


class TestLsWavefunction:
    """ls_wavefunction のテスト。"""

    def test_branches_agree_projectively(
        self, hn_bath: BathSpec, params: EmitterParams, rng: np.random.Generator
    ) -> None:
        """HN: GREATER と LESS の構成は定数倍を除いて一致する。"""
        for _ in range(20):
            k_tilde = complex(rng.uniform(-np.pi, np.pi), rng.uniform(-0.02, 0.02))
            greater = ls_wavefunction(hn_bath, params, k_tilde, Branch.GREATER, 51)
            less = ls_wavefunction(hn_bath, params, k_tilde, Branch.LESS, 51)
            _, error = align(less.as_vector(), greater.as_vector())
            assert error < 1e-9

    def test_matches_hn_closed_form(self, hn_bath: BathSpec, params: EmitterParams) -> None:
        """一般の構成と HN の閉じた形が同じ分枝・同じ k̃ で一致する。"""
        k_tilde = 0.8 + 0.01j
        for branch in Branch:
            generic = ls_wavefunction(hn_bath, params, k_tilde, branch, 41)
            closed = hn_closed_form(6.0, 2.0, params, k_tilde, branch, 41)
            np.testing.assert_allclose(closed.as_vector(), generic.as_vector(), rtol=1e-11)

    def test_eigen_residual_at_solved_momentum(
        self, hn_bath: BathSpec, params: EmitterParams
    ) -> None:
        """解いた k̃ での LS 状態は有限格子でもほぼ固有状態。"""
        L = 101
        solved = approximate_momentum(hn_bath, params, L, 13)
        wf = ls_wavefunction(hn_bath, params, solved.k_tilde, Branch.LESS, L)
        hamiltonian = build_hamiltonian(hn_bath, params, L)
        assert hamiltonian.eigen_residual(wf) < 1e-4

    def test_fine_tuned_input(self, nnn_bath: BathSpec, params: EmitterParams) -> None:
        """k_SI の除外半径内 → FineTunedInputError。"""
        k_si = self_intersections(nnn_bath)[0].k_pair[1]
        with pytest.raises(FineTunedInputError):
            ls_wavefunction(nnn_bath, params, k_si + 1e-4, Branch.GREATER, 41)

    def test_metadata(self, nnn_bath: BathSpec, params: EmitterParams) -> None:
        """c_e = J G_e、E = h_{k̃}。"""
        wf = ls_wavefunction(nnn_bath, params, 0.5, Branch.LESS, 21)
        assert wf.kind == "ls"
        assert wf.branch is Branch.LESS
        assert wf.E == pytest.approx(complex(dispersion(nnn_bath, 0.5)))


class TestHnClosedForm:
    """hn_closed_form のテスト。"""

    def test_less_branch_plane_wave_for_positive_x(self, params: EmitterParams) -> None:
        """LESS は x ≥ 0 で素の平面波。"""
        k_tilde = 1.2 - 0.003j
        wf = hn_closed_form(6.0, 2.0, params, k_tilde, Branch.LESS, 31)
        x = wf.positions
        positive = x >= 0
        np.testing.assert_allclose(wf.amplitudes[positive], np.exp(1j * k_tilde * x[positive]))

    def test_hermitian_limit(self, params: EmitterParams) -> None:
        """κ = 0 → HermitianLimitError。"""
        with pytest.raises(HermitianLimitError):
            hn_closed_form(6.0, 0.0, params, 0.5, Branch.GREATER, 21)

    def test_domain(self, params: EmitterParams) -> None:
        """u κ < 0 → ClosedFormDomainError。"""
        with pytest.raises(ClosedFormDomainError):
            hn_closed_form(6.0, -2.0, params, 0.5, Branch.GREATER, 21)


class TestNnnClosedForm:
    """nnn_closed_form のテスト。"""

    @pytest.mark.parametrize(("k", "region"), [(1.0, Region.K1), (2.5, Region.K2)])
    def test_matches_generic(
        self, nnn_bath: BathSpec, params: EmitterParams, k: float, region: Region
    ) -> None:
        """領域ごとの閉じた形は一般の構成と一致する。"""
        k_tilde = complex(k, 0.004)
        for branch in Branch:
            generic = ls_wavefunction(nnn_bath, params, k_tilde, branch, 41)
            closed = nnn_closed_form(5.0, 12.0, params, k_tilde, region, branch, 41)
            np.testing.assert_allclose(closed.as_vector(), generic.as_vector(), rtol=1e-10)

    def test_k1_greater_negative_side(self, params: EmitterParams) -> None:
        """K1 の GREATER は x < 0 で素の平面波。"""
        k_tilde = 0.9 + 0.002j
        wf = nnn_closed_form(5.0, 12.0, params, k_tilde, Region.K1, Branch.GREATER, 31)
        x = wf.positions
        negative = x < 0
        np.testing.assert_allclose(wf.amplitudes[negative], np.exp(1j * k_tilde * x[negative]))

    def test_evanescent_ratio(self, params: EmitterParams) -> None:
        """K1 の LESS で散乱波の比は根 -κ'/(κ + κ' e^{-ik̃})。"""
        k_tilde = 0.9 + 0.002j
        wf = nnn_closed_form(5.0, 12.0, params, k_tilde, Region.K1, Branch.LESS, 31)
        scattered = wf.amplitudes - np.exp(1j * k_tilde * wf.positions)
        root = -12.0 / (5.0 + 12.0 * np.exp(-1j * k_tilde))
        for x in (0, 1, 2, 3):
            i = x + 31 // 2
            assert scattered[i + 1] / scattered[i] == pytest.approx(root, rel=1e-10)

    def test_region_mismatch(self, params: EmitterParams) -> None:
        """k = 1.0 に K2 を指定 → RegionMismatchError。"""
        with pytest.raises(RegionMismatchError):
            nnn_closed_form(5.0, 12.0, params, 1.0, Region.K2, Branch.GREATER, 21)

    def test_fine_tuned(self, params: EmitterParams) -> None:
        """k_SI + 1e-4 → FineTunedInputError。"""
        k_si = np.arccos(-5 / 24)
        with pytest.raises(FineTunedInputError):
            nnn_closed_form(5.0, 12.0, params, k_si + 1e-4, Region.K2, Branch.GREATER, 21)


class TestDegenerateWavefunction:
    """degenerate_wavefunction のテスト。"""

    def test_self_intersection_state(self, nnn_bath: BathSpec, params: EmitterParams) -> None:
        """自己交差の2項の重ね合わせは形式解とほぼ同じ形。"""
        L = 201
        target = self_intersections(nnn_bath)[0]
        alpha, gamma = degenerate_momenta(nnn_bath, params, L, target)
        two_term = degenerate_wavefunction(nnn_bath, params, L, (alpha, gamma))
        full = degenerate_wavefunction(nnn_bath, params, L, (alpha, gamma), include_rest=True)
        assert two_term.kind == "degenerate"
        assert profile_correlation(two_term.amplitudes, full.amplitudes) > 0.99

    def test_full_state_is_eigenvector(self, nnn_bath: BathSpec, params: EmitterParams) -> None:
        """include_rest の状態は H の固有ベクトル。"""
        L = 201
        target = self_intersections(nnn_bath)[0]
        pair = tuple(degenerate_momenta(nnn_bath, params, L, target))
        wf = degenerate_wavefunction(nnn_bath, params, L, pair, include_rest=True)
        assert build_hamiltonian(nnn_bath, params, L).eigen_residual(wf) < 1e-6

    def test_needs_pair(self, nnn_bath: BathSpec, params: EmitterParams) -> None:
        """k̃ が2つでない → NotDegenerateError。"""
        with pytest.raises(NotDegenerateError):
            degenerate_wavefunction(nnn_bath, params, 21, (1.0, 1.5, 2.0))


class TestPlaneWaveSuperposition:
    """plane_wave_superposition のテスト。"""

    def test_hermitian_pair(self) -> None:
        """κ = 0, L = 12, E = h_{2π·2/12} → (e^{ik_2 x} - e^{ik_10 x}) / √(2L)。"""
        bath = make_hn(kappa=0.0)
        L = 12
        energy = complex(dispersion(bath, 2 * np.pi * 2 / L))
        states = plane_wave_superposition(bath, L, energy)
        assert len(states) == 1
        coefficients = states[0].fourier_coefficients()
        assert coefficients[1] == pytest.approx(1 / np.sqrt(2))
        assert coefficients[9] == pytest.approx(-1 / np.sqrt(2))
        assert states[0].c_e == 0
        assert states[0].at(0) == pytest.approx(0.0, abs=1e-15)

    def test_triple_degeneracy(self, params: EmitterParams) -> None:
        """h_k = e^{-3ik}, L = 12 → 直交する2状態、いずれも H の固有状態。"""
        bath = make_triple_bath()
        L = 12
        energy = complex(dispersion(bath, 2 * np.pi * 4 / L))
        states = plane_wave_superposition(bath, L, energy)
        assert len(states) == 2
        assert abs(np.vdot(states[0].amplitudes, states[1].amplitudes)) < 1e-12
        hamiltonian = build_hamiltonian(bath, params, L)
        for state in states:
            assert state.weight == pytest.approx(1.0)
            assert hamiltonian.eigen_residual(state) < 1e-10

    def test_not_degenerate(self) -> None:
        """非エルミート HN の単独の固有値 → NotDegenerateError。"""
        bath = make_hn()
        with pytest.raises(NotDegenerateError):
            plane_wave_superposition(bath, 12, complex(dispersion(bath, 2 * np.pi / 12)))
