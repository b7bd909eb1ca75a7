"""
Unit tests for the analytic model and block-size optimizer.
"""

import logging
import math

import numpy as np
import pytest
from pydantic import ValidationError

from covert_expansion.analytic import (
    DomainError,
    ProtocolParams,
    approx_net_key,
    beta_thermal,
    binary_entropy,
    block_error_delta,
    dary_capacity,
    detection_bias_bound,
    expansion_condition_exact,
    expansion_condition_simplified,
    optimize_block_size,
    p_click_thermal,
    p_zero_signals,
    power_of_two_layout,
    raw_expansion_condition,
    required_modes,
    solve_d,
    thermal_condition,
)
from covert_expansion.config import reset_config


class TestElementaryQuantities:
    """Tests for the closed-form building blocks."""

    def setup_method(self):
        reset_config()

    @pytest.mark.parametrize("p,expected", [(0.0, 0.0), (1.0, 0.0), (0.5, 1.0)])
    def test_binary_entropy_values(self, p, expected):
        """Test the entropy endpoints and maximum."""
        assert binary_entropy(p) == pytest.approx(expected, abs=1e-15)

    def test_binary_entropy_rejects_out_of_range(self):
        """Test that probabilities outside [0, 1] are rejected."""
        with pytest.raises(DomainError):
            binary_entropy(1.5)

    def test_beta_thermal(self):
        """Test beta at d = 4 sqrt 2 and nbar = 1/2."""
        assert beta_thermal(4 * math.sqrt(2), 0.5) == pytest.approx(math.sqrt(2), rel=1e-12)
        assert beta_thermal(5.6367, 1e-4) == pytest.approx(99.64, abs=0.01)
        assert beta_thermal(5.6367, 1e-6) == pytest.approx(996.4, abs=0.1)

    def test_beta_thermal_requires_noise(self):
        """Test that nbar = 0 is outside the domain of beta."""
        with pytest.raises(DomainError):
            beta_thermal(5.0, 0.0)

    def test_p_zero_signals(self):
        """Test the exact and limiting no-signal probabilities."""
        assert p_zero_signals(1.0) == pytest.approx(math.exp(-1))
        assert abs(p_zero_signals(1.0, 1e6) - math.exp(-1)) < 1e-6
        assert p_zero_signals(4.0, 4) == 0.0

    def test_p_zero_signals_rejects_d_above_n(self):
        """Test that d > N is rejected."""
        with pytest.raises(DomainError):
            p_zero_signals(5.0, 4)

    def test_p_click_thermal(self):
        """Test click probabilities."""
        assert p_click_thermal(0.0) == 0.0
        assert p_click_thermal(1.0) == 0.5

    def test_block_error_delta(self):
        """Test the extraneous-click probability."""
        assert block_error_delta(1, 0.3) == 0.0
        assert block_error_delta(2, 0.5) == pytest.approx(0.5)
        assert block_error_delta(100, 0.01) == pytest.approx(1 - 0.99**99, rel=1e-12)

    def test_block_error_delta_nondecreasing_in_d(self):
        """Test that more modes never mean fewer collisions."""
        values = [block_error_delta(D, 1e-3) for D in range(1, 200)]
        assert all(b >= a for a, b in zip(values, values[1:]))

    @pytest.mark.parametrize("D", [2, 4, 16, 1024])
    def test_dary_capacity_edges(self, D):
        """Test noiseless capacity and the useless-channel point."""
        assert dary_capacity(D, 0.0) == pytest.approx(math.log2(D), abs=1e-10)
        assert dary_capacity(D, (D - 1) / D) == pytest.approx(0.0, abs=1e-10)

    def test_dary_capacity_bounds(self):
        """Test 0 <= C <= log2 D over a delta grid."""
        for delta in np.linspace(0.0, 1.0, 41):
            capacity = dary_capacity(64, float(delta))
            assert 0.0 <= capacity <= 6.0

    def test_dary_capacity_rejects_d_one(self):
        """Test that a one-symbol alphabet has no capacity formula."""
        with pytest.raises(DomainError):
            dary_capacity(1, 0.0)

    def test_required_modes(self):
        """Test N at unit parameters."""
        assert required_modes(1.0, 1.0, 0.0) == 1.0

    def test_detection_bias_bound_inverts_required_modes(self):
        """Test that N from the target gives back the target."""
        N = required_modes(0.05, 12.0, 0.2)
        assert detection_bias_bound(12.0, 0.2, N) == pytest.approx(0.05, rel=1e-12)

    def test_approx_net_key(self):
        """Test the approximate net key in both regimes."""
        assert approx_net_key(0.1, 1e-6, 0.1) == pytest.approx(4.983, abs=1e-3)
        assert approx_net_key(0.1, 1e-2, 0.001) == pytest.approx(-20.26, abs=0.01)
        assert approx_net_key(1.0, 1e-4, 0.1) == pytest.approx(-2 * math.log2(10))


class TestSolveD:
    """Tests for the normalized operating point."""

    def test_root_value_and_residual(self):
        """Test that the root is near 5.6367 and solves the equation."""
        d = solve_d()
        assert d == pytest.approx(5.6367, abs=1e-4)
        assert abs(d - 4 * math.sqrt(2) * (1 - math.exp(-d))) < 1e-9

    @pytest.mark.parametrize("nbar", [1e-7, 1e-5, 1e-3, 0.05])
    @pytest.mark.parametrize("eps", [0.1, 0.01, 0.001])
    def test_normalization_identity(self, nbar, eps):
        """Test that the normalized d gives N = 1 / (nbar eps^2)."""
        d = solve_d()
        N = required_modes(eps, beta_thermal(d, nbar), math.exp(-d))
        assert N == pytest.approx(1.0 / (nbar * eps**2), rel=1e-9)


class TestConditions:
    """Tests for the exact and simplified expansion conditions."""

    def setup_method(self):
        reset_config()

    def test_exact_analysis_example(self):
        """Test the full analysis at nbar = 1e-6, eps = 0.1, D = 1e5."""
        params = ProtocolParams(nbar=1e-6, eps=0.1, D=100_000)
        analysis = expansion_condition_exact(params)

        assert analysis.d_policy == "normalized"
        assert analysis.N == pytest.approx(1e8, rel=1e-9)
        assert analysis.M == pytest.approx(1e3, rel=1e-9)
        assert analysis.delta == pytest.approx(0.095162, abs=1e-6)
        assert analysis.capacity_bits == pytest.approx(14.5756, abs=1e-3)
        assert analysis.net_bits == pytest.approx(4.61, abs=0.01)
        assert analysis.net_bits == pytest.approx(
            analysis.produced_bits - analysis.consumed_bits, abs=1e-12
        )
        assert analysis.eps_bound == pytest.approx(0.1, rel=1e-9)
        assert analysis.condition_exact
        assert analysis.condition_raw
        assert analysis.condition_capacity
        assert analysis.regime_ok

    def test_degenerate_block_produces_nothing(self):
        """Test that D = 1 carries no information."""
        analysis = expansion_condition_exact(ProtocolParams(nbar=1e-4, eps=0.1, D=1))

        assert analysis.produced_bits == 0.0
        assert analysis.net_bits < 0.0
        assert not analysis.condition_exact

    def test_exact_condition_implies_raw_condition(self):
        """Test exact => D > beta / (eps (1 - p0)) across a grid."""
        for nbar in (1e-6, 1e-4, 1e-2):
            for D in (2, 10, 100, 1000):
                if D * nbar > 0.1:
                    continue
                analysis = expansion_condition_exact(ProtocolParams(nbar=nbar, eps=0.1, D=D))
                if analysis.condition_exact:
                    assert raw_expansion_condition(D, analysis.beta, 0.1, analysis.p0)
                assert 0.0 <= analysis.capacity_bits <= math.log2(D) + 1e-12

    def test_thermal_condition_matches_exact_condition(self):
        """Test the explicit-d condition against the analysis at normalized d."""
        d = solve_d()
        for D in (10, 1000, 100_000):
            analysis = expansion_condition_exact(ProtocolParams(nbar=1e-6, eps=0.1, D=D))
            assert thermal_condition(D, 1e-6, 0.1, d) == analysis.condition_exact

    def test_fixed_d_policy_is_echoed(self):
        """Test that an explicit d is used and reported."""
        analysis = expansion_condition_exact(ProtocolParams(nbar=1e-4, eps=0.1, D=100, d=3.0))

        assert analysis.d == 3.0
        assert analysis.d_policy == "fixed"
        assert analysis.p0 == pytest.approx(math.exp(-3.0))

    def test_block_larger_than_required_modes(self):
        """Test that D above N is a domain error."""
        with pytest.raises(DomainError):
            expansion_condition_exact(ProtocolParams(nbar=0.01, eps=0.4, D=10**6, alpha_max=0.5))

    def test_simplified_condition(self):
        """Test both sides of the simplified condition."""
        assert expansion_condition_simplified(10**5, 1e-6, 0.1)
        assert not expansion_condition_simplified(10, 1e-2, 0.001)

    def test_simplified_boundary_is_strict(self, caplog):
        """Test equality is not expansion, and a regime violation is logged."""
        with caplog.at_level(logging.WARNING, logger="covert_expansion.analytic"):
            assert not expansion_condition_simplified(8, 0.25, 0.25)
        assert "outside its regime" in caplog.text

    def test_simplified_regime_flag_rejects_large_blocks(self):
        """Test that the strict regime flag refuses D * nbar > alpha_max."""
        with pytest.raises(ValidationError):
            ProtocolParams(nbar=1e-3, eps=0.1, D=1000, simplified_regime=True)

    def test_params_derive_n(self):
        """Test that N is M * D."""
        params = ProtocolParams(nbar=0.0, eps=0.1, D=16, M=8)

        assert params.N == 128
        assert params.p_click == 0.0
        assert ProtocolParams(nbar=1e-4, eps=0.1, D=16).N is None

    def test_params_carry_no_cutoff(self):
        """Test the Fock cutoff belongs to oracle calls, not protocol parameters."""
        assert "cutoff" not in ProtocolParams.model_fields


class TestOptimizer:
    """Tests for optimize_block_size."""

    def setup_method(self):
        reset_config()

    def test_optimum_at_low_noise(self):
        """Test the optimum at nbar = 1e-6, eps = 0.1."""
        result = optimize_block_size(1e-6, 0.1)

        assert result.D_opt == 100_000
        assert result.expanding
        assert result.analysis.net_bits == pytest.approx(4.61, abs=0.01)
        assert result.analysis.condition_exact

    def test_no_expansion_at_high_noise(self):
        """Test the infeasible corner nbar = 1e-2, eps = 0.001."""
        result = optimize_block_size(1e-2, 0.001)

        assert not result.expanding
        assert result.status == "no expanding configuration"
        assert result.analysis.net_bits < 0.0

    def test_empty_search_range(self):
        """Test that no D >= 2 fits when nbar > alpha_max / 2."""
        result = optimize_block_size(0.08, 0.1)

        assert result.D_opt == 1
        assert not result.expanding
        assert result.analysis.produced_bits == 0.0

    def test_target_needs_less_than_one_mode(self):
        """Test nbar = 30, eps = 0.4, where N = 1/(nbar eps^2) < 1."""
        result = optimize_block_size(30.0, 0.4)

        assert result.D_opt == 1
        assert not result.expanding
        assert result.status == "no expanding configuration"
        assert result.analysis.N == pytest.approx(1.0 / (30.0 * 0.16), rel=1e-9)
        assert result.analysis.M == 1.0
        assert result.analysis.consumed_bits == 0.0
        assert result.analysis.net_bits == 0.0

    def test_explicit_block_beyond_required_modes(self):
        """Test that an explicit D above N is still a domain error."""
        with pytest.raises(DomainError):
            expansion_condition_exact(ProtocolParams(nbar=30.0, eps=0.4, D=1))

    def test_optimum_is_best_integer_near_itself(self):
        """Test that no neighbouring block size does better."""
        result = optimize_block_size(3e-4, 0.05)
        best = result.analysis.net_bits
        for D in range(max(2, result.D_opt - 20), result.D_opt + 21):
            if D * 3e-4 > 0.1:
                break
            other = expansion_condition_exact(ProtocolParams(nbar=3e-4, eps=0.05, D=D))
            assert other.net_bits <= best + 1e-12

    def test_optimum_respects_regime(self):
        """Test D* nbar <= alpha_max."""
        for nbar in np.geomspace(1e-7, 1e-2, 11):
            result = optimize_block_size(float(nbar), 0.01)
            assert result.analysis.regime_ok

    def test_optimum_does_not_depend_on_eps(self):
        """Test that curves for different eps are rigid shifts."""
        high = optimize_block_size(1e-5, 0.1)
        low = optimize_block_size(1e-5, 0.01)

        assert high.D_opt == low.D_opt
        assert high.analysis.net_bits - low.analysis.net_bits == pytest.approx(
            2 * math.log2(10), abs=1e-9
        )

    def test_agrees_with_approximation(self):
        """Test |exact - approximate| < 1 bit where the approximation applies."""
        for nbar in np.geomspace(1e-7, 1e-4, 13):
            for eps in (0.1, 0.01, 0.001):
                result = optimize_block_size(float(nbar), eps)
                alpha = result.D_opt * float(nbar)
                if alpha > 0.1:
                    continue
                approx = approx_net_key(alpha, float(nbar), eps)
                assert abs(result.analysis.net_bits - approx) < 1.0

    def test_alpha_max_from_environment(self, monkeypatch):
        """Test that COVERT_ALPHA_MAX caps the search."""
        monkeypatch.setenv("COVERT_ALPHA_MAX", "0.01")
        reset_config()

        result = optimize_block_size(1e-6, 0.1)

        assert result.D_opt <= 10_000
        assert result.analysis.alpha_max == 0.01

    def test_power_of_two_layout(self):
        """Test rounding the optimum to a session layout."""
        analysis = optimize_block_size(1e-6, 0.1).analysis
        D, M = power_of_two_layout(analysis)

        assert (D, M) == (65536, 2048)
        assert D * M >= analysis.N
