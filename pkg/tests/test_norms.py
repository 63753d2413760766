"""
Test cases for the Luxembourg norm, ball norms and the atomic quasi-norm
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st
from scipy import optimize

from app.core.exceptions import ConvergenceError, PreconditionError
from app.schemas.lab import Preset
from app.services.grid import Ball, GridFunction
from app.services.norms import AtomEntry
from app.services.presets import build_preset


@pytest.fixture(scope="module")
def indicator01(grid):
    return build_preset(Preset.INDICATOR01, grid)


@pytest.fixture(scope="module")
def indicator02(grid):
    return build_preset(Preset.INDICATOR02, grid)


class TestLuxembourgNorm:
    """Test cases for the Luxembourg quasi-norm"""

    def test_unit_interval(self, norm_service, identity_gf, indicator01):
        """||chi_[0,1]|| = 1 under phi = t"""
        result = norm_service.luxembourg_norm(indicator01, identity_gf)
        assert result.norm == pytest.approx(1.0, rel=1e-6)

    def test_square_root_growth(self, norm_service, sqrt_gf, indicator02):
        """||chi_[0,2]|| = 4 under phi = t^1/2"""
        result = norm_service.luxembourg_norm(indicator02, sqrt_gf)
        assert result.norm == pytest.approx(4.0, rel=1e-6)

    def test_zero(self, norm_service, identity_gf, grid):
        assert norm_service.luxembourg_norm(GridFunction.zeros(grid), identity_gf).norm == 0.0

    def test_modular_at_the_norm(self, norm_service, theta_gf, bump):
        """The modular equals 1 at the computed norm"""
        norm = norm_service.luxembourg_norm(bump, theta_gf).norm
        assert norm_service.modular(bump, theta_gf, norm) == pytest.approx(1.0, abs=1e-6)

    def test_off_level_root_is_refused(self, norm_service, theta_gf, bump, mocker):
        """A root whose modular misses 1 by more than the functional tolerance fails"""
        solve = optimize.bisect

        def shifted(*args, **kwargs):
            root, info = solve(*args, **kwargs)
            return root * 1.01, info

        mocker.patch("app.services.norms.optimize.bisect", side_effect=shifted)
        with pytest.raises(ConvergenceError, match="unit level"):
            norm_service.luxembourg_norm(bump, theta_gf)

    @hsettings(max_examples=15, deadline=None)
    @given(st.floats(min_value=0.1, max_value=10.0))
    def test_homogeneous(self, norm_service, sqrt_gf, bump, c):
        """||c f|| = c ||f||"""
        base = norm_service.luxembourg_norm(bump, sqrt_gf).norm
        scaled = norm_service.luxembourg_norm(bump * c, sqrt_gf).norm
        assert scaled == pytest.approx(c * base, rel=1e-7)


class TestIndicatorNorm:
    """Test cases for ||chi_B||"""

    def test_classical_case_is_node_measure(self, norm_service, identity_gf, grid, unit_ball):
        """Under phi = t the norm of chi_B is its node measure"""
        expected = grid.ball_measure(unit_ball)
        assert norm_service.indicator_norm(identity_gf, unit_ball) == pytest.approx(expected, rel=1e-7)

    def test_degenerate_ball(self, norm_service, identity_gf):
        """Balls without nodes are refused"""
        with pytest.raises(PreconditionError, match="degenerate ball"):
            norm_service.indicator_norm(identity_gf, Ball((1.0 / 128,), 1e-5))


class TestBallNorm:
    """Test cases for L^q_phi(B)"""

    @pytest.mark.parametrize("q", [1.5, 2.0, 4.0, math.inf])
    def test_indicator_has_norm_one(self, norm_service, theta_gf, grid, unit_ball, q):
        """chi_B has norm 1 in L^q_phi(B) for every q"""
        f = build_preset(Preset.INDICATOR_BALL, grid, unit_ball)
        assert norm_service.lq_phi_ball_norm(f, theta_gf, unit_ball, q).norm == pytest.approx(1.0, rel=1e-12)

    def test_witness_on_t_grid(self, norm_service, theta_gf, bump):
        """A finite order reports the t attaining the sup"""
        result = norm_service.lq_phi_ball_norm(bump, theta_gf, Ball((0.0,), 2.0), 2.0)
        assert result.witness_t is not None
        assert 1e-4 <= result.witness_t <= 1e4

    def test_not_supported(self, norm_service, identity_gf, bump, unit_ball):
        with pytest.raises(PreconditionError, match="not supported"):
            norm_service.lq_phi_ball_norm(bump, identity_gf, unit_ball, 2.0)

    def test_order_must_exceed_one(self, norm_service, identity_gf, bump):
        with pytest.raises(PreconditionError):
            norm_service.lq_phi_ball_norm(bump, identity_gf, Ball((0.0,), 2.0), 1.0)


class TestLambdaQ:
    """Test cases for the atomic quasi-norm"""

    def test_empty_list(self, norm_service, identity_gf):
        assert norm_service.lambda_q([], identity_gf).norm == 0.0

    def test_normalized_indicator(self, norm_service, identity_gf, grid, unit_ball):
        """chi_B / |B| has Lambda = 1 under phi = t"""
        f = build_preset(Preset.INDICATOR_BALL, grid, unit_ball)
        entry = AtomEntry(f / grid.ball_measure(unit_ball), unit_ball)
        assert norm_service.lambda_q([entry], identity_gf).norm == pytest.approx(1.0, rel=1e-7)

    def test_order_above_one(self, bump, unit_ball):
        with pytest.raises(PreconditionError):
            AtomEntry(bump, unit_ball, q=1.0)

    def test_size_sum_dominates(self, norm_service, identity_gf, grid):
        """sum ||b_j|| ||chi_B_j|| is at least Lambda for phi = t"""
        entries = []
        for center in (-1.5, 1.5):
            ball = Ball((center,), 0.5)
            f = build_preset(Preset.INDICATOR_BALL, grid, ball)
            entries.append(AtomEntry(f, ball))
        assert norm_service.size_sum_constant(entries, identity_gf) >= 1.0 - 1e-7

    def test_power_sum_ratio(self, norm_service, sqrt_gf, grid):
        """The power-sum ratio is finite and positive"""
        ball = Ball((0.0,), 0.5)
        atom = AtomEntry(build_preset(Preset.INDICATOR_BALL, grid, ball), ball)
        ratio = norm_service.power_sum_ratio([1.0, 2.0], [atom, atom], sqrt_gf, 0.5)
        assert 0.0 < ratio < math.inf

    def test_lphi_constant(self, norm_service, identity_gf, grid, unit_ball):
        """A single normalized indicator has ||b|| / Lambda = 1 under phi = t"""
        f = build_preset(Preset.INDICATOR_BALL, grid, unit_ball)
        entry = AtomEntry(f / grid.ball_measure(unit_ball), unit_ball)
        assert norm_service.lphi_lambda_constant([entry], identity_gf) == pytest.approx(1.0, rel=1e-6)
