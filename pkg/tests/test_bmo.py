"""
Test cases for mean-oscillation norms, the duality pairing and the multiplier check
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st

from app.core.exceptions import PreconditionError
from app.schemas.lab import Preset
from app.services.bmo import BmoService
from app.services.grid import Ball, GridFunction
from app.services.norms import AtomEntry
from app.services.presets import build_preset


@pytest.fixture(scope="module")
def balanced_atom(grid, unit_ball, identity_gf, norm_service):
    return build_preset(Preset.BALANCED_ATOM, grid, unit_ball, identity_gf, norm_service)


class TestBmoPhiNorm:
    """Test cases for the BMO^phi norm"""

    def test_constant_has_zero_norm(self, bmo_service, identity_gf, grid, coarse_family):
        f = GridFunction(grid, np.full(grid.shape, 3.0))
        report = bmo_service.bmo_phi_norm(f, identity_gf, coarse_family)
        assert report.norm == 0.0
        assert report.witness_ball is None

    def test_sign_function(self, bmo_service, identity_gf, sign_function, coarse_family):
        """sign(x) has classical BMO norm 1, attained on balls centered at 0"""
        report = bmo_service.bmo_phi_norm(sign_function, identity_gf, coarse_family)
        assert report.norm == pytest.approx(1.0, rel=1e-6)
        assert report.witness_ball is not None
        assert len(report.table) == len(coarse_family)

    def test_shift_invariant(self, bmo_service, sqrt_gf, bump, coarse_family):
        """Adding a constant leaves the norm unchanged"""
        base = bmo_service.bmo_phi_norm(bump, sqrt_gf, coarse_family).norm
        shifted = bmo_service.bmo_phi_norm(bump + 5.0, sqrt_gf, coarse_family).norm
        assert shifted == pytest.approx(base, rel=1e-9)

    def test_double_integral_is_equivalent(self, bmo_service, dipole, coarse_family):
        """Per ball, osc <= double oscillation <= 2 osc"""
        for ball in coarse_family:
            osc = bmo_service.oscillation(dipole, ball)
            double = bmo_service.double_oscillation(dipole, ball)
            assert osc - 1e-12 <= double <= 2.0 * osc + 1e-12

    def test_degenerate_ball(self, bmo_service, bump):
        with pytest.raises(PreconditionError, match="degenerate ball"):
            bmo_service.oscillation(bump, Ball((1.0 / 128,), 1e-5))


class TestTruncation:
    """Test cases for bounded truncation"""

    def test_clamps(self, sign_function, bmo_service):
        truncated = bmo_service.truncate(sign_function * 3.0, 1.0)
        np.testing.assert_array_equal(truncated.samples, sign_function.samples)

    def test_level_must_be_positive(self, bmo_service, sign_function):
        with pytest.raises(PreconditionError):
            bmo_service.truncate(sign_function, 0.0)

    @hsettings(max_examples=10, deadline=None)
    @given(st.floats(min_value=0.05, max_value=2.0))
    def test_truncation_is_bounded(self, bmo_service, identity_gf, dipole, coarse_family, n):
        """Clamping never more than doubles the norm and never raises the double-integral form"""
        f = dipole * 4.0
        truncated = bmo_service.truncate(f, n)
        base = bmo_service.bmo_phi_norm(f, identity_gf, coarse_family).norm
        clamped = bmo_service.bmo_phi_norm(truncated, identity_gf, coarse_family).norm
        assert clamped <= 2.0 * base + 1e-12
        double_base = bmo_service.double_integral_norm(f, identity_gf, coarse_family).norm
        double_clamped = bmo_service.double_integral_norm(truncated, identity_gf, coarse_family).norm
        assert double_clamped <= double_base * (1.0 + 1e-12) + 1e-12


class TestBmoLogNorm:
    """Test cases for BMO^log"""

    @pytest.mark.parametrize("weight", ["radius", "volume"])
    def test_sign_function(self, bmo_service, sign_function, coarse_family, weight):
        report = bmo_service.bmo_log_norm(sign_function, coarse_family, weight)
        assert 0.0 < report.norm < math.inf
        assert report.kind == "log"

    def test_weights_are_equivalent(self, coarse_family):
        constant = BmoService.log_weight_equivalence(coarse_family)
        assert 1.0 <= constant < math.inf

    def test_unknown_weight(self, bmo_service, sign_function, coarse_family):
        with pytest.raises(PreconditionError, match="unknown log weight"):
            bmo_service.bmo_log_norm(sign_function, coarse_family, "area")


class TestPairing:
    """Test cases for the atom pairing"""

    def test_constant_pairs_to_zero(self, bmo_service, balanced_atom, unit_ball, grid):
        """Atoms with vanishing mean annihilate constants"""
        constant = GridFunction(grid, np.full(grid.shape, 2.0))
        value = bmo_service.pairing(constant, [AtomEntry(balanced_atom, unit_ball)])
        assert value == pytest.approx(0.0, abs=1e-12)

    def test_sign_test_atom(self, bmo_service, bump, identity_gf, norm_service):
        """<b, a> equals half the weighted oscillation on the ball"""
        ball = Ball((0.5,), 1.0)
        atom = bmo_service.sign_test_atom(bump, ball, identity_gf)
        value = bmo_service.pairing(bump, [AtomEntry(atom, ball)])
        expected = 0.5 * bmo_service.oscillation(bump, ball) / norm_service.indicator_norm(identity_gf, ball)
        assert value == pytest.approx(expected, rel=1e-9)

    def test_complex_pairing(self, bmo_service, balanced_atom, unit_ball, dipole, bump):
        entries = [AtomEntry(balanced_atom, unit_ball)]
        value = bmo_service.pairing_complex(dipole, bump, entries)
        assert value.real == pytest.approx(bmo_service.pairing(dipole, entries))
        assert value.imag == pytest.approx(bmo_service.pairing(bump, entries))

    def test_pairing_ratio(self, bmo_service, balanced_atom, unit_ball, identity_gf, dipole, coarse_family):
        """|<b, f>| / (||b||_BMO Lambda) is finite"""
        ratio = bmo_service.pairing_ratio(dipole, [AtomEntry(balanced_atom, unit_ball)], identity_gf, coarse_family)
        assert 0.0 < ratio < math.inf


class TestMultiplier:
    """Test cases for the pointwise multiplier check"""

    def test_constant_multiplier(self, bmo_service, grid, sign_function, bump, coarse_family):
        """g = c gives M = |c| and R = |c|"""
        g = GridFunction(grid, np.full(grid.shape, -2.0))
        report = bmo_service.multiplier_check(g, [("sign", sign_function), ("bump", bump)], coarse_family)
        assert report.M == pytest.approx(2.0)
        assert report.bmo_log == 0.0
        assert report.R == pytest.approx(2.0, rel=1e-9)
        assert report.ratio == pytest.approx(1.0, rel=1e-9)

    def test_constant_corpus(self, bmo_service, grid, bump, coarse_family):
        """Members with zero BMO norm are skipped; a corpus of only those is refused"""
        ones = GridFunction(grid, np.ones(grid.shape))
        with pytest.raises(PreconditionError, match="corpus degenerate"):
            bmo_service.multiplier_check(bump, [("one", ones)], coarse_family)

    def test_skipped_member_reported(self, bmo_service, grid, bump, sign_function, coarse_family):
        ones = GridFunction(grid, np.ones(grid.shape))
        report = bmo_service.multiplier_check(bump, [("one", ones), ("sign", sign_function)], coarse_family)
        assert [m.skipped for m in report.members] == [True, False]
        assert report.R > 0
