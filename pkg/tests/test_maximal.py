"""
Test cases for the test dictionary and the maximal functions
"""

import math

import numpy as np
import pytest

from app.core.exceptions import PreconditionError
from app.services.grid import Ball, GridFunction, Patch
from app.services.maximal import bump_derivative


class TestBumpDerivatives:
    """Test cases for the closed-form bump derivatives"""

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_matches_finite_differences(self, k):
        """Closed forms agree with a central difference of the previous order"""
        y = np.linspace(-0.7, 0.7, 29)
        step = 1e-6
        numeric = (bump_derivative(k - 1, y + step) - bump_derivative(k - 1, y - step)) / (2 * step)
        np.testing.assert_allclose(bump_derivative(k, y), numeric, rtol=1e-5, atol=1e-5)

    def test_vanishes_outside(self):
        assert not np.any(bump_derivative(2, np.array([-1.0, 1.0, 1.5])))


class TestDictionary:
    """Test cases for dictionary construction"""

    def test_members_are_normalized(self, dictionary):
        """Every member has seminorm 1"""
        assert len(dictionary) == 6
        np.testing.assert_allclose(dictionary.seminorms, 1.0, rtol=1e-12)

    def test_default_scales_are_dyadic(self, dictionary, grid):
        """Scales start at two cells and double"""
        assert dictionary.scales[0] == pytest.approx(2.0 * grid.min_spacing)
        ratios = np.array(dictionary.scales[1:]) / np.array(dictionary.scales[:-1])
        np.testing.assert_allclose(ratios, 2.0)

    def test_longer_dictionaries_extend_shorter(self, maximal_service):
        """Generation order is deterministic"""
        short = maximal_service.build_dictionary(m=1, count=4)
        long = maximal_service.build_dictionary(m=1, count=7)
        assert [m.label for m in long.members[:4]] == [m.label for m in short.members]

    def test_scale_range(self, maximal_service, grid):
        """Explicit ranges must sit inside [cell width, box width]"""
        with pytest.raises(PreconditionError):
            maximal_service.dyadic_scales(grid.min_spacing / 4, 0.5)
        with pytest.raises(PreconditionError):
            maximal_service.dyadic_scales(0.5, 0.25)
        assert maximal_service.dyadic_scales(0.125, 0.5) == (0.125, 0.25, 0.5)

    def test_invalid_order(self, maximal_service):
        with pytest.raises(PreconditionError):
            maximal_service.build_dictionary(m=-1)


class TestGrandMaximal:
    """Test cases for the grand maximal function"""

    def test_zero(self, maximal_service, dictionary, grid):
        fstar = maximal_service.grand_maximal(GridFunction.zeros(grid), dictionary)
        assert fstar.is_zero()

    def test_nonnegative_and_local(self, maximal_service, dictionary, bump, grid):
        """f* vanishes beyond the support plus twice the largest scale"""
        fstar = maximal_service.grand_maximal(bump, dictionary)
        assert np.all(fstar.samples >= 0)
        reach = 2.0 + 2.0 * max(dictionary.scales) + 2.0 * grid.min_spacing
        far = np.abs(grid.axes[0]) > reach
        assert not np.any(fstar.samples[far])
        assert fstar.samples[np.abs(grid.axes[0]) < 1.0].min() > 0

    def test_positively_homogeneous(self, maximal_service, dictionary, dipole):
        """(c f)* = |c| f*"""
        base = maximal_service.grand_maximal(dipole, dictionary).samples
        scaled = maximal_service.grand_maximal(dipole * -3.0, dictionary).samples
        np.testing.assert_allclose(scaled, 3.0 * base, rtol=1e-10, atol=1e-12)

    def test_patch_matches_full_grid(self, maximal_service, dictionary, bump, grid):
        """The windowed computation reproduces the full one"""
        lo, hi = grid.window(Ball((0.0,), 2.0))
        patch = Patch(grid, lo, bump.samples[grid.window_slices(lo, hi)])
        local = maximal_service.grand_maximal_patch(patch, dictionary).to_function().samples
        full = maximal_service.grand_maximal(bump, dictionary).samples
        np.testing.assert_allclose(local, full, rtol=1e-9, atol=1e-12)


class TestHardyNorm:
    """Test cases for ||f*||_{L^phi}"""

    def test_dictionary_below_m(self, maximal_service, dictionary, identity_gf, bump):
        """A dictionary of order below m(phi) is refused"""
        with pytest.raises(PreconditionError, match="smoothness"):
            maximal_service.hphi_norm(bump, identity_gf, dictionary, m_hat=3)

    def test_positive_for_bump(self, maximal_service, dictionary, identity_gf, bump):
        """The Hardy norm is positive and finite for a bump"""
        result = maximal_service.hphi_norm(bump, identity_gf, dictionary, m_hat=0)
        assert 0.0 < result.norm < math.inf


class TestHardyLittlewood:
    """Test cases for the uncentered maximal function"""

    def test_bounds_grand_maximal(self, maximal_service, dictionary, bump, coarse_family):
        """f* <= C Mf with a finite measured C"""
        constant = maximal_service.domination_constant(bump, dictionary, coarse_family)
        assert 0.0 < constant < math.inf

    def test_constant_input(self, maximal_service, grid, coarse_family):
        """M of a constant is that constant on every covered node"""
        f = GridFunction(grid, np.full(grid.shape, 2.0))
        hl = maximal_service.hl_maximal(f, coarse_family).samples
        assert np.all((hl == 0.0) | np.isclose(hl, 2.0))

    def test_weighted_constants(self, maximal_service, identity_gf, bump, coarse_family):
        """Weighted maximal and average-power constants are finite"""
        assert maximal_service.weighted_maximal_constant(bump, identity_gf, 2.0, coarse_family) < math.inf
        assert 0.0 < maximal_service.average_power_constant(bump, identity_gf, 2.0, coarse_family) <= 1.0 + 1e-9
