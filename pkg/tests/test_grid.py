"""
Test cases for grids, balls, sampled functions and CSV input
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st

from app.core.exceptions import InputFormatError, PreconditionError
from app.schemas.lab import Preset
from app.services.grid import (
    Ball,
    BallFamily,
    Grid,
    GridFunction,
    Patch,
    check_margin,
    format_csv,
    integrate,
    load_csv,
    moment,
    mollify,
    multi_indices,
)
from app.services.presets import build_preset


class TestBall:
    """Test cases for balls"""

    def test_volume(self):
        """Analytic measure in one and two dimensions"""
        assert Ball((0.0,), 1.5).volume == 3.0
        assert Ball((0.0, 0.0), 1.0).volume == pytest.approx(math.pi)

    def test_contains_is_closed(self):
        """Points on the sphere belong to the ball"""
        ball = Ball((0.0,), 1.0)
        assert ball.contains(np.array([[1.0], [-1.0], [0.5]])).all()
        assert not ball.contains(np.array([[1.01]])).any()

    @pytest.mark.parametrize("radius", [0.0, -1.0, float("inf")])
    def test_invalid_radius(self, radius):
        """Radius must be positive and finite"""
        with pytest.raises(PreconditionError):
            Ball((0.0,), radius)


class TestGrid:
    """Test cases for the uniform grid"""

    def test_cell_centres(self, grid):
        """Nodes sit at cell centres"""
        assert grid.axes[0][0] == pytest.approx(-4.0 + 1.0 / 256)
        assert grid.min_spacing == pytest.approx(1.0 / 128)
        assert grid.points.shape == (1024, 1)

    def test_resolution_must_be_power_of_two(self):
        """Non power-of-two resolutions are rejected"""
        with pytest.raises(PreconditionError):
            Grid(1, ((-1.0, 1.0),), 1000)

    def test_ball_measure_counts_nodes(self, grid):
        """Node measure of [-1, 1] is exactly 2"""
        assert grid.ball_measure(Ball((0.0,), 1.0)) == pytest.approx(2.0, abs=1e-12)

    def test_window_covers_ball(self, grid):
        """Every node of the ball lies in its index window"""
        ball = Ball((0.3,), 0.7)
        lo, hi = grid.window(ball)
        inside = np.flatnonzero(grid.ball_mask(ball))
        assert lo[0] <= inside.min() and inside.max() < hi[0]


class TestGridFunction:
    """Test cases for sampled functions"""

    def test_rejects_non_finite(self, grid):
        """NaN samples are a precondition violation"""
        samples = np.zeros(grid.shape)
        samples[3] = np.nan
        with pytest.raises(PreconditionError):
            GridFunction(grid, samples)

    def test_rejects_wrong_size(self, grid):
        """Sample count must match the node count"""
        with pytest.raises(InputFormatError):
            GridFunction(grid, np.zeros(10))

    def test_samples_are_read_only(self, bump):
        """Stored samples cannot be modified in place"""
        with pytest.raises(ValueError):
            bump.samples[0] = 1.0

    def test_indicator_integral(self, grid):
        """Integral of the indicator of [0, 1] is 1"""
        f = build_preset(Preset.INDICATOR01, grid)
        assert integrate(f) == pytest.approx(1.0, abs=1e-12)

    def test_patch_matches_full_function(self, grid, bump):
        """A patch holding a window integrates like the full function"""
        lo, hi = grid.window(Ball((0.0,), 2.0))
        patch = Patch(grid, lo, bump.samples[grid.window_slices(lo, hi)])
        assert patch.integral() == pytest.approx(integrate(bump), rel=1e-12)
        np.testing.assert_array_equal(patch.to_function().samples, bump.samples)


class TestMoments:
    """Test cases for moments and multi-indices"""

    def test_graded_order(self):
        """Multi-indices are listed by total degree"""
        assert multi_indices(1, 2) == [(0,), (1,), (2,)]
        assert multi_indices(2, 1) == [(0, 0), (1, 0), (0, 1)]

    def test_odd_moment_of_bump_vanishes(self, bump):
        """The centered bump has zero first moment"""
        assert abs(moment(bump, (1,))) < 1e-12

    def test_order_above_limit(self, bump):
        """Moments above s_max are refused"""
        with pytest.raises(PreconditionError):
            moment(bump, (5,), s_max=4)


class TestMollify:
    """Test cases for mollification"""

    @hsettings(max_examples=10, deadline=None)
    @given(st.floats(min_value=0.01, max_value=0.5))
    def test_preserves_integral(self, t):
        """Unit-mass kernels keep the integral of a compactly supported input"""
        grid = Grid(1, ((-4.0, 4.0),), 1024)
        f = build_preset(Preset.BUMP, grid)
        assert integrate(mollify(f, t)) == pytest.approx(integrate(f), rel=1e-10)

    def test_scale_below_resolution(self, bump):
        """Scales under one cell are rejected"""
        with pytest.raises(PreconditionError, match="scale below resolution"):
            mollify(bump, 1e-4)


class TestMargin:
    """Test cases for the box-margin check"""

    def test_bump_is_inside(self, bump):
        check_margin(bump, 0.1)

    def test_sign_touches_the_boundary(self, sign_function):
        """Functions reaching the box faces are refused"""
        with pytest.raises(PreconditionError, match="box margin"):
            check_margin(sign_function, 0.1)


class TestCsv:
    """Test cases for CSV input"""

    def test_round_trip(self, tmp_path, grid, dipole):
        """Written samples are read back exactly"""
        path = tmp_path / "dipole.csv"
        path.write_text(format_csv(dipole))
        loaded = load_csv(path, grid)
        np.testing.assert_array_equal(loaded.samples, dipole.samples)

    def test_bad_header(self, tmp_path, grid):
        """Unexpected headers are malformed input"""
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n0,1\n")
        with pytest.raises(InputFormatError, match="header"):
            load_csv(path, grid)

    def test_incomplete_grid(self, tmp_path, grid):
        """Missing rows are malformed input"""
        path = tmp_path / "short.csv"
        path.write_text("x,value\n0.5,1\n")
        with pytest.raises(InputFormatError, match="incomplete grid"):
            load_csv(path, grid)


class TestBallFamily:
    """Test cases for ball families"""

    def test_coarse_family_contains_centered_balls(self, coarse_family):
        """Coarse families include balls centered at the origin"""
        assert any(abs(b.center[0]) < 1e-12 for b in coarse_family)
        assert len(coarse_family) == 72

    def test_random_family_is_seeded(self, grid):
        """Equal seeds give equal families"""
        first = BallFamily.random(grid, 20, seed=3)
        second = BallFamily.random(grid, 20, seed=3)
        assert first.digest() == second.digest()
        assert first.digest() != BallFamily.random(grid, 20, seed=4).digest()

    def test_empty_family(self):
        with pytest.raises(PreconditionError):
            BallFamily(()).require_nonempty()
