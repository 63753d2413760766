"""
Test cases for atomic decompositions and atom certification
"""

import math

import numpy as np
import pytest

from app.core.exceptions import NumericalError, PreconditionError
from app.schemas.lab import Preset
from app.services.atoms import AtomsService
from app.services.grid import Ball, BallFamily, GridFunction
from app.services.norms import AtomEntry
from app.services.presets import balanced_pattern, build_preset


@pytest.fixture(scope="module")
def small_bump(small_grid):
    return build_preset(Preset.BUMP, small_grid)


@pytest.fixture(scope="module")
def multilevel(atoms_service, identity_gf, small_bump, small_dictionary):
    return atoms_service.multilevel_decompose(small_bump, identity_gf, 0, small_dictionary, m_hat=0)


@pytest.fixture(scope="module")
def balanced_atom(grid, unit_ball, identity_gf, norm_service):
    return build_preset(Preset.BALANCED_ATOM, grid, unit_ball, identity_gf, norm_service)


class TestMultilevelDecomposition:
    """Test cases for the multi-level atomic decomposition"""

    def test_reconstruction(self, multilevel, small_bump):
        """The pieces sum back to f"""
        assert multilevel.reconstruction_residual <= 1e-8
        rebuilt = multilevel.total()
        assert (rebuilt - small_bump).sup_norm() <= 1e-8 * small_bump.sup_norm()

    def test_level_pieces(self, multilevel):
        """Level pieces sit in their balls and have vanishing mean"""
        levels = [p for p in multilevel.pieces if p.kind == "level"]
        assert levels
        assert all(p.support_ok for p in levels)
        assert multilevel.constants["max_relative_moment"] <= 1e-6

    def test_level_range(self, multilevel, lab_config):
        """Levels span at most level_depth heights"""
        k_min, k_max = multilevel.k_range
        assert 0 < k_max - k_min <= lab_config.level_depth
        assert all(k_min <= p.level < k_max for p in multilevel.pieces if p.kind == "level")

    def test_measured_constants(self, multilevel):
        """Quasi-norm and cross-projection constants are positive and finite"""
        assert multilevel.source_norm > 0
        assert 0 < multilevel.lambda_inf < math.inf
        assert multilevel.constants["cross_projection_sum"] <= 1e-8
        assert np.isfinite(list(multilevel.constants.values())).all()

    def test_zero_input(self, atoms_service, identity_gf, small_grid, small_dictionary):
        """Zero has the empty decomposition"""
        dec = atoms_service.multilevel_decompose(
            GridFunction.zeros(small_grid), identity_gf, 0, small_dictionary
        )
        assert dec.pieces == []
        assert dec.k_range is None

    def test_degree_below_m(self, atoms_service, sqrt_gf, small_bump, small_dictionary):
        with pytest.raises(PreconditionError, match="degree below"):
            atoms_service.multilevel_decompose(small_bump, sqrt_gf, 0, small_dictionary, m_hat=1)

    def test_box_margin(self, atoms_service, identity_gf, small_grid, small_dictionary):
        """Inputs reaching the box faces are refused"""
        sign = build_preset(Preset.SIGN, small_grid)
        with pytest.raises(PreconditionError, match="box margin"):
            atoms_service.multilevel_decompose(sign, identity_gf, 0, small_dictionary)

    @pytest.mark.slow
    def test_first_degree(self, atoms_service, sqrt_gf, small_grid, small_dictionary):
        """Degree-1 decomposition of a dipole under t^1/2"""
        dipole = build_preset(Preset.DIPOLE, small_grid)
        dec = atoms_service.multilevel_decompose(dipole, sqrt_gf, 1, small_dictionary, m_hat=1)
        assert dec.reconstruction_residual <= 1e-8
        assert dec.constants["max_relative_moment"] <= 1e-6


class TestFiniteDecomposition:
    """Test cases for finite decompositions of normalized inputs"""

    @pytest.fixture(scope="class")
    def finite(self, atoms_service, identity_gf, small_grid, small_dictionary, unit_ball):
        f = balanced_pattern(small_grid, unit_ball)
        return atoms_service.finite_decompose(
            f, identity_gf, 2.0, 0, small_dictionary, unit_ball, m_hat=0, q_floor=1.0
        )

    def test_g_is_a_certified_atom(self, finite):
        """g / C_g passes every clause on the doubled ball"""
        assert finite.g is not None
        assert finite.certificate.passed
        assert finite.g.ball.radius == pytest.approx(2.0)

    def test_truncation_reaches_epsilon(self, finite, lab_config):
        """The remainder after truncation is below epsilon"""
        assert finite.remainder_norm <= lab_config.truncation_epsilon
        assert finite.decay_curve[-1] == (finite.truncation_k, finite.remainder_norm)

    def test_tail_levels_above_k_prime(self, finite):
        assert all(p.level > finite.k_prime for p in finite.tail)
        assert all(p.kind == "l" for p in finite.tail)

    def test_quasi_norm(self, finite):
        assert finite.normalization > 0
        assert 0 < finite.quasi_norm < math.inf

    def test_order_must_exceed_floor(self, atoms_service, identity_gf, small_grid, small_dictionary, unit_ball):
        f = balanced_pattern(small_grid, unit_ball)
        with pytest.raises(PreconditionError, match="atom order"):
            atoms_service.finite_decompose(f, identity_gf, 1.0, 0, small_dictionary, unit_ball, q_floor=1.0)
        with pytest.raises(PreconditionError, match="atom order"):
            atoms_service.finite_decompose(f, identity_gf, math.inf, 0, small_dictionary, unit_ball)

    def test_support_outside_ball(self, atoms_service, identity_gf, small_bump, small_dictionary, unit_ball):
        with pytest.raises(PreconditionError, match="not supported"):
            atoms_service.finite_decompose(small_bump, identity_gf, 2.0, 0, small_dictionary, unit_ball)

    def test_zero_input(self, atoms_service, identity_gf, small_grid, small_dictionary, unit_ball):
        finite = atoms_service.finite_decompose(
            GridFunction.zeros(small_grid), identity_gf, 2.0, 0, small_dictionary, unit_ball
        )
        assert finite.pieces == []
        assert finite.quasi_norm == 0.0


class TestCertification:
    """Test cases for atom certificates"""

    def test_balanced_atom_passes(self, grid_atoms_service, balanced_atom, unit_ball, identity_gf):
        certificate = grid_atoms_service.certify_atom(balanced_atom, unit_ball, identity_gf, math.inf, 0)
        assert certificate.passed
        assert certificate.measured_norm == pytest.approx(certificate.bound)

    def test_finite_order(self, grid_atoms_service, balanced_atom, unit_ball, identity_gf):
        """The L^2_phi(B) norm of a balanced atom also meets the bound"""
        certificate = grid_atoms_service.certify_atom(balanced_atom, unit_ball, identity_gf, 2.0, 0, q_floor=1.0)
        assert certificate.passed
        assert certificate.passes["order"]

    def test_indicator_fails_moments(self, grid_atoms_service, norm_service, grid, unit_ball, identity_gf):
        """A normalized indicator has nonzero mean"""
        f = build_preset(Preset.INDICATOR_BALL, grid, unit_ball)
        a = f / norm_service.indicator_norm(identity_gf, unit_ball)
        certificate = grid_atoms_service.certify_atom(a, unit_ball, identity_gf, math.inf, 0)
        assert not certificate.passed
        assert certificate.passes == {"support": True, "size": True, "moments": False}

    def test_double_fails_size(self, grid_atoms_service, balanced_atom, unit_ball, identity_gf):
        certificate = grid_atoms_service.certify_atom(balanced_atom * 2.0, unit_ball, identity_gf, math.inf, 0)
        assert not certificate.passes["size"]
        assert certificate.passes["moments"]

    def test_wrong_ball_fails_support(self, grid_atoms_service, balanced_atom, identity_gf):
        """Failure is reported, not raised"""
        ball = Ball((2.0,), 0.5)
        certificate = grid_atoms_service.certify_atom(balanced_atom, ball, identity_gf, 2.0, 0)
        assert not certificate.passes["support"]
        assert math.isinf(certificate.measured_norm)

    def test_log_atom(self, grid_atoms_service, grid, unit_ball):
        """Pattern times the log bound is a log-atom; twice that is not"""
        a = balanced_pattern(grid, unit_ball) * AtomsService.log_atom_bound(unit_ball)
        assert grid_atoms_service.certify_log_atom(a, unit_ball).passed
        assert not grid_atoms_service.certify_log_atom(a * 2.0, unit_ball).passes["size"]


class TestLogAtomConversion:
    """Test cases for the atom to log-atom conversion constant"""

    @pytest.mark.parametrize("gf_name", ["identity_gf", "theta_gf"])
    def test_constant_is_bounded(self, grid_atoms_service, grid, gf_name, request):
        gf = request.getfixturevalue(gf_name)
        family = BallFamily.random(grid, 40, seed=1)
        constant = grid_atoms_service.log_atom_conversion_constant(gf, family)
        assert 1.0 <= constant <= 16.0

    def test_cap(self, grid, lab_config, maximal_service, czd_service, identity_gf, coarse_family):
        """Constants above the cap are numerical failures"""
        strict = lab_config.model_copy(update={"log_atom_c_max": 1.0})
        service = AtomsService(grid, strict, maximal_service, czd_service)
        with pytest.raises(NumericalError):
            service.log_atom_conversion_constant(identity_gf, coarse_family)


class TestConverse:
    """Test cases for the converse quasi-norm bound"""

    def test_reconstruct_and_bound(self, grid_atoms_service, balanced_atom, unit_ball, identity_gf, dictionary):
        total, ratio = grid_atoms_service.reconstruct_and_bound(
            [AtomEntry(balanced_atom, unit_ball)], identity_gf, dictionary
        )
        np.testing.assert_array_equal(total.samples, balanced_atom.samples)
        assert 0.0 < ratio < math.inf

    def test_empty_list(self, grid_atoms_service, identity_gf, dictionary):
        total, ratio = grid_atoms_service.reconstruct_and_bound([], identity_gf, dictionary)
        assert total.is_zero()
        assert ratio == 0.0

    def test_level_set_sum(self, grid_atoms_service, identity_gf, bump, dictionary):
        ratio = grid_atoms_service.level_set_sum_ratio(bump, identity_gf, dictionary, 1.0)
        assert 0.0 < ratio < math.inf

    def test_smoothness_below_m(self, grid_atoms_service, balanced_atom, unit_ball, identity_gf, bump, dictionary):
        """Both converse checks refuse a dictionary of order below m(phi)"""
        with pytest.raises(PreconditionError, match="smoothness"):
            grid_atoms_service.reconstruct_and_bound(
                [AtomEntry(balanced_atom, unit_ball)], identity_gf, dictionary, m_hat=3
            )
        with pytest.raises(PreconditionError, match="smoothness"):
            grid_atoms_service.level_set_sum_ratio(bump, identity_gf, dictionary, 1.0, m_hat=3)
