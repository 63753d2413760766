"""
Pytest configuration and fixtures
"""

import pytest

from app.core.config import settings
from app.schemas.lab import Preset
from app.services.atoms import AtomsService
from app.services.bmo import BmoService
from app.services.czd import CzdService
from app.services.grid import Ball, BallFamily, Grid
from app.services.growth import GrowthService, log_theta, power
from app.services.maximal import MaximalService
from app.services.presets import build_preset


@pytest.fixture(scope="session")
def lab_config():
    """Settings sized for desk-scale tests"""
    return settings.model_copy(
        update={"level_depth": 12, "seminorm_samples": 1001, "type_sample_budget": 1000}
    )


@pytest.fixture(scope="session")
def grid():
    """1-D grid on [-4, 4] with spacing 1/128"""
    return Grid(1, ((-4.0, 4.0),), 1024)


@pytest.fixture(scope="session")
def small_grid():
    """Coarser 1-D grid for the multi-level pipelines"""
    return Grid(1, ((-4.0, 4.0),), 512)


@pytest.fixture(scope="session")
def grid2d():
    """2-D grid on [-4, 4]^2"""
    return Grid(2, ((-4.0, 4.0), (-4.0, 4.0)), 64)


@pytest.fixture(scope="session")
def identity_gf():
    """phi(x, t) = t"""
    return power(0.0, 1.0)


@pytest.fixture(scope="session")
def sqrt_gf():
    """phi(x, t) = t^(1/2)"""
    return power(0.0, 0.5)


@pytest.fixture(scope="session")
def theta_gf():
    return log_theta()


@pytest.fixture(scope="session")
def unit_ball():
    return Ball((0.0,), 1.0)


@pytest.fixture(scope="session")
def growth_service(grid, lab_config):
    return GrowthService(grid, lab_config)


@pytest.fixture(scope="session")
def maximal_service(grid, lab_config):
    return MaximalService(grid, lab_config)


@pytest.fixture(scope="session")
def norm_service(maximal_service):
    return maximal_service.norms


@pytest.fixture(scope="session")
def czd_service(grid, lab_config, maximal_service):
    return CzdService(grid, lab_config, maximal_service)


@pytest.fixture(scope="session")
def atoms_service(small_grid, lab_config):
    return AtomsService(small_grid, lab_config)


@pytest.fixture(scope="session")
def grid_atoms_service(grid, lab_config, maximal_service, czd_service):
    """Atom service sharing the fine grid's maximal and CZ services"""
    return AtomsService(grid, lab_config, maximal_service, czd_service)


@pytest.fixture(scope="session")
def bmo_service(grid, lab_config, norm_service):
    return BmoService(grid, lab_config, norm_service)


@pytest.fixture(scope="session")
def dictionary(maximal_service):
    """Order-2 dictionary with six members"""
    return maximal_service.build_dictionary(m=2, count=6)


@pytest.fixture(scope="session")
def small_dictionary(atoms_service):
    return atoms_service.maximal.build_dictionary(m=2, count=6)


@pytest.fixture(scope="session")
def coarse_family(grid):
    return BallFamily.coarse(grid)


@pytest.fixture(scope="session")
def bump(grid):
    return build_preset(Preset.BUMP, grid)


@pytest.fixture(scope="session")
def dipole(grid):
    return build_preset(Preset.DIPOLE, grid)


@pytest.fixture(scope="session")
def sign_function(grid):
    return build_preset(Preset.SIGN, grid)


# Pytest configuration
def pytest_collection_modifyitems(config, items):
    """Mark every test unit unless it is already integration or cli"""
    for item in items:
        if not any(item.get_closest_marker(name) for name in ("integration", "cli")):
            item.add_marker(pytest.mark.unit)
