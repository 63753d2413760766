"""
Configuration settings for the Hardy space laboratory
"""

from pydantic_settings import BaseSettings
from typing import Optional


class Settings(BaseSettings):
    """Laboratory settings"""

    # Logging
    log_level: str = "INFO"
    log_file: Optional[str] = None

    # Execution
    threads: int = 1
    seed: int = 0

    # Shared t-grid for every sup-over-t quantity
    t_grid_min: float = 1e-4
    t_grid_max: float = 1e4
    t_grid_points: int = 64

    # Index estimation
    type_constant: float = 8.0
    lattice_denominator: int = 32
    p_lattice_max: float = 2.0
    q_lattice_max: float = 4.0
    type_sample_budget: int = 4096
    type_decades: float = 280.0
    type_s_points: int = 57
    aq_cap: float = 10.0
    regularize_tolerance: float = 1e-10

    # Root finding
    bisection_rtol: float = 1e-8
    functional_tolerance: float = 1e-6
    max_bracket_steps: int = 2000

    # Grid
    s_max: int = 4
    support_margin: float = 0.1

    # Maximal functions
    dictionary_size: int = 12
    dictionary_m: int = 2
    scale_fraction: float = 0.04
    seminorm_samples: int = 4001

    # Calderon-Zygmund decomposition
    gram_condition_cap: float = 1e8
    orthogonality_tolerance: float = 1e-8
    reconstruction_tolerance: float = 1e-8
    partition_tolerance: float = 1e-10

    # Atoms
    moment_tolerance: float = 1e-6
    size_tolerance: float = 1e-6
    level_depth: int = 40
    truncation_epsilon: float = 1e-6
    truncation_k_max: int = 1 << 16

    # BMO
    log_atom_c_max: float = 16.0

    class Config:
        env_file = ".env"
        env_prefix = "HARDY_LAB_"
        case_sensitive = False


# Global settings instance
settings = Settings()
