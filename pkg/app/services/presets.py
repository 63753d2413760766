"""
Built-in input functions shipped with the laboratory
"""

import logging
from typing import Optional

import numpy as np

from app.core.exceptions import PreconditionError
from app.schemas.lab import Preset
from app.services.grid import Ball, Grid, GridFunction, bump_profile
from app.services.growth import GrowthFunction
from app.services.norms import NormService

logger = logging.getLogger(__name__)


def default_ball(grid: Grid) -> Ball:
    """Ball at the box center with a quarter of the shortest box width"""
    return Ball(grid.center, 0.25 * float(grid.widths.min()))


def balanced_pattern(grid: Grid, ball: Ball) -> GridFunction:
    """
    Sign pattern on the ball: positive on the left half, negative on the right

    The larger half is scaled down so the node sum is zero and the sup is 1.
    """
    points = grid.points
    inside = ball.contains(points)
    left = inside & (points[..., 0] < ball.center[0])
    right = inside & ~left
    n_left, n_right = int(left.sum()), int(right.sum())
    if n_left == 0 or n_right == 0:
        raise PreconditionError("ball too small for a balanced pattern", ball=ball)
    samples = np.zeros(grid.shape)
    samples[left] = min(1.0, n_right / n_left)
    samples[right] = -min(1.0, n_left / n_right)
    return GridFunction(grid, samples)


def _box_indicator(grid: Grid, upper: float) -> GridFunction:
    points = grid.points
    inside = np.all((points >= 0.0) & (points <= upper), axis=-1)
    return GridFunction(grid, inside.astype(float))


def build_preset(
    preset: Preset,
    grid: Grid,
    ball: Optional[Ball] = None,
    gf: Optional[GrowthFunction] = None,
    norms: Optional[NormService] = None,
) -> GridFunction:
    """
    Sample a built-in function on the grid

    Args:
        preset: Preset name
        grid: Target grid
        ball: Ball for the ball-based presets; the default ball otherwise
        gf: Growth function, needed by balanced-atom
        norms: Norm service, needed by balanced-atom

    Returns:
        Sampled function
    """
    preset = Preset(preset)
    ball = ball or default_ball(grid)
    points = grid.points
    center = np.asarray(ball.center)
    r2 = np.sum((points - center) ** 2, axis=-1) / ball.radius ** 2

    if preset is Preset.INDICATOR01:
        return _box_indicator(grid, 1.0)
    if preset is Preset.INDICATOR02:
        return _box_indicator(grid, 2.0)
    if preset is Preset.ZERO:
        return GridFunction.zeros(grid)
    if preset is Preset.BUMP:
        return GridFunction(grid, bump_profile(r2))
    if preset is Preset.DIPOLE:
        offset = (points[..., 0] - center[0]) / ball.radius
        return GridFunction(grid, offset * bump_profile(r2))
    if preset is Preset.SIGN:
        return GridFunction(grid, np.sign(points[..., 0]))
    if preset is Preset.LOG_ABS:
        radius = np.sqrt(np.sum(points ** 2, axis=-1))
        return GridFunction(grid, np.log(np.maximum(radius, grid.min_spacing)))
    if preset is Preset.INDICATOR_BALL:
        return GridFunction(grid, ball.contains(points).astype(float))
    if preset is Preset.BALANCED_ATOM:
        if gf is None or norms is None:
            raise PreconditionError("balanced-atom needs a growth function")
        return balanced_pattern(grid, ball) / norms.indicator_norm(gf, ball)

    raise PreconditionError("unknown preset", preset=preset)
